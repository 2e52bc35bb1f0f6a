use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("incompatible geometry: {0}")]
    Geometry(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad magic: expected {expected}, found {found}")]
    BadMagic { expected: String, found: String },

    #[error("truncated input: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("dimension overflow: {0:?} does not fit in addressable memory")]
    DimensionOverflow(Vec<u64>),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("unknown element kind code {0}")]
    UnknownKind(u8),

    #[error("element kind mismatch: expected {expected:?}, found {found:?}")]
    KindMismatch {
        expected: crate::tensor::ElementKind,
        found: crate::tensor::ElementKind,
    },

    #[error("spike train is not cumulative at (b={b}, t={t}, c={c}, h={h}, w={w})")]
    NonCumulative {
        b: usize,
        t: usize,
        c: usize,
        h: usize,
        w: usize,
    },

    #[error("covariance is numerically rank deficient (smallest eigenvalue {smallest:e}, tolerance {tolerance:e}); use epsilon > 0")]
    RankDeficient { smallest: f64, tolerance: f64 },

    #[error("whitening model used before fit")]
    NotFitted,

    #[error("winner out of range: {0}")]
    WinnerOutOfRange(String),

    #[error("winner references STDP configuration {index} but the layer has {available}")]
    MissingConfig { index: usize, available: usize },

    #[error("winner channel {0} has no class in the target map")]
    UnmappedWinner(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the input data rather than the configuration.
    /// Configuration problems: malformed or inconsistent configs and
    /// unsupported mode combinations.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_) | Error::Unsupported(_) | Error::MissingConfig { .. })
    }

    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Data(_)
                | Error::BadMagic { .. }
                | Error::Truncated { .. }
                | Error::DimensionOverflow(_)
                | Error::UnsupportedVersion(_)
                | Error::UnknownKind(_)
                | Error::KindMismatch { .. }
                | Error::Io(_)
        )
    }
}
