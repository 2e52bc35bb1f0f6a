//! Versioned JSON network configuration and the shipped presets.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filters::{DogSpec, FilterBank, GaborSpec};
use crate::layers::PoolConfig;
use crate::learning::StdpConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FilterConfig {
    Log { radius: usize, stds: Vec<f32>, pad: usize },
    Dog { radius: usize, specs: Vec<DogSpec>, pad: usize },
    Gabor { radius: usize, specs: Vec<GaborSpec>, pad: usize },
}

impl FilterConfig {
    pub fn build(&self) -> Result<FilterBank> {
        match self {
            FilterConfig::Log { radius, stds, pad } => FilterBank::log(*radius, stds, *pad),
            FilterConfig::Dog { radius, specs, pad } => FilterBank::dog(*radius, specs, *pad),
            FilterConfig::Gabor { radius, specs, pad } => FilterBank::gabor(*radius, specs, *pad),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coding {
    Rank,
    Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformConfig {
    pub filter: Option<FilterConfig>,
    /// Values not strictly above this are zeroed before coding.
    pub threshold: f32,
    pub steps: usize,
    #[serde(default = "default_true")]
    pub sort: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WtaConfig {
    pub radius: usize,
    pub count: usize,
}

/// Learning-rate growth: every `interval` training samples both rates are
/// multiplied by `multiplier`, until the positive rate reaches `cap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub multiplier: f32,
    pub interval: usize,
    pub cap: f32,
}

impl Schedule {
    /// One growth step applied to `cfg`; the positive rate is capped and the
    /// negative rate keeps its ratio to it.
    pub fn step(&self, cfg: &mut StdpConfig) {
        if cfg.positive.abs() >= self.cap {
            return;
        }
        let target = (cfg.positive * self.multiplier).clamp(-self.cap, self.cap);
        let factor = if cfg.positive != 0.0 { target / cfg.positive } else { self.multiplier };
        cfg.positive = target;
        cfg.negative *= factor;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizeConfig {
    pub lower: f32,
    pub mid: f32,
    pub upper: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub mean: f32,
    pub std: f32,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig { mean: 0.5, std: 0.02 }
    }
}

/// Plasticity settings shared by conv and fully connected layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub wta: WtaConfig,
    pub stdp: Vec<StdpConfig>,
    pub epochs: usize,
    pub schedule: Option<Schedule>,
    pub quantize: Option<QuantizeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LayerConfig {
    Conv {
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        pad: usize,
        /// Firing threshold of the layer's neurons.
        threshold: f32,
        /// Per-step threshold used under rate-coded inference; defaults to `threshold`.
        #[serde(default)]
        rate_threshold: Option<f32>,
        #[serde(default)]
        init: InitConfig,
        train: Option<TrainConfig>,
    },
    Fc {
        out_size: usize,
        threshold: f32,
        #[serde(default)]
        rate_threshold: Option<f32>,
        #[serde(default)]
        init: InitConfig,
        train: Option<TrainConfig>,
    },
    Pool {
        window: usize,
        #[serde(default)]
        stride: Option<usize>,
        #[serde(default)]
        pad: usize,
    },
    Pad {
        pad: usize,
    },
}

impl LayerConfig {
    pub fn train(&self) -> Option<&TrainConfig> {
        match self {
            LayerConfig::Conv { train, .. } | LayerConfig::Fc { train, .. } => train.as_ref(),
            _ => None,
        }
    }

    pub fn train_mut(&mut self) -> Option<&mut TrainConfig> {
        match self {
            LayerConfig::Conv { train, .. } | LayerConfig::Fc { train, .. } => train.as_mut(),
            _ => None,
        }
    }

    pub fn pool_config(&self) -> Option<PoolConfig> {
        match *self {
            LayerConfig::Pool { window, stride, pad } => {
                Some(PoolConfig::new(window).with_stride(stride.unwrap_or(window)).with_pad(pad))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Dense,
    Sparse,
}

/// How features are produced after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub coding: Coding,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutConfig {
    pub epochs: usize,
    pub learning_rate: f32,
    pub l2: f32,
    pub batch_size: usize,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        ReadoutConfig { epochs: 30, learning_rate: 0.05, l2: 1e-4, batch_size: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    /// Input geometry `(channels, height, width)`.
    #[serde(default = "mnist_input")]
    pub input: (usize, usize, usize),
    pub transform: TransformConfig,
    pub layers: Vec<LayerConfig>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    /// Shuffle the training set each epoch.
    #[serde(default = "default_true")]
    pub shuffle: bool,
    pub inference: Option<InferenceConfig>,
    #[serde(default)]
    pub readout: ReadoutConfig,
}

fn default_true() -> bool {
    true
}

fn one() -> usize {
    1
}

fn default_batch() -> usize {
    16
}

fn default_backend() -> Backend {
    Backend::Sparse
}

fn mnist_input() -> (usize, usize, usize) {
    (1, 28, 28)
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl NetworkConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: NetworkConfig = serde_json::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        NetworkConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Schema, parameter and shape checks; also returns the shapes between
    /// layers as `(channels, height, width)`, starting with the coded input.
    pub fn validate(&self) -> Result<Vec<(usize, usize, usize)>> {
        if self.version != CONFIG_VERSION {
            return Err(cfg_err(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.batch_size == 0 {
            return Err(cfg_err("batch_size must be >= 1"));
        }
        if self.transform.steps == 0 {
            return Err(cfg_err("transform.steps must be >= 1"));
        }
        if let Some(inf) = &self.inference {
            if inf.steps == 0 {
                return Err(cfg_err("inference.steps must be >= 1"));
            }
        }
        if self.readout.batch_size == 0 || !(self.readout.learning_rate > 0.0) {
            return Err(cfg_err("readout needs batch_size >= 1 and a positive learning rate"));
        }
        if self.layers.is_empty() {
            return Err(cfg_err("network has no layers"));
        }
        let (c, h, w) = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(cfg_err("input dimensions must be >= 1"));
        }
        let mut shape = (c, h, w);
        if let Some(f) = &self.transform.filter {
            let bank = f.build().map_err(|e| cfg_err(format!("filter: {e}")))?;
            let s = bank
                .output_shape(crate::tensor::Shape5 { b: 1, t: 1, c, h, w })
                .map_err(|e| cfg_err(format!("filter: {e}")))?;
            shape = (s.c, s.h, s.w);
        }
        let mut shapes = vec![shape];
        for (i, layer) in self.layers.iter().enumerate() {
            let err = |m: String| cfg_err(format!("layer {i}: {m}"));
            let (c, h, w) = shape;
            shape = match layer {
                LayerConfig::Conv { out_channels, kernel, stride, pad, threshold, rate_threshold, .. } => {
                    if *out_channels == 0 || *kernel == 0 || *stride == 0 {
                        return Err(err("conv needs out_channels, kernel and stride >= 1".into()));
                    }
                    check_threshold(*threshold, *rate_threshold).map_err(err)?;
                    let ho = crate::layers::window_output_len(h, *kernel, *stride, *pad)
                        .map_err(|e| err(e.to_string()))?;
                    let wo = crate::layers::window_output_len(w, *kernel, *stride, *pad)
                        .map_err(|e| err(e.to_string()))?;
                    (*out_channels, ho, wo)
                }
                LayerConfig::Fc { out_size, threshold, rate_threshold, .. } => {
                    if *out_size == 0 {
                        return Err(err("fc needs out_size >= 1".into()));
                    }
                    check_threshold(*threshold, *rate_threshold).map_err(err)?;
                    (*out_size, 1, 1)
                }
                LayerConfig::Pool { window, stride, .. } => {
                    if *window == 0 || *stride == Some(0) {
                        return Err(err("pool window and stride must be >= 1".into()));
                    }
                    let p = layer.pool_config().unwrap();
                    let (ho, wo) = p.output_hw(h, w).map_err(|e| err(e.to_string()))?;
                    (c, ho, wo)
                }
                LayerConfig::Pad { pad } => (c, h + 2 * pad, w + 2 * pad),
            };
            if let Some(t) = layer.train() {
                if t.stdp.is_empty() {
                    return Err(err("training needs at least one STDP configuration".into()));
                }
                for s in &t.stdp {
                    s.validate().map_err(|e| err(e.to_string()))?;
                }
                if t.wta.count == 0 {
                    return Err(err("wta.count must be >= 1".into()));
                }
                if let Some(s) = t.schedule {
                    if !(s.cap > 0.0) || s.interval == 0 || !(s.multiplier > 0.0) {
                        return Err(err("schedule needs cap > 0, interval >= 1 and multiplier > 0".into()));
                    }
                }
                if let Some(q) = t.quantize {
                    if !(q.lower <= q.mid && q.mid <= q.upper) {
                        return Err(err("quantize needs lower <= mid <= upper".into()));
                    }
                }
            }
            shapes.push(shape);
        }
        Ok(shapes)
    }

    /// Indices of layers that carry weights.
    pub fn weighted_layers(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| matches!(self.layers[i], LayerConfig::Conv { .. } | LayerConfig::Fc { .. }))
            .collect()
    }

    /// Two-layer convolutional network in the style of Kheradpisheh et al.:
    /// LoG front end, 30 and 100 feature maps, trained for 2 and 20 epochs.
    pub fn kheradpisheh() -> Self {
        let conv = |out_channels, kernel, pad, threshold, wta: WtaConfig, epochs| LayerConfig::Conv {
            out_channels,
            kernel,
            stride: 1,
            pad,
            threshold,
            rate_threshold: None,
            init: InitConfig::default(),
            train: Some(TrainConfig {
                wta,
                stdp: vec![StdpConfig::new(0.004, -0.003)],
                epochs,
                schedule: Some(Schedule { multiplier: 2.0, interval: 500, cap: 0.15 }),
                quantize: Some(QuantizeConfig { lower: 0.0, mid: 0.5, upper: 1.0 }),
            }),
        };
        NetworkConfig {
            version: CONFIG_VERSION,
            name: "kheradpisheh".into(),
            input: mnist_input(),
            transform: TransformConfig {
                filter: Some(FilterConfig::Log { radius: 3, stds: vec![0.471, 1.099, 2.042], pad: 3 }),
                threshold: 0.01,
                steps: 15,
                sort: true,
            },
            layers: vec![
                conv(30, 5, 2, 15.0, WtaConfig { radius: 2, count: 5 }, 2),
                LayerConfig::Pool { window: 2, stride: None, pad: 0 },
                conv(100, 5, 2, 10.0, WtaConfig { radius: 1, count: 8 }, 20),
                LayerConfig::Pool { window: 3, stride: None, pad: 0 },
            ],
            batch_size: 16,
            backend: Backend::Sparse,
            shuffle: true,
            inference: None,
            readout: ReadoutConfig::default(),
        }
    }

    /// The demonstration network with 25 and 50 feature maps, trained with
    /// rank-order coding and evaluated with 300-step rate coding.
    pub fn demo() -> Self {
        let conv = |out_channels, kernel, pad, threshold, rate_threshold, wta: WtaConfig| LayerConfig::Conv {
            out_channels,
            kernel,
            stride: 1,
            pad,
            threshold,
            rate_threshold: Some(rate_threshold),
            init: InitConfig::default(),
            train: Some(TrainConfig {
                wta,
                stdp: vec![StdpConfig::new(0.0004, -0.0003)],
                epochs: 1,
                schedule: Some(Schedule { multiplier: 1.5, interval: 2000, cap: 0.15 }),
                quantize: Some(QuantizeConfig { lower: 0.0, mid: 0.5, upper: 1.0 }),
            }),
        };
        NetworkConfig {
            version: CONFIG_VERSION,
            name: "demo".into(),
            input: mnist_input(),
            transform: TransformConfig {
                filter: Some(FilterConfig::Log { radius: 3, stds: vec![0.471, 1.099, 2.042], pad: 3 }),
                threshold: 0.01,
                steps: 15,
                sort: true,
            },
            layers: vec![
                conv(25, 5, 2, 16.0, 3.0, WtaConfig { radius: 3, count: 5 }),
                LayerConfig::Pool { window: 2, stride: None, pad: 0 },
                conv(50, 3, 1, 5.0, 2.0, WtaConfig { radius: 1, count: 8 }),
                LayerConfig::Pool { window: 3, stride: None, pad: 0 },
            ],
            batch_size: 16,
            backend: Backend::Sparse,
            shuffle: true,
            inference: Some(InferenceConfig { coding: Coding::Rate, steps: 300 }),
            readout: ReadoutConfig::default(),
        }
    }

    /// The demonstration architecture with the faster learning schedule of
    /// [`NetworkConfig::kheradpisheh`], sized for training on a few thousand
    /// samples. Rate thresholds are calibrated for 300-step inference.
    pub fn rate_demo() -> Self {
        let mut cfg = NetworkConfig::demo();
        cfg.name = "rate-demo".into();
        let thresholds = [(0, 8.0, 1), (2, 4.0, 4)];
        for (i, rate, epochs) in thresholds {
            if let LayerConfig::Conv { rate_threshold, train: Some(t), .. } = &mut cfg.layers[i] {
                *rate_threshold = Some(rate);
                t.stdp = vec![StdpConfig::new(0.004, -0.003)];
                t.schedule = Some(Schedule { multiplier: 2.0, interval: 500, cap: 0.15 });
                t.epochs = epochs;
            }
        }
        cfg
    }

    /// Preset by name: `kheradpisheh`, `demo` or `rate-demo`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "kheradpisheh" => Some(NetworkConfig::kheradpisheh()),
            "demo" => Some(NetworkConfig::demo()),
            "rate-demo" => Some(NetworkConfig::rate_demo()),
            _ => None,
        }
    }
}

fn check_threshold(threshold: f32, rate: Option<f32>) -> std::result::Result<(), String> {
    if !(threshold > 0.0) || rate.is_some_and(|r| !(r > 0.0)) {
        return Err("thresholds must be positive".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for cfg in [NetworkConfig::kheradpisheh(), NetworkConfig::demo(), NetworkConfig::rate_demo()] {
            let shapes = cfg.validate().unwrap();
            assert_eq!(shapes[0], (6, 28, 28));
            let back = NetworkConfig::from_json(&cfg.to_json()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.hash(), cfg.hash());
        }
        let shapes = NetworkConfig::kheradpisheh().validate().unwrap();
        assert_eq!(shapes.last(), Some(&(100, 4, 4)));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = NetworkConfig::kheradpisheh();
        cfg.version = 2;
        assert!(matches!(NetworkConfig::from_json(&cfg.to_json()), Err(Error::Config(_))));
        assert!(matches!(NetworkConfig::from_json("{"), Err(Error::Config(_))));

        let mut cfg = NetworkConfig::kheradpisheh();
        cfg.layers.insert(0, LayerConfig::Pool { window: 40, stride: None, pad: 0 });
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn schedule_caps_and_keeps_ratio() {
        let s = Schedule { multiplier: 2.0, interval: 500, cap: 0.15 };
        let mut c = StdpConfig::new(0.04, -0.03);
        s.step(&mut c);
        assert_eq!((c.positive, c.negative), (0.08, -0.06));
        s.step(&mut c);
        assert!((c.positive - 0.15).abs() < 1e-7);
        assert!((c.negative / c.positive + 0.75).abs() < 1e-6);
        let before = c;
        s.step(&mut c);
        assert_eq!(c, before);
    }
}
