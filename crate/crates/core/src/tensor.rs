//! Dense five-dimensional spike and potential tensors in `B, T, C, H, W` order.
//!
//! Spikes are stored as `u8` (always 0 or 1), potentials and analog values as
//! `f32`. The buffer is contiguous and row-major, so the flat index of
//! `(b, t, c, h, w)` is `(((b * T + t) * C + c) * H + h) * W + w`.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::{Index, IndexMut};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape5 {
    pub b: usize,
    pub t: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape5 {
    pub fn new(b: usize, t: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        let shape = Shape5 { b, t, c, h, w };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims().contains(&0) {
            return Err(Error::Shape(format!("every dimension must be >= 1, got {self}")));
        }
        checked_numel(&self.dims().map(|d| d as u64))?;
        Ok(())
    }

    pub fn dims(&self) -> [usize; 5] {
        [self.b, self.t, self.c, self.h, self.w]
    }

    pub fn numel(&self) -> usize {
        self.b * self.t * self.c * self.h * self.w
    }

    /// Elements in one `(c, h, w)` frame.
    pub fn frame(&self) -> usize {
        self.c * self.h * self.w
    }

    /// Elements in one `(h, w)` plane.
    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Elements belonging to one batch sample (all time steps).
    pub fn sample(&self) -> usize {
        self.t * self.frame()
    }

    #[inline]
    pub fn index(&self, b: usize, t: usize, c: usize, h: usize, w: usize) -> usize {
        debug_assert!(b < self.b && t < self.t && c < self.c && h < self.h && w < self.w);
        (((b * self.t + t) * self.c + c) * self.h + h) * self.w + w
    }

    pub fn with_b(self, b: usize) -> Self {
        Shape5 { b, ..self }
    }

    pub fn with_t(self, t: usize) -> Self {
        Shape5 { t, ..self }
    }
}

impl fmt::Display for Shape5 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {}, {})", self.b, self.t, self.c, self.h, self.w)
    }
}

pub(crate) fn checked_numel(dims: &[u64]) -> Result<usize> {
    let overflow = || Error::DimensionOverflow(dims.to_vec());
    let mut n: u64 = 1;
    for &d in dims {
        n = n.checked_mul(d).ok_or_else(overflow)?;
    }
    // Buffers must stay addressable even at 4 bytes per element.
    if n > (isize::MAX as u64) / 4 {
        return Err(overflow());
    }
    usize::try_from(n).map_err(|_| overflow())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    U8,
    F32,
}

impl ElementKind {
    pub fn code(self) -> u8 {
        match self {
            ElementKind::U8 => 0,
            ElementKind::F32 => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(ElementKind::U8),
            1 => Ok(ElementKind::F32),
            other => Err(Error::UnknownKind(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            ElementKind::U8 => 1,
            ElementKind::F32 => 4,
        }
    }
}

pub trait Element: Copy + Default + PartialEq + fmt::Debug + Send + Sync + 'static {
    const KIND: ElementKind;
    fn write_le(values: &[Self], out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Vec<Self>;
}

impl Element for u8 {
    const KIND: ElementKind = ElementKind::U8;

    fn write_le(values: &[Self], out: &mut Vec<u8>) {
        out.extend_from_slice(values);
    }

    fn read_le(bytes: &[u8]) -> Vec<Self> {
        bytes.to_vec()
    }
}

impl Element for f32 {
    const KIND: ElementKind = ElementKind::F32;

    fn write_le(values: &[Self], out: &mut Vec<u8>) {
        out.reserve(values.len() * 4);
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn read_le(bytes: &[u8]) -> Vec<Self> {
        bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape5,
    data: Vec<T>,
}

/// Binary spike trains.
pub type Spikes = Tensor<u8>;
/// Membrane potentials and analog feature maps.
pub type Potentials = Tensor<f32>;

impl<T: Element> Tensor<T> {
    pub fn zeros(shape: Shape5) -> Self {
        Tensor { shape, data: vec![T::default(); shape.numel()] }
    }

    pub fn full(shape: Shape5, value: T) -> Self {
        Tensor { shape, data: vec![value; shape.numel()] }
    }

    pub fn from_vec(shape: Shape5, data: Vec<T>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.numel() {
            return Err(Error::Shape(format!(
                "buffer of length {} does not match shape {shape} ({} elements)",
                data.len(),
                shape.numel()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn kind(&self) -> ElementKind {
        T::KIND
    }

    pub fn shape(&self) -> Shape5 {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, b: usize, t: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.shape.index(b, t, c, h, w)]
    }

    pub fn set(&mut self, b: usize, t: usize, c: usize, h: usize, w: usize, value: T) {
        let i = self.shape.index(b, t, c, h, w);
        self.data[i] = value;
    }

    /// All time steps of one batch sample.
    pub fn sample(&self, b: usize) -> &[T] {
        let n = self.shape.sample();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [T] {
        let n = self.shape.sample();
        &mut self.data[b * n..(b + 1) * n]
    }

    /// One `(c, h, w)` frame.
    pub fn frame(&self, b: usize, t: usize) -> &[T] {
        let n = self.shape.frame();
        let start = (b * self.shape.t + t) * n;
        &self.data[start..start + n]
    }

    pub fn frame_mut(&mut self, b: usize, t: usize) -> &mut [T] {
        let n = self.shape.frame();
        let start = (b * self.shape.t + t) * n;
        &mut self.data[start..start + n]
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshape(self, shape: Shape5) -> Result<Self> {
        Tensor::from_vec(shape, self.data)
    }

    /// Copies a contiguous range of batch samples into a new tensor.
    pub fn slice_batch(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.shape.b {
            return Err(Error::Shape(format!(
                "batch range {start}..{end} invalid for {}",
                self.shape
            )));
        }
        let n = self.shape.sample();
        Ok(Tensor {
            shape: self.shape.with_b(end - start),
            data: self.data[start * n..end * n].to_vec(),
        })
    }

    /// Stacks tensors along the batch dimension. All parts must agree on `T, C, H, W`.
    pub fn concat_batch(parts: &[Tensor<T>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("cannot concatenate zero tensors".into()))?;
        let mut b = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.shape.with_b(1) != first.shape.with_b(1) {
                return Err(Error::Shape(format!(
                    "cannot concatenate {} with {}",
                    first.shape, p.shape
                )));
            }
            b += p.shape.b;
            data.extend_from_slice(&p.data);
        }
        Tensor::from_vec(first.shape.with_b(b), data)
    }

    pub fn map<U: Element>(&self, f: impl Fn(T) -> U) -> Tensor<U> {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Writes the tensor in the `SPKT` binary format.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = Vec::with_capacity(HEADER_LEN + self.data.len() * T::KIND.size());
        buf.extend_from_slice(MAGIC);
        buf.push(FORMAT_VERSION);
        buf.push(T::KIND.code());
        for d in self.shape.dims() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        T::write_le(&self.data, &mut buf);
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        DynTensor::read_from(input)?.try_into_typed()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        DynTensor::load(path)?.try_into_typed()
    }
}

impl Tensor<u8> {
    pub fn to_f32(&self) -> Tensor<f32> {
        self.map(f32::from)
    }

    /// Number of set spikes.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }
}

impl<T: Element> Index<(usize, usize, usize, usize, usize)> for Tensor<T> {
    type Output = T;

    fn index(&self, (b, t, c, h, w): (usize, usize, usize, usize, usize)) -> &T {
        &self.data[self.shape.index(b, t, c, h, w)]
    }
}

impl<T: Element> IndexMut<(usize, usize, usize, usize, usize)> for Tensor<T> {
    fn index_mut(&mut self, (b, t, c, h, w): (usize, usize, usize, usize, usize)) -> &mut T {
        let i = self.shape.index(b, t, c, h, w);
        &mut self.data[i]
    }
}

const MAGIC: &[u8; 4] = b"SPKT";
const FORMAT_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 1 + 5 * 8;

/// A tensor whose element kind is only known at run time, as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum DynTensor {
    U8(Tensor<u8>),
    F32(Tensor<f32>),
}

impl DynTensor {
    pub fn kind(&self) -> ElementKind {
        match self {
            DynTensor::U8(_) => ElementKind::U8,
            DynTensor::F32(_) => ElementKind::F32,
        }
    }

    pub fn shape(&self) -> Shape5 {
        match self {
            DynTensor::U8(t) => t.shape(),
            DynTensor::F32(t) => t.shape(),
        }
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        let got = read_fully(&mut input, &mut header)?;
        if got >= 4 && &header[..4] != MAGIC {
            return Err(Error::BadMagic {
                expected: format!("{:?}", std::str::from_utf8(MAGIC).unwrap()),
                found: format!("{:?}", String::from_utf8_lossy(&header[..4])),
            });
        }
        if got < HEADER_LEN {
            return Err(Error::Truncated { expected: HEADER_LEN as u64, found: got as u64 });
        }
        if header[4] != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(header[4]));
        }
        let kind = ElementKind::from_code(header[5])?;
        let dims: Vec<u64> = header[6..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let numel = checked_numel(&dims)?;
        let shape = Shape5 {
            b: dims[0] as usize,
            t: dims[1] as usize,
            c: dims[2] as usize,
            h: dims[3] as usize,
            w: dims[4] as usize,
        };
        shape.validate()?;

        let expected = numel * kind.size();
        let mut payload = Vec::new();
        input.take(expected as u64).read_to_end(&mut payload)?;
        if payload.len() < expected {
            return Err(Error::Truncated {
                expected: (HEADER_LEN + expected) as u64,
                found: (HEADER_LEN + payload.len()) as u64,
            });
        }
        Ok(match kind {
            ElementKind::U8 => DynTensor::U8(Tensor { shape, data: u8::read_le(&payload) }),
            ElementKind::F32 => DynTensor::F32(Tensor { shape, data: f32::read_le(&payload) }),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        DynTensor::read_from(BufReader::new(File::open(path)?))
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        match self {
            DynTensor::U8(t) => t.write_to(out),
            DynTensor::F32(t) => t.write_to(out),
        }
    }

    pub fn try_into_typed<T: Element>(self) -> Result<Tensor<T>> {
        let found = self.kind();
        let any: Box<dyn std::any::Any> = match self {
            DynTensor::U8(t) => Box::new(t),
            DynTensor::F32(t) => Box::new(t),
        };
        any.downcast::<Tensor<T>>()
            .map(|t| *t)
            .map_err(|_| Error::KindMismatch { expected: T::KIND, found })
    }
}

impl From<Tensor<u8>> for DynTensor {
    fn from(t: Tensor<u8>) -> Self {
        DynTensor::U8(t)
    }
}

impl From<Tensor<f32>> for DynTensor {
    fn from(t: Tensor<f32>) -> Self {
        DynTensor::F32(t)
    }
}

fn read_fully<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

/// Zeroes every value that is not strictly greater than `value`.
pub fn threshold(x: &Potentials, value: f32) -> Potentials {
    let mut out = x.clone();
    threshold_inplace(&mut out, value);
    out
}

pub fn threshold_inplace(x: &mut Potentials, value: f32) {
    for v in x.data_mut() {
        if !(*v > value) {
            *v = 0.0;
        }
    }
}

/// Emits a spike wherever the potential reaches `thr` (inclusive).
///
/// Without a threshold every strictly positive potential fires, which is the
/// intended use after [`threshold`] has already removed sub-threshold values.
pub fn fire(p: &Potentials, thr: Option<f32>) -> Spikes {
    match thr {
        Some(thr) => p.map(|v| u8::from(v >= thr)),
        None => p.map(|v| u8::from(v > 0.0)),
    }
}

/// Binarizes weights in place: values below `mid` become `lower`, the rest `upper`.
pub fn quantize(weights: &mut [f32], lower: f32, mid: f32, upper: f32) -> Result<()> {
    if lower > upper {
        return Err(Error::InvalidArgument(format!(
            "quantize bounds out of order: lower {lower} > upper {upper}"
        )));
    }
    for w in weights {
        *w = if *w < mid { lower } else { upper };
    }
    Ok(())
}
