//! Integrate-and-fire compute layers.
//!
//! Convolution and fully connected layers turn input spike trains into
//! membrane potentials; [`crate::tensor::fire`] turns potentials back into
//! spikes. Every time step is computed independently, so cumulative input
//! trains yield integrated (non-leaky) potentials without explicit state.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::learning::StdpConfig;
use crate::tensor::{DynTensor, Element, Potentials, Shape5, Spikes, Tensor};

/// Output extent of a depthwise filter bank: `in + 2 * pad - kernel + 1`.
pub fn filter_output_len(input: usize, kernel: usize, pad: usize) -> Result<usize> {
    window_output_len(input, kernel, 1, pad)
}

/// Output extent of a strided window: `floor((in + 2 * pad - kernel) / stride) + 1`.
///
/// Shared by convolution and pooling.
pub fn window_output_len(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::Geometry(format!(
            "kernel ({kernel}) and stride ({stride}) must be >= 1"
        )));
    }
    let padded = input + 2 * pad;
    if padded < kernel {
        return Err(Error::Geometry(format!(
            "kernel {kernel} larger than padded input {padded} (input {input}, pad {pad})"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

fn normal_weights(len: usize, mean: f32, std: f32, seed: u64) -> Result<Vec<f32>> {
    let normal = Normal::new(mean, std)
        .map_err(|e| Error::InvalidArgument(format!("weight init normal({mean}, {std}): {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..len).map(|_| normal.sample(&mut rng)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub pad: (usize, usize),
    /// `out_channels x in_channels x K_h x K_w`, row-major.
    pub weights: Vec<f32>,
    pub stdp_configs: Vec<StdpConfig>,
}

impl ConvLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
        mean: f32,
        std: f32,
        seed: u64,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel.0 == 0 || kernel.1 == 0 {
            return Err(Error::Geometry("conv channels and kernel must be >= 1".into()));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::Geometry("conv stride must be >= 1".into()));
        }
        let len = out_channels * in_channels * kernel.0 * kernel.1;
        Ok(ConvLayer {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            weights: normal_weights(len, mean, std, seed)?,
            stdp_configs: vec![StdpConfig::default()],
        })
    }

    /// Weights per output channel.
    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel.0 * self.kernel.1
    }

    #[inline]
    pub fn weight_index(&self, co: usize, ci: usize, kh: usize, kw: usize) -> usize {
        ((co * self.in_channels + ci) * self.kernel.0 + kh) * self.kernel.1 + kw
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        Ok((
            window_output_len(h, self.kernel.0, self.stride.0, self.pad.0)?,
            window_output_len(w, self.kernel.1, self.stride.1, self.pad.1)?,
        ))
    }

    pub fn output_shape(&self, input: Shape5) -> Result<Shape5> {
        if input.c != self.in_channels {
            return Err(Error::Geometry(format!(
                "conv expects {} input channels, got {}",
                self.in_channels, input.c
            )));
        }
        let (h, w) = self.output_hw(input.h, input.w)?;
        Ok(Shape5 { c: self.out_channels, h, w, ..input })
    }

    /// Computes potentials for every `(b, t)` frame of `input`.
    pub fn forward(&self, input: &Spikes) -> Result<Potentials> {
        conv_forward(self, input)
    }

    /// Weights laid out `[ci][kh][kw][co]`, which lets event scatter run
    /// contiguously over output channels.
    pub(crate) fn weights_channels_last(&self) -> Vec<f32> {
        let fan = self.fan_in();
        let mut out = vec![0.0; self.weights.len()];
        for co in 0..self.out_channels {
            for j in 0..fan {
                out[j * self.out_channels + co] = self.weights[co * fan + j];
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_layer(&mut w, LayerTag::Conv, [self.stride.0, self.stride.1, self.pad.0, self.pad.1], |out| {
            let shape = Shape5::new(self.out_channels, 1, self.in_channels, self.kernel.0, self.kernel.1)?;
            Tensor::from_vec(shape, self.weights.clone())?.write_to(out)
        })?;
        w.flush()?;
        Ok(())
    }

    /// Loads weights and geometry; STDP configurations are left at their default.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (tag, geom, tensor) = read_layer(BufReader::new(File::open(path)?))?;
        if tag != LayerTag::Conv {
            return Err(Error::Data("layer file holds a fully connected layer, not a convolution".into()));
        }
        let s = tensor.shape();
        Ok(ConvLayer {
            in_channels: s.c,
            out_channels: s.b,
            kernel: (s.h, s.w),
            stride: (geom[0], geom[1]),
            pad: (geom[2], geom[3]),
            weights: tensor.into_vec(),
            stdp_configs: vec![StdpConfig::default()],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer {
    pub in_size: usize,
    pub out_size: usize,
    /// `in_size x out_size`, row-major.
    pub weights: Vec<f32>,
    pub stdp_configs: Vec<StdpConfig>,
}

impl FcLayer {
    pub fn new(in_size: usize, out_size: usize, mean: f32, std: f32, seed: u64) -> Result<Self> {
        if in_size == 0 || out_size == 0 {
            return Err(Error::Geometry("fully connected sizes must be >= 1".into()));
        }
        Ok(FcLayer {
            in_size,
            out_size,
            weights: normal_weights(in_size * out_size, mean, std, seed)?,
            stdp_configs: vec![StdpConfig::default()],
        })
    }

    pub fn forward(&self, input: &Spikes) -> Result<Potentials> {
        fc_forward(self, input)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_layer(&mut w, LayerTag::Fc, [0; 4], |out| {
            let shape = Shape5::new(1, 1, 1, self.in_size, self.out_size)?;
            Tensor::from_vec(shape, self.weights.clone())?.write_to(out)
        })?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (tag, _, tensor) = read_layer(BufReader::new(File::open(path)?))?;
        if tag != LayerTag::Fc {
            return Err(Error::Data("layer file holds a convolution, not a fully connected layer".into()));
        }
        let s = tensor.shape();
        Ok(FcLayer {
            in_size: s.h,
            out_size: s.w,
            weights: tensor.into_vec(),
            stdp_configs: vec![StdpConfig::default()],
        })
    }
}

const LAYER_MAGIC: &[u8; 4] = b"SPKL";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LayerTag {
    Conv = 0,
    Fc = 1,
}

// Layer file: "SPKL", u8 version, u8 tag, four u64 (stride h/w, pad h/w), then
// an SPKT tensor with the weights.
fn write_layer<W: Write>(
    out: &mut W,
    tag: LayerTag,
    geom: [usize; 4],
    body: impl FnOnce(&mut W) -> Result<()>,
) -> Result<()> {
    out.write_all(LAYER_MAGIC)?;
    out.write_all(&[1, tag as u8])?;
    for g in geom {
        out.write_all(&(g as u64).to_le_bytes())?;
    }
    body(out)
}

fn read_layer<R: Read>(mut input: R) -> Result<(LayerTag, [usize; 4], Tensor<f32>)> {
    let mut head = [0u8; 6 + 32];
    input.read_exact(&mut head).map_err(|_| Error::Truncated { expected: 38, found: 0 })?;
    if &head[..4] != LAYER_MAGIC {
        return Err(Error::BadMagic {
            expected: "\"SPKL\"".into(),
            found: format!("{:?}", String::from_utf8_lossy(&head[..4])),
        });
    }
    if head[4] != 1 {
        return Err(Error::UnsupportedVersion(head[4]));
    }
    let tag = match head[5] {
        0 => LayerTag::Conv,
        1 => LayerTag::Fc,
        other => return Err(Error::Data(format!("unknown layer tag {other}"))),
    };
    let mut geom = [0usize; 4];
    for (i, g) in geom.iter_mut().enumerate() {
        let at = 6 + i * 8;
        *g = u64::from_le_bytes(head[at..at + 8].try_into().unwrap()) as usize;
    }
    let tensor = DynTensor::read_from(input)?.try_into_typed::<f32>()?;
    Ok((tag, geom, tensor))
}

/// Dense convolution (cross-correlation, zero padding) applied to each time step.
///
/// Each `(b, t)` frame is computed by whichever of two kernels is cheaper for
/// its spike density: scattering the kernel of every active input, or
/// im2col followed by a matrix product.
pub fn conv_forward(layer: &ConvLayer, input: &Spikes) -> Result<Potentials> {
    let in_shape = input.shape();
    let out_shape = layer.output_shape(in_shape)?;
    let mut out = Potentials::zeros(out_shape);

    let frame_in = in_shape.frame();
    let frame_out = out_shape.frame();
    let gemm_cost = layer.out_channels * layer.fan_in() * out_shape.plane() / 8
        + layer.fan_in() * out_shape.plane();
    let scatter_unit = layer.out_channels * layer.kernel.0 * layer.kernel.1;
    let weights_cl = layer.weights_channels_last();

    out.data_mut()
        .par_chunks_mut(frame_out)
        .zip(input.data().par_chunks(frame_in))
        .for_each_init(
            || (Vec::new(), Vec::new()),
            |(scratch, cols), (dst, src)| {
                let active = src.iter().filter(|&&v| v != 0).count();
                if active == 0 {
                    return;
                }
                if active * scatter_unit <= gemm_cost {
                    conv_frame_scatter(layer, &weights_cl, in_shape, out_shape, src, dst, scratch);
                } else {
                    conv_frame_gemm(layer, in_shape, out_shape, src, dst, cols);
                }
            },
        );
    Ok(out)
}

fn conv_frame_gemm(
    layer: &ConvLayer,
    in_shape: Shape5,
    out_shape: Shape5,
    src: &[u8],
    dst: &mut [f32],
    cols: &mut Vec<f32>,
) {
    let (kh, kw) = layer.kernel;
    let (sh, sw) = layer.stride;
    let (ph, pw) = layer.pad;
    let n = out_shape.plane();
    let k = layer.fan_in();
    cols.clear();
    cols.resize(k * n, 0.0);

    for ci in 0..layer.in_channels {
        let plane = &src[ci * in_shape.plane()..(ci + 1) * in_shape.plane()];
        for dy in 0..kh {
            for dx in 0..kw {
                let row = &mut cols[((ci * kh + dy) * kw + dx) * n..][..n];
                for oy in 0..out_shape.h {
                    let iy = (oy * sh + dy) as isize - ph as isize;
                    if iy < 0 || iy >= in_shape.h as isize {
                        continue;
                    }
                    let line = &plane[iy as usize * in_shape.w..][..in_shape.w];
                    for ox in 0..out_shape.w {
                        let ix = (ox * sw + dx) as isize - pw as isize;
                        if ix >= 0 && (ix as usize) < in_shape.w {
                            row[oy * out_shape.w + ox] = line[ix as usize] as f32;
                        }
                    }
                }
            }
        }
    }

    // SAFETY: all slices have the lengths implied by the row-major strides below.
    unsafe {
        matrixmultiply::sgemm(
            layer.out_channels,
            k,
            n,
            1.0,
            layer.weights.as_ptr(),
            k as isize,
            1,
            cols.as_ptr(),
            n as isize,
            1,
            0.0,
            dst.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn conv_frame_scatter(
    layer: &ConvLayer,
    weights_cl: &[f32],
    in_shape: Shape5,
    out_shape: Shape5,
    src: &[u8],
    dst: &mut [f32],
    acc: &mut Vec<f32>,
) {
    let co_n = layer.out_channels;
    let plane_out = out_shape.plane();
    acc.clear();
    acc.resize(plane_out * co_n, 0.0);
    let in_plane = in_shape.plane();

    for (i, &v) in src.iter().enumerate() {
        if v == 0 {
            continue;
        }
        let ci = i / in_plane;
        let rem = i % in_plane;
        let (iy, ix) = (rem / in_shape.w, rem % in_shape.w);
        let scale = v as f32;
        scatter_event(layer, weights_cl, out_shape, ci, iy, ix, scale, acc);
    }

    for p in 0..plane_out {
        let row = &acc[p * co_n..(p + 1) * co_n];
        for (co, &v) in row.iter().enumerate() {
            dst[co * plane_out + p] = v;
        }
    }
}

/// Adds the contribution of one input spike at `(ci, iy, ix)` into a
/// channels-last accumulator of shape `[H_o][W_o][C_o]`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn scatter_event(
    layer: &ConvLayer,
    weights_cl: &[f32],
    out_shape: Shape5,
    ci: usize,
    iy: usize,
    ix: usize,
    scale: f32,
    acc: &mut [f32],
) {
    let (kh, kw) = layer.kernel;
    let (sh, sw) = layer.stride;
    let (ph, pw) = layer.pad;
    let co_n = layer.out_channels;
    let py = iy + ph;
    let px = ix + pw;
    // Output rows oy with oy * sh <= py < oy * sh + kh.
    let oy_lo = if py + 1 > kh { (py + 1 - kh).div_ceil(sh) } else { 0 };
    let oy_hi = (py / sh).min(out_shape.h - 1);
    let ox_lo = if px + 1 > kw { (px + 1 - kw).div_ceil(sw) } else { 0 };
    let ox_hi = (px / sw).min(out_shape.w - 1);
    if oy_lo > oy_hi || ox_lo > ox_hi {
        return;
    }
    for oy in oy_lo..=oy_hi {
        let dy = py - oy * sh;
        for ox in ox_lo..=ox_hi {
            let dx = px - ox * sw;
            let wrow = &weights_cl[((ci * kh + dy) * kw + dx) * co_n..][..co_n];
            let arow = &mut acc[(oy * out_shape.w + ox) * co_n..][..co_n];
            if scale == 1.0 {
                for (a, w) in arow.iter_mut().zip(wrow) {
                    *a += w;
                }
            } else {
                for (a, w) in arow.iter_mut().zip(wrow) {
                    *a += scale * w;
                }
            }
        }
    }
}

/// `out[b, t, o] = sum_i input[b, t, i] * W[i, o]` with `i` ranging over the
/// flattened `C x H x W` frame. The output has shape `B x T x O x 1 x 1`.
pub fn fc_forward(layer: &FcLayer, input: &Spikes) -> Result<Potentials> {
    let s = input.shape();
    if s.frame() != layer.in_size {
        return Err(Error::Geometry(format!(
            "fully connected layer expects {} inputs, got {} ({} x {} x {})",
            layer.in_size,
            s.frame(),
            s.c,
            s.h,
            s.w
        )));
    }
    let out_shape = Shape5 { b: s.b, t: s.t, c: layer.out_size, h: 1, w: 1 };
    let mut out = Potentials::zeros(out_shape);
    let o_n = layer.out_size;
    out.data_mut()
        .par_chunks_mut(o_n)
        .zip(input.data().par_chunks(layer.in_size))
        .for_each(|(dst, src)| {
            for (i, &v) in src.iter().enumerate() {
                if v == 0 {
                    continue;
                }
                let row = &layer.weights[i * o_n..(i + 1) * o_n];
                let scale = v as f32;
                for (d, w) in dst.iter_mut().zip(row) {
                    *d += scale * w;
                }
            }
        });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PoolConfig {
    pub window: (usize, usize),
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl PoolConfig {
    /// Square window with stride equal to the window and no padding.
    pub fn new(window: usize) -> Self {
        PoolConfig { window: (window, window), stride: (window, window), pad: (0, 0) }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = (stride, stride);
        self
    }

    pub fn with_pad(mut self, pad: usize) -> Self {
        self.pad = (pad, pad);
        self
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        Ok((
            window_output_len(h, self.window.0, self.stride.0, self.pad.0)?,
            window_output_len(w, self.window.1, self.stride.1, self.pad.1)?,
        ))
    }

    pub fn output_shape(&self, input: Shape5) -> Result<Shape5> {
        let (h, w) = self.output_hw(input.h, input.w)?;
        Ok(Shape5 { h, w, ..input })
    }

    /// In-bounds input coordinates covered by output cell `(oy, ox)`, row-major.
    pub(crate) fn window_cells(
        &self,
        in_h: usize,
        in_w: usize,
        oy: usize,
        ox: usize,
    ) -> impl Iterator<Item = (usize, usize)> + '_ {
        let y0 = (oy * self.stride.0) as isize - self.pad.0 as isize;
        let x0 = (ox * self.stride.1) as isize - self.pad.1 as isize;
        let ys = (y0.max(0) as usize)..((y0 + self.window.0 as isize).clamp(0, in_h as isize) as usize);
        let xs = x0.max(0) as usize..((x0 + self.window.1 as isize).clamp(0, in_w as isize) as usize);
        ys.flat_map(move |y| xs.clone().map(move |x| (y, x)))
    }
}

/// Max pooling over spike trains.
///
/// Without `rates` each time step takes the window maximum, which for
/// cumulative trains keeps the earliest spike. With `rates` (shape
/// `B x 1 x C x H x W`, usually from [`crate::coding::gather`]) the input cell
/// with the highest rate wins and its whole train is copied; ties go to the
/// lowest index.
pub fn pool(spikes: &Spikes, cfg: &PoolConfig, rates: Option<&Potentials>) -> Result<Spikes> {
    let s = spikes.shape();
    let out_shape = cfg.output_shape(s)?;
    let mut out = Spikes::zeros(out_shape);

    match rates {
        None => {
            out.data_mut()
                .par_chunks_mut(out_shape.plane())
                .enumerate()
                .for_each(|(idx, dst)| {
                    let src = &spikes.data()[idx * s.plane()..(idx + 1) * s.plane()];
                    for oy in 0..out_shape.h {
                        for ox in 0..out_shape.w {
                            dst[oy * out_shape.w + ox] = cfg
                                .window_cells(s.h, s.w, oy, ox)
                                .map(|(y, x)| src[y * s.w + x])
                                .max()
                                .unwrap_or(0);
                        }
                    }
                });
        }
        Some(rates) => {
            let r = rates.shape();
            if r != s.with_t(1) {
                return Err(Error::Shape(format!(
                    "pooling rates must have shape {}, got {r}",
                    s.with_t(1)
                )));
            }
            for b in 0..s.b {
                for c in 0..s.c {
                    for oy in 0..out_shape.h {
                        for ox in 0..out_shape.w {
                            let mut best: Option<((usize, usize), f32)> = None;
                            for (y, x) in cfg.window_cells(s.h, s.w, oy, ox) {
                                let v = rates.get(b, 0, c, y, x);
                                if best.is_none_or(|(_, bv)| v > bv) {
                                    best = Some(((y, x), v));
                                }
                            }
                            if let Some(((y, x), _)) = best {
                                for t in 0..s.t {
                                    out.set(b, t, c, oy, ox, spikes.get(b, t, c, y, x));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Pads height and width by `pad` on each side, filling with `value`.
pub fn pad<T: Element>(x: &Tensor<T>, pad: (usize, usize), value: T) -> Tensor<T> {
    let s = x.shape();
    let out_shape = Shape5 { h: s.h + 2 * pad.0, w: s.w + 2 * pad.1, ..s };
    let mut out = Tensor::full(out_shape, value);
    for b in 0..s.b {
        for t in 0..s.t {
            for c in 0..s.c {
                for y in 0..s.h {
                    let src = &x.data()[s.index(b, t, c, y, 0)..][..s.w];
                    let at = out_shape.index(b, t, c, y + pad.0, pad.1);
                    out.data_mut()[at..at + s.w].copy_from_slice(src);
                }
            }
        }
    }
    out
}
