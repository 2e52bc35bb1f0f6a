//! Sparse spike backend.
//!
//! A cumulative spike train is stored as the steps at which neurons fire for
//! the first time: bucket `(b, t)` lists the flat `(c, h, w)` indices of the
//! neurons whose first spike is at step `t`, sorted ascending. Work in
//! [`sparse_conv`] and [`sparse_crossings`] scales with the number of events.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::layers::{scatter_event, ConvLayer, PoolConfig};
use crate::learning::{conv_wta_sample, inhibit_survivors, Winner, NEVER};
use crate::tensor::{fire, checked_numel, Potentials, Shape5, Spikes};

const MAGIC: &[u8; 4] = b"SPKS";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseSpikes {
    shape: Shape5,
    /// `offsets[b * T + t]..offsets[b * T + t + 1]` delimits bucket `(b, t)`.
    offsets: Vec<usize>,
    events: Vec<u32>,
}

impl SparseSpikes {
    pub fn empty(shape: Shape5) -> Self {
        SparseSpikes { shape, offsets: vec![0; shape.b * shape.t + 1], events: Vec::new() }
    }

    /// Builds from one bucket per `(b, t)` in batch-major order. Buckets must
    /// be sorted, in range, and no neuron may appear twice within a sample.
    pub fn from_buckets(shape: Shape5, buckets: Vec<Vec<u32>>) -> Result<Self> {
        shape.validate()?;
        if buckets.len() != shape.b * shape.t {
            return Err(Error::Shape(format!(
                "expected {} event buckets for shape {shape}, got {}",
                shape.b * shape.t,
                buckets.len()
            )));
        }
        let frame = shape.frame();
        let mut offsets = Vec::with_capacity(buckets.len() + 1);
        offsets.push(0);
        let mut events = Vec::new();
        let mut seen = vec![false; frame];
        for (k, bucket) in buckets.into_iter().enumerate() {
            if k % shape.t == 0 {
                seen.iter_mut().for_each(|s| *s = false);
            }
            for (j, &e) in bucket.iter().enumerate() {
                if e as usize >= frame {
                    return Err(Error::Shape(format!("event index {e} outside frame of {frame}")));
                }
                if j > 0 && bucket[j - 1] >= e {
                    return Err(Error::InvalidArgument(format!(
                        "events in bucket (b={}, t={}) are not strictly increasing",
                        k / shape.t,
                        k % shape.t
                    )));
                }
                if std::mem::replace(&mut seen[e as usize], true) {
                    return Err(Error::InvalidArgument(format!(
                        "neuron {e} of sample {} fires twice",
                        k / shape.t
                    )));
                }
            }
            events.extend_from_slice(&bucket);
            offsets.push(events.len());
        }
        Ok(SparseSpikes { shape, offsets, events })
    }

    /// Builds from per-sample first-spike maps ([`NEVER`] for silent neurons).
    pub fn from_first_times(shape: Shape5, times: &[Vec<u32>]) -> Result<Self> {
        shape.validate()?;
        if times.len() != shape.b || times.iter().any(|m| m.len() != shape.frame()) {
            return Err(Error::Shape(format!("first-spike maps do not match shape {shape}")));
        }
        let mut offsets = Vec::with_capacity(shape.b * shape.t + 1);
        offsets.push(0);
        let mut events = Vec::new();
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); shape.t];
        for map in times {
            for (i, &t) in map.iter().enumerate() {
                if t == NEVER {
                    continue;
                }
                let bucket = buckets.get_mut(t as usize).ok_or_else(|| {
                    Error::Shape(format!("first-spike step {t} outside {} steps", shape.t))
                })?;
                bucket.push(i as u32);
            }
            for bucket in &mut buckets {
                events.append(bucket);
                offsets.push(events.len());
            }
        }
        Ok(SparseSpikes { shape, offsets, events })
    }

    pub fn shape(&self) -> Shape5 {
        self.shape
    }

    /// New-spike events of bucket `(b, t)`.
    pub fn events(&self, b: usize, t: usize) -> &[u32] {
        let k = b * self.shape.t + t;
        &self.events[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    /// First-spike map of sample `b`.
    pub fn first_times(&self, b: usize) -> Vec<u32> {
        let mut map = vec![NEVER; self.shape.frame()];
        for t in 0..self.shape.t {
            for &e in self.events(b, t) {
                map[e as usize] = t as u32;
            }
        }
        map
    }

    pub fn all_first_times(&self) -> Vec<Vec<u32>> {
        (0..self.shape.b).map(|b| self.first_times(b)).collect()
    }

    /// Same events under a longer time axis.
    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        if steps < self.shape.t {
            return Err(Error::InvalidArgument(format!(
                "cannot shorten {} steps to {steps}",
                self.shape.t
            )));
        }
        let shape = self.shape.with_t(steps);
        let buckets = (0..shape.b)
            .flat_map(|b| {
                (0..steps).map(move |t| if t < self.shape.t { self.events(b, t).to_vec() } else { Vec::new() })
            })
            .collect();
        SparseSpikes::from_buckets(shape, buckets)
    }

    pub fn slice_batch(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.shape.b {
            return Err(Error::InvalidArgument(format!(
                "batch range {start}..{end} invalid for {} samples",
                self.shape.b
            )));
        }
        let t = self.shape.t;
        let lo = self.offsets[start * t];
        let hi = self.offsets[end * t];
        Ok(SparseSpikes {
            shape: self.shape.with_b(end - start),
            offsets: self.offsets[start * t..=end * t].iter().map(|o| o - lo).collect(),
            events: self.events[lo..hi].to_vec(),
        })
    }

    pub fn concat_batch(parts: &[SparseSpikes]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        let inner = first.shape.with_b(1);
        let mut offsets = vec![0];
        let mut events = Vec::new();
        let mut b = 0;
        for p in parts {
            if p.shape.with_b(1) != inner {
                return Err(Error::Shape(format!("cannot concatenate {} with {}", p.shape, first.shape)));
            }
            let base = events.len();
            events.extend_from_slice(&p.events);
            offsets.extend(p.offsets[1..].iter().map(|o| o + base));
            b += p.shape.b;
        }
        Ok(SparseSpikes { shape: inner.with_b(b), offsets, events })
    }

    /// Binary form: `"SPKS"`, version, five u64 dims, then for each bucket a
    /// u32 count followed by its u32 indices, all little-endian.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&[VERSION])?;
        for d in self.shape.dims() {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        for k in 0..self.offsets.len() - 1 {
            let bucket = &self.events[self.offsets[k]..self.offsets[k + 1]];
            out.write_all(&(bucket.len() as u32).to_le_bytes())?;
            for e in bucket {
                out.write_all(&e.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn serialized_len(&self) -> usize {
        MAGIC.len() + 1 + 5 * 8 + 4 * (self.offsets.len() - 1) + 4 * self.events.len()
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut head = [0u8; 5];
        input.read_exact(&mut head).map_err(|_| Error::Truncated { expected: 5, found: 0 })?;
        if &head[..4] != MAGIC {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(MAGIC).into_owned(),
                found: String::from_utf8_lossy(&head[..4]).into_owned(),
            });
        }
        if head[4] != VERSION {
            return Err(Error::UnsupportedVersion(head[4]));
        }
        let mut dims = [0u64; 5];
        for d in &mut dims {
            *d = read_u64(&mut input)?;
        }
        checked_numel(&dims)?;
        let shape = Shape5::new(
            dims[0] as usize,
            dims[1] as usize,
            dims[2] as usize,
            dims[3] as usize,
            dims[4] as usize,
        )?;
        let mut buckets = Vec::with_capacity(shape.b * shape.t);
        for _ in 0..shape.b * shape.t {
            let n = read_u32(&mut input)? as usize;
            if n > shape.frame() {
                return Err(Error::Shape(format!("bucket of {n} events exceeds frame {}", shape.frame())));
            }
            let mut bucket = Vec::with_capacity(n);
            for _ in 0..n {
                bucket.push(read_u32(&mut input)?);
            }
            buckets.push(bucket);
        }
        SparseSpikes::from_buckets(shape, buckets)
    }
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf).map_err(|_| Error::Truncated { expected: 8, found: 0 })?;
    Ok(u64::from_le_bytes(buf))
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf).map_err(|_| Error::Truncated { expected: 4, found: 0 })?;
    Ok(u32::from_le_bytes(buf))
}

/// Converts a cumulative dense train. Fails on the first index that drops
/// from 1 back to 0.
pub fn to_sparse(x: &Spikes) -> Result<SparseSpikes> {
    let s = x.shape();
    let frame = s.frame();
    let mut buckets = Vec::with_capacity(s.b * s.t);
    for b in 0..s.b {
        for t in 0..s.t {
            let cur = x.frame(b, t);
            let mut bucket = Vec::new();
            for i in 0..frame {
                let was = t > 0 && x.frame(b, t - 1)[i] != 0;
                let now = cur[i] != 0;
                if was && !now {
                    let (c, h, w) = (i / s.plane(), (i % s.plane()) / s.w, i % s.w);
                    return Err(Error::NonCumulative { b, t, c, h, w });
                }
                if now && !was {
                    bucket.push(i as u32);
                }
            }
            buckets.push(bucket);
        }
    }
    Ok(SparseSpikes { shape: s, offsets: offsets_of(&buckets), events: buckets.concat() })
}

fn offsets_of(buckets: &[Vec<u32>]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(buckets.len() + 1);
    offsets.push(0);
    for b in buckets {
        offsets.push(offsets.last().unwrap() + b.len());
    }
    offsets
}

pub fn to_dense(s: &SparseSpikes) -> Spikes {
    let shape = s.shape;
    let mut out = Spikes::zeros(shape);
    for b in 0..shape.b {
        for t in 0..shape.t {
            for &e in s.events(b, t) {
                for tt in t..shape.t {
                    out.frame_mut(b, tt)[e as usize] = 1;
                }
            }
        }
    }
    out
}

fn check_conv(s: Shape5, layer: &ConvLayer) -> Result<Shape5> {
    layer.output_shape(s)
}

/// Convolution of the dense train represented by `s`. Each event adds its
/// kernel footprint once; potentials at step `t` are the running sum.
pub fn sparse_conv(s: &SparseSpikes, layer: &ConvLayer) -> Result<Potentials> {
    let in_shape = s.shape;
    let out_shape = check_conv(in_shape, layer)?;
    let weights_cl = layer.weights_channels_last();
    let co_n = layer.out_channels;
    let plane_out = out_shape.plane();
    let mut out = Potentials::zeros(out_shape);
    out.data_mut()
        .par_chunks_mut(out_shape.t * out_shape.frame())
        .enumerate()
        .for_each(|(b, dst)| {
            let mut acc = vec![0.0f32; plane_out * co_n];
            let mut any = false;
            for t in 0..in_shape.t {
                let events = s.events(b, t);
                for &e in events {
                    let (ci, iy, ix) = unflatten(e, in_shape);
                    scatter_event(layer, &weights_cl, out_shape, ci, iy, ix, 1.0, &mut acc);
                }
                any |= !events.is_empty();
                if !any {
                    continue;
                }
                let frame = &mut dst[t * out_shape.frame()..(t + 1) * out_shape.frame()];
                for p in 0..plane_out {
                    for (co, &v) in acc[p * co_n..(p + 1) * co_n].iter().enumerate() {
                        frame[co * plane_out + p] = v;
                    }
                }
            }
        });
    Ok(out)
}

#[inline]
fn unflatten(e: u32, s: Shape5) -> (usize, usize, usize) {
    let e = e as usize;
    let plane = s.plane();
    (e / plane, (e % plane) / s.w, e % s.w)
}

/// Fire on dense potentials into the sparse form. The thresholded train must
/// be cumulative.
pub fn sparse_fire(p: &Potentials, threshold: Option<f32>) -> Result<SparseSpikes> {
    to_sparse(&fire(p, threshold))
}

/// Threshold crossings of one sample's conv potentials: first step with
/// `potential > threshold` (and `> 0`), the potential at that step, and the
/// potential at the last step, all indexed by flat output `(c, h, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Crossings {
    pub shape: Shape5,
    pub first: Vec<u32>,
    pub at: Vec<f32>,
    pub last: Vec<f32>,
}

impl Crossings {
    /// Lateral inhibition: silences every channel but the survivor at each
    /// position.
    pub fn inhibit(&mut self) {
        let plane = self.shape.plane();
        let keep = inhibit_survivors(&self.first, &self.last, self.shape.c, plane);
        for (i, &k) in keep.iter().enumerate() {
            if k == usize::MAX {
                continue;
            }
            for c in 0..self.shape.c {
                if c != k {
                    let j = c * plane + i;
                    self.first[j] = NEVER;
                    self.at[j] = 0.0;
                    self.last[j] = 0.0;
                }
            }
        }
    }

    /// Convolutional winner-take-all for this sample, labelled batch index `b`.
    pub fn wta(&self, b: usize, radius: usize, count: usize) -> Vec<Winner> {
        conv_wta_sample(&self.first, &self.at, self.shape.with_b(1), b, radius, count)
    }
}

/// When a potential counts as a spike.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FireRule {
    /// `threshold(p, thr)` then `fire(p, None)`: fires when `p > max(thr, 0)`.
    Above(f32),
    /// `fire(p, Some(thr))`: fires when `p >= thr`; `thr` must be positive.
    AtLeast(f32),
}

impl FireRule {
    #[inline]
    pub fn fires(self, v: f32) -> bool {
        match self {
            FireRule::Above(thr) => v > thr && v > 0.0,
            FireRule::AtLeast(thr) => v >= thr,
        }
    }

    fn check(self) -> Result<()> {
        match self {
            FireRule::AtLeast(thr) if !(thr > 0.0) => Err(Error::Unsupported(format!(
                "sparse firing needs a positive inclusive threshold, got {thr}"
            ))),
            _ => Ok(()),
        }
    }
}

pub(crate) fn check_nonnegative(weights: &[f32]) -> Result<()> {
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::Unsupported(
            "sparse layers need nonnegative weights to keep spike trains cumulative".into(),
        ));
    }
    Ok(())
}

/// Fused conv + fire for the sparse pipeline: first-crossing extraction from
/// the potentials of `conv_forward(to_dense(s))` under `rule`. Requires
/// nonnegative weights so that potentials never decrease over time and the
/// fired train stays cumulative.
pub fn sparse_crossings(s: &SparseSpikes, layer: &ConvLayer, rule: FireRule) -> Result<Vec<Crossings>> {
    let in_shape = s.shape;
    let out_shape = check_conv(in_shape, layer)?;
    rule.check()?;
    check_nonnegative(&layer.weights)?;
    let weights_cl = layer.weights_channels_last();
    let co_n = layer.out_channels;
    let plane_out = out_shape.plane();
    let frame = out_shape.frame();
    Ok((0..in_shape.b)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0f32; plane_out * co_n];
            let mut first = vec![NEVER; frame];
            let mut at = vec![0.0f32; frame];
            for t in 0..in_shape.t {
                let events = s.events(b, t);
                if events.is_empty() {
                    continue;
                }
                for &e in events {
                    let (ci, iy, ix) = unflatten(e, in_shape);
                    scatter_event(layer, &weights_cl, out_shape, ci, iy, ix, 1.0, &mut acc);
                }
                for p in 0..plane_out {
                    for (co, &v) in acc[p * co_n..(p + 1) * co_n].iter().enumerate() {
                        let j = co * plane_out + p;
                        if first[j] == NEVER && rule.fires(v) {
                            first[j] = t as u32;
                            at[j] = v;
                        }
                    }
                }
            }
            let mut last = vec![0.0f32; frame];
            for p in 0..plane_out {
                for (co, &v) in acc[p * co_n..(p + 1) * co_n].iter().enumerate() {
                    let j = co * plane_out + p;
                    if first[j] != NEVER {
                        last[j] = v;
                    }
                }
            }
            Crossings { shape: out_shape.with_b(1), first, at, last }
        })
        .collect())
}

/// Spikes of crossings (one per sample) as a sparse train.
pub fn crossings_to_sparse(crossings: &[Crossings]) -> Result<SparseSpikes> {
    let shape = crossings
        .first()
        .ok_or_else(|| Error::InvalidArgument("no crossings".into()))?
        .shape
        .with_b(crossings.len());
    let maps: Vec<Vec<u32>> = crossings.iter().map(|c| c.first.clone()).collect();
    SparseSpikes::from_first_times(shape, &maps)
}

/// Max pooling: each output cell fires at the earliest first-spike step in
/// its window.
pub fn sparse_pool(s: &SparseSpikes, cfg: &PoolConfig) -> Result<SparseSpikes> {
    let in_shape = s.shape;
    let out_shape = cfg.output_shape(in_shape)?;
    let maps: Vec<Vec<u32>> = (0..in_shape.b)
        .into_par_iter()
        .map(|b| pool_times(&s.first_times(b), in_shape, out_shape, cfg))
        .collect();
    SparseSpikes::from_first_times(out_shape, &maps)
}

/// Pools a first-spike map of shape `C x H x W` (minimum over each window).
pub fn pool_times(times: &[u32], in_shape: Shape5, out_shape: Shape5, cfg: &PoolConfig) -> Vec<u32> {
    let mut out = vec![NEVER; out_shape.frame()];
    for c in 0..in_shape.c {
        let plane = &times[c * in_shape.plane()..(c + 1) * in_shape.plane()];
        for oy in 0..out_shape.h {
            for ox in 0..out_shape.w {
                out[(c * out_shape.h + oy) * out_shape.w + ox] = cfg
                    .window_cells(in_shape.h, in_shape.w, oy, ox)
                    .map(|(y, x)| plane[y * in_shape.w + x])
                    .min()
                    .unwrap_or(NEVER);
            }
        }
    }
    out
}

impl ConvLayer {
    /// STDP with sparse input and output trains.
    pub fn stdp_sparse(&mut self, input: &SparseSpikes, winners: &[Winner], output: &SparseSpikes) -> Result<()> {
        let in_shape = input.shape();
        let out_shape = self.output_shape(in_shape)?;
        if output.shape() != out_shape {
            return Err(Error::Shape(format!(
                "output spikes {} do not match layer output {out_shape}",
                output.shape()
            )));
        }
        let pre = input.all_first_times();
        let post = output.all_first_times();
        self.stdp_with_times(in_shape, out_shape, &pre, winners, |w| {
            crate::learning::post_time(w, &post, out_shape)
        })
    }
}
