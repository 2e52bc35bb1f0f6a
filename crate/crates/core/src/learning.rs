//! Plasticity and competition: lateral inhibition, winner-take-all selection,
//! and the bounded STDP rule with optional stabilization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{ConvLayer, FcLayer};
use crate::tensor::{Potentials, Shape5, Spikes};

/// Marker for an input that never fires.
pub const NEVER: u32 = u32::MAX;

/// One learning-rule configuration.
///
/// Updates potentiate with `positive` when the presynaptic spike is no later
/// than the winner, and use `negative` otherwise. With `stabilize` the step is
/// scaled by `(W - lower) * (upper - W)`; the result is always clamped to
/// `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdpConfig {
    pub positive: f32,
    pub negative: f32,
    #[serde(default = "default_true")]
    pub stabilize: bool,
    #[serde(default)]
    pub lower: f32,
    #[serde(default = "default_upper")]
    pub upper: f32,
}

fn default_true() -> bool {
    true
}

fn default_upper() -> f32 {
    1.0
}

impl Default for StdpConfig {
    fn default() -> Self {
        StdpConfig { positive: 0.0004, negative: -0.0003, stabilize: true, lower: 0.0, upper: 1.0 }
    }
}

impl StdpConfig {
    pub fn new(positive: f32, negative: f32) -> Self {
        StdpConfig { positive, negative, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower < self.upper) {
            return Err(Error::Config(format!(
                "STDP lower bound {} must be below upper bound {}",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    /// The punishing counterpart: depress causal pairs and potentiate the rest.
    pub fn swapped(&self) -> Self {
        StdpConfig { positive: self.negative, negative: self.positive, ..*self }
    }

    /// New weight after one pairing. `causal` is `t_pre <= t_post`.
    #[inline]
    pub fn apply(&self, w: f32, causal: bool) -> f32 {
        let rate = if causal { self.positive } else { self.negative };
        let delta = if self.stabilize { rate * (w - self.lower) * (self.upper - w) } else { rate };
        (w + delta).clamp(self.lower, self.upper)
    }
}

/// A neuron selected for plasticity. `t` is the step it first crossed
/// threshold; `h` and `w` are zero for fully connected layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Winner {
    pub b: usize,
    pub t: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub config: usize,
}

#[inline]
fn crosses(v: f32, threshold: Option<f32>) -> bool {
    match threshold {
        Some(thr) => v >= thr,
        None => v > 0.0,
    }
}

/// First step at which each neuron of sample `b` crosses threshold, plus the
/// potential at that step. Uncrossed neurons get [`NEVER`].
fn first_crossings(p: &Potentials, b: usize, threshold: Option<f32>) -> (Vec<u32>, Vec<f32>) {
    let s = p.shape();
    let n = s.frame();
    let mut first = vec![NEVER; n];
    let mut at = vec![0.0f32; n];
    for t in 0..s.t {
        let frame = p.frame(b, t);
        for i in 0..n {
            if first[i] == NEVER && crosses(frame[i], threshold) {
                first[i] = t as u32;
                at[i] = frame[i];
            }
        }
    }
    (first, at)
}

/// Lateral inhibition across feature maps.
///
/// At every `(b, h, w)` the channel that crosses threshold first survives
/// (ties: larger final-step potential, then lower channel index) and all other
/// channels are zeroed at every step. Locations where nothing crosses are left
/// untouched.
pub fn inhibit(p: &mut Potentials, threshold: Option<f32>) {
    let s = p.shape();
    let plane = s.plane();
    for b in 0..s.b {
        let (first, _) = first_crossings(p, b, threshold);
        let keep = inhibit_survivors(&first, p.frame(b, s.t - 1), s.c, plane);
        for t in 0..s.t {
            let frame = p.frame_mut(b, t);
            for (i, &k) in keep.iter().enumerate() {
                if k == usize::MAX {
                    continue;
                }
                for c in 0..s.c {
                    if c != k {
                        frame[c * plane + i] = 0.0;
                    }
                }
            }
        }
    }
}

/// Surviving channel at every spatial position of one sample, or
/// `usize::MAX` where no channel crosses.
pub(crate) fn inhibit_survivors(first: &[u32], last: &[f32], channels: usize, plane: usize) -> Vec<usize> {
    let mut keep = vec![usize::MAX; plane];
    for (i, k) in keep.iter_mut().enumerate() {
        let mut best: Option<(u32, f32, usize)> = None;
        for c in 0..channels {
            let f = first[c * plane + i];
            if f == NEVER {
                continue;
            }
            let v = last[c * plane + i];
            let better = match best {
                None => true,
                Some((bf, bv, _)) => f < bf || (f == bf && v > bv),
            };
            if better {
                best = Some((f, v, c));
            }
        }
        if let Some((_, _, c)) = best {
            *k = c;
        }
    }
    keep
}

/// Non-mutating form of [`inhibit`].
pub fn inhibited(p: &Potentials, threshold: Option<f32>) -> Potentials {
    let mut out = p.clone();
    inhibit(&mut out, threshold);
    out
}

/// Candidates of one sample, bucketed by first-crossing step.
fn crossing_buckets(first: &[u32], at: &[f32], steps: usize) -> Vec<Vec<(f32, usize)>> {
    let mut buckets = vec![Vec::new(); steps];
    for (i, &f) in first.iter().enumerate() {
        if f != NEVER {
            buckets[f as usize].push((at[i], i));
        }
    }
    buckets
}

/// Earliest, then strongest, then lowest-index candidate accepted by `allowed`.
fn pick(buckets: &[Vec<(f32, usize)>], allowed: impl Fn(usize) -> bool) -> Option<(usize, usize)> {
    for (t, bucket) in buckets.iter().enumerate() {
        let mut best: Option<(f32, usize)> = None;
        for &(v, i) in bucket {
            if !allowed(i) {
                continue;
            }
            if best.is_none_or(|(bv, bi)| v > bv || (v == bv && i < bi)) {
                best = Some((v, i));
            }
        }
        if let Some((_, i)) = best {
            return Some((t, i));
        }
    }
    None
}

/// Winner-take-all over convolutional feature maps.
///
/// Up to `count` winners per sample are chosen iteratively; each pick
/// suppresses its whole channel and the square of half-width `radius` around
/// its position in every channel.
pub fn conv_wta(p: &Potentials, radius: usize, count: usize, threshold: Option<f32>) -> Vec<Winner> {
    let s = p.shape();
    let mut winners = Vec::new();
    for b in 0..s.b {
        let (first, at) = first_crossings(p, b, threshold);
        winners.extend(conv_wta_sample(&first, &at, s, b, radius, count));
    }
    winners
}

/// [`conv_wta`] for sample `b` given its first-crossing steps and the
/// potentials at those steps.
pub(crate) fn conv_wta_sample(
    first: &[u32],
    at: &[f32],
    s: Shape5,
    b: usize,
    radius: usize,
    count: usize,
) -> Vec<Winner> {
    let plane = s.plane();
    let buckets = crossing_buckets(first, at, s.t);
    let mut winners = Vec::new();
    let mut channel_off = vec![false; s.c];
    let mut spot_off = vec![false; plane];
    for _ in 0..count {
        let Some((t, i)) = pick(&buckets, |i| !channel_off[i / plane] && !spot_off[i % plane]) else {
            break;
        };
        let (c, y, x) = (i / plane, (i % plane) / s.w, i % s.w);
        winners.push(Winner { b, t, c, h: y, w: x, config: 0 });
        channel_off[c] = true;
        for yy in y.saturating_sub(radius)..=(y + radius).min(s.h - 1) {
            for xx in x.saturating_sub(radius)..=(x + radius).min(s.w - 1) {
                spot_off[yy * s.w + xx] = true;
            }
        }
    }
    winners
}

/// Winner-take-all over fully connected outputs (the flattened frame).
/// Each pick suppresses the indices within `radius` of it.
pub fn fc_wta(p: &Potentials, radius: usize, count: usize, threshold: Option<f32>) -> Vec<Winner> {
    let s = p.shape();
    let n = s.frame();
    let mut winners = Vec::new();
    for b in 0..s.b {
        let (first, at) = first_crossings(p, b, threshold);
        let buckets = crossing_buckets(&first, &at, s.t);
        let mut off = vec![false; n];
        for _ in 0..count {
            let Some((t, i)) = pick(&buckets, |i| !off[i]) else {
                break;
            };
            winners.push(Winner { b, t, c: i, h: 0, w: 0, config: 0 });
            for j in i.saturating_sub(radius)..=(i + radius).min(n - 1) {
                off[j] = true;
            }
        }
    }
    winners
}

/// Routes each winner to the reward (0) or punish (1) configuration depending
/// on whether its class under `target_map` matches the sample's label.
pub fn rstdp_assign(winners: &mut [Winner], labels: &[usize], target_map: &[usize]) -> Result<()> {
    for w in winners.iter_mut() {
        let class = *target_map.get(w.c).ok_or(Error::UnmappedWinner(w.c))?;
        let label = *labels
            .get(w.b)
            .ok_or_else(|| Error::WinnerOutOfRange(format!("no label for batch index {}", w.b)))?;
        w.config = if class == label { 0 } else { 1 };
    }
    Ok(())
}

/// First spike step of every neuron of every sample; [`NEVER`] when silent.
pub fn first_spike_times(spikes: &Spikes) -> Vec<Vec<u32>> {
    let s = spikes.shape();
    (0..s.b)
        .map(|b| {
            let mut first = vec![NEVER; s.frame()];
            for t in 0..s.t {
                for (f, &v) in first.iter_mut().zip(spikes.frame(b, t)) {
                    if *f == NEVER && v != 0 {
                        *f = t as u32;
                    }
                }
            }
            first
        })
        .collect()
}

fn check_winner(w: &Winner, out: Shape5, configs: usize) -> Result<()> {
    if w.b >= out.b || w.t >= out.t || w.c >= out.c || w.h >= out.h || w.w >= out.w {
        return Err(Error::WinnerOutOfRange(format!(
            "winner {:?} outside output shape {out}",
            w
        )));
    }
    if w.config >= configs {
        return Err(Error::MissingConfig { index: w.config, available: configs });
    }
    Ok(())
}

/// Post-synaptic time of a winner: its first output spike, or the winner's own
/// crossing step when the output train is silent there.
pub(crate) fn post_time(w: &Winner, output_first: &[Vec<u32>], out: Shape5) -> u32 {
    let i = (w.c * out.h + w.h) * out.w + w.w;
    match output_first[w.b][i] {
        NEVER => w.t as u32,
        t => t,
    }
}

impl ConvLayer {
    /// Applies STDP for every winner in order.
    pub fn stdp(&mut self, input: &Spikes, winners: &[Winner], output: &Spikes) -> Result<()> {
        let in_shape = input.shape();
        let out_shape = self.output_shape(in_shape)?;
        if output.shape() != out_shape {
            return Err(Error::Shape(format!(
                "output spikes {} do not match layer output {out_shape}",
                output.shape()
            )));
        }
        let pre = first_spike_times(input);
        let post = first_spike_times(output);
        self.stdp_with_times(in_shape, out_shape, &pre, winners, |w| post_time(w, &post, out_shape))
    }

    /// STDP from precomputed presynaptic first-spike maps (`pre[b]` spans one
    /// input frame) and a post-synaptic time per winner.
    pub fn stdp_with_times(
        &mut self,
        in_shape: Shape5,
        out_shape: Shape5,
        pre: &[Vec<u32>],
        winners: &[Winner],
        post: impl Fn(&Winner) -> u32,
    ) -> Result<()> {
        for w in winners {
            check_winner(w, out_shape, self.stdp_configs.len())?;
        }
        let (kh, kw) = self.kernel;
        let plane = in_shape.plane();
        for win in winners {
            let cfg = self.stdp_configs[win.config];
            let t_post = post(win);
            let times = &pre[win.b];
            let y0 = (win.h * self.stride.0) as isize - self.pad.0 as isize;
            let x0 = (win.w * self.stride.1) as isize - self.pad.1 as isize;
            for ci in 0..self.in_channels {
                for dy in 0..kh {
                    let y = y0 + dy as isize;
                    for dx in 0..kw {
                        let x = x0 + dx as isize;
                        let t_pre = if y >= 0 && x >= 0 && (y as usize) < in_shape.h && (x as usize) < in_shape.w {
                            times[ci * plane + y as usize * in_shape.w + x as usize]
                        } else {
                            NEVER
                        };
                        let idx = self.weight_index(win.c, ci, dy, dx);
                        self.weights[idx] = cfg.apply(self.weights[idx], t_pre <= t_post);
                    }
                }
            }
        }
        Ok(())
    }
}

impl FcLayer {
    /// Applies STDP for every winner in order; `winner.c` is the output index.
    pub fn stdp(&mut self, input: &Spikes, winners: &[Winner], output: &Spikes) -> Result<()> {
        let s = input.shape();
        if s.frame() != self.in_size {
            return Err(Error::Geometry(format!(
                "fully connected layer expects {} inputs, got {}",
                self.in_size,
                s.frame()
            )));
        }
        let out_shape = Shape5 { c: self.out_size, h: 1, w: 1, ..s };
        if output.shape().with_b(1) != out_shape.with_b(1) || output.shape().b != s.b {
            return Err(Error::Shape(format!(
                "output spikes {} do not match layer output {out_shape}",
                output.shape()
            )));
        }
        for w in winners {
            check_winner(w, out_shape, self.stdp_configs.len())?;
        }
        let pre = first_spike_times(input);
        let post = first_spike_times(output);
        for win in winners {
            let cfg = self.stdp_configs[win.config];
            let t_post = post_time(win, &post, out_shape);
            for (i, &t_pre) in pre[win.b].iter().enumerate() {
                let idx = i * self.out_size + win.c;
                self.weights[idx] = cfg.apply(self.weights[idx], t_pre <= t_post);
            }
        }
        Ok(())
    }
}
