//! Conversion between analog feature maps and spike trains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Potentials, Spikes};

fn check_single_step(x: &Potentials, steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(Error::InvalidArgument("coding needs at least one time step".into()));
    }
    if x.shape().t != 1 {
        return Err(Error::Shape(format!(
            "coding expects a single time step, got shape {}",
            x.shape()
        )));
    }
    Ok(())
}

/// First-spike step of every value of one sample under rank-order coding;
/// `None` for values that never fire.
pub fn rank_bins(values: &[f32], steps: usize, sort: bool) -> Vec<Option<usize>> {
    let mut bins = vec![None; values.len()];
    let positive: Vec<usize> = (0..values.len()).filter(|&i| values[i] > 0.0).collect();
    if positive.is_empty() {
        return bins;
    }
    if sort {
        let mut order = positive;
        // Descending intensity; equal values keep index order.
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        let n = order.len();
        for (rank, &i) in order.iter().enumerate() {
            bins[i] = Some(rank * steps / n);
        }
    } else {
        let (lo, hi) = positive.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(values[i]), hi.max(values[i]))
        });
        let ulp = f64::from(f32::from_bits(hi.to_bits() + 1) - hi);
        let span = f64::from(hi) - f64::from(lo) + ulp;
        for &i in &positive {
            let bin = (steps as f64 * (f64::from(hi) - f64::from(values[i])) / span).floor();
            bins[i] = Some((bin.max(0.0) as usize).min(steps - 1));
        }
    }
    bins
}

/// Rank-order coding into `steps` cumulative time steps.
///
/// Within each sample, strictly positive values are ranked from the highest
/// down. With `sort` the ranks are split into `steps` contiguous bins of
/// (nearly) equal size; without it the bin follows the value's position
/// between the sample's maximum and minimum. A value fires from its bin
/// onward; zero and negative values never fire.
pub fn rank_code(x: &Potentials, steps: usize, sort: bool) -> Result<Spikes> {
    check_single_step(x, steps)?;
    let s = x.shape();
    let mut out = Spikes::zeros(s.with_t(steps));
    for b in 0..s.b {
        let bins = rank_bins(x.sample(b), steps, sort);
        for (i, bin) in bins.into_iter().enumerate() {
            if let Some(first) = bin {
                for t in first..steps {
                    out.frame_mut(b, t)[i] = 1;
                }
            }
        }
    }
    Ok(out)
}

/// Rate coding: each step independently emits a spike with probability
/// `v / max(sample)` (clamped to `[0, 1]`). Sample `b` draws from stream `b`
/// of a generator seeded with `seed`, so the order in which samples are
/// processed cannot change the output. The output is not cumulative.
pub fn rate_code(x: &Potentials, steps: usize, seed: u64) -> Result<Spikes> {
    rate_code_from(x, steps, seed, 0)
}

/// [`rate_code`] for a batch whose first sample has dataset index `first`;
/// sample `b` uses stream `first + b`, which keeps codes stable when a
/// dataset is cut into batches of any size.
pub fn rate_code_from(x: &Potentials, steps: usize, seed: u64, first: u64) -> Result<Spikes> {
    check_single_step(x, steps)?;
    let s = x.shape();
    let mut out = Spikes::zeros(s.with_t(steps));
    for b in 0..s.b {
        rate_code_sample(x.sample(b), steps, seed, first + b as u64, |t, i| out.frame_mut(b, t)[i] = 1);
    }
    Ok(out)
}

/// Rate codes one sample, calling `emit(t, i)` for every spike.
pub(crate) fn rate_code_sample(
    values: &[f32],
    steps: usize,
    seed: u64,
    stream: u64,
    mut emit: impl FnMut(usize, usize),
) {
    let max = values.iter().copied().fold(0.0f32, f32::max);
    if max <= 0.0 {
        return;
    }
    let probs: Vec<(usize, f32)> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, &v)| (i, (v / max).clamp(0.0, 1.0)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    for t in 0..steps {
        for &(i, p) in &probs {
            if rng.random::<f32>() < p {
                emit(t, i);
            }
        }
    }
}

/// Fraction of steps with a spike, as a single-step tensor. For cumulative
/// trains this is `(T - t_first) / T`.
pub fn gather(spikes: &Spikes) -> Potentials {
    let s = spikes.shape();
    let mut out = Potentials::zeros(s.with_t(1));
    let steps = s.t as f32;
    for b in 0..s.b {
        let dst = out.frame_mut(b, 0);
        for t in 0..s.t {
            for (d, &v) in dst.iter_mut().zip(spikes.frame(b, t)) {
                *d += f32::from(v != 0);
            }
        }
        for d in dst.iter_mut() {
            *d /= steps;
        }
    }
    out
}
