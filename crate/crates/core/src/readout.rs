//! Linear readout: multinomial logistic regression on standardized features,
//! trained by seeded mini-batch SGD for a fixed number of epochs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ReadoutConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub features: usize,
    pub classes: usize,
    mean: Vec<f32>,
    scale: Vec<f32>,
    /// `classes x features`, row-major.
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl Readout {
    /// Fits on `x` (row-major, `labels.len()` rows).
    pub fn fit(x: &[f32], labels: &[usize], classes: usize, cfg: &ReadoutConfig, seed: u64) -> Result<Self> {
        let n = labels.len();
        if n == 0 || classes == 0 || x.len() % n != 0 {
            return Err(Error::InvalidArgument(format!(
                "readout needs a non-empty {n}-row feature matrix, got {} values",
                x.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidArgument(format!("label {bad} outside {classes} classes")));
        }
        let f = x.len() / n;
        let mut mean = vec![0.0f64; f];
        let mut sq = vec![0.0f64; f];
        for row in x.chunks(f) {
            for (j, &v) in row.iter().enumerate() {
                mean[j] += f64::from(v);
                sq[j] += f64::from(v) * f64::from(v);
            }
        }
        let mean: Vec<f32> = mean.iter().map(|m| (m / n as f64) as f32).collect();
        let scale: Vec<f32> = sq
            .iter()
            .zip(&mean)
            .map(|(s, &m)| {
                let var = s / n as f64 - f64::from(m) * f64::from(m);
                if var > 1e-12 { (1.0 / var.sqrt()) as f32 } else { 0.0 }
            })
            .collect();

        let mut model = Readout {
            features: f,
            classes,
            mean,
            scale,
            weights: vec![0.0; classes * f],
            bias: vec![0.0; classes],
        };
        let z: Vec<f32> = x.chunks(f).flat_map(|row| model.standardize(row)).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        let mut grad_w = vec![0.0f32; classes * f];
        let mut grad_b = vec![0.0f32; classes];
        let mut probs = vec![0.0f32; classes];
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let lr = cfg.learning_rate / (1.0 + epoch as f32 * 0.1);
            for batch in order.chunks(cfg.batch_size) {
                grad_w.iter_mut().for_each(|g| *g = 0.0);
                grad_b.iter_mut().for_each(|g| *g = 0.0);
                for &i in batch {
                    let row = &z[i * f..(i + 1) * f];
                    model.softmax(row, &mut probs);
                    probs[labels[i]] -= 1.0;
                    for (k, &p) in probs.iter().enumerate() {
                        if p == 0.0 {
                            continue;
                        }
                        grad_b[k] += p;
                        for (g, &v) in grad_w[k * f..(k + 1) * f].iter_mut().zip(row) {
                            *g += p * v;
                        }
                    }
                }
                let step = lr / batch.len() as f32;
                let decay = 1.0 - lr * cfg.l2;
                for (w, g) in model.weights.iter_mut().zip(&grad_w) {
                    *w = *w * decay - step * g;
                }
                for (b, g) in model.bias.iter_mut().zip(&grad_b) {
                    *b -= step * g;
                }
            }
        }
        Ok(model)
    }

    fn standardize<'a>(&'a self, row: &'a [f32]) -> impl Iterator<Item = f32> + 'a {
        row.iter().zip(&self.mean).zip(&self.scale).map(|((&v, &m), &s)| (v - m) * s)
    }

    fn softmax(&self, z: &[f32], out: &mut [f32]) {
        let f = self.features;
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.bias[k] + self.weights[k * f..(k + 1) * f].iter().zip(z).map(|(w, v)| w * v).sum::<f32>();
        }
        let max = out.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut total = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
    }

    pub fn predict(&self, x: &[f32]) -> Result<Vec<usize>> {
        let f = self.features;
        if x.len() % f != 0 {
            return Err(Error::Shape(format!("feature rows must have {f} values")));
        }
        let mut probs = vec![0.0f32; self.classes];
        Ok(x
            .chunks(f)
            .map(|row| {
                let z: Vec<f32> = self.standardize(row).collect();
                self.softmax(&z, &mut probs);
                let mut best = 0;
                for k in 1..self.classes {
                    if probs[k] > probs[best] {
                        best = k;
                    }
                }
                best
            })
            .collect())
    }
}

/// Accuracy in percent and per-class recall (NaN-free: classes without
/// samples report 0).
pub fn score(pred: &[usize], truth: &[usize], classes: usize) -> (f64, Vec<f64>) {
    if truth.is_empty() {
        return (0.0, vec![0.0; classes]);
    }
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        totals[t] += 1;
        hits[t] += usize::from(p == t);
    }
    let recall = hits
        .iter()
        .zip(&totals)
        .map(|(&h, &n)| if n == 0 { 0.0 } else { h as f64 / n as f64 })
        .collect();
    (100.0 * correct as f64 / truth.len() as f64, recall)
}
