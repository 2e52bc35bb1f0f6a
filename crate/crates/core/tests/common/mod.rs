//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snn_core::layers::ConvLayer;
use snn_core::learning::Winner;
use snn_core::{Potentials, Shape5, Spikes};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn shape(b: usize, t: usize, c: usize, h: usize, w: usize) -> Shape5 {
    Shape5::new(b, t, c, h, w).unwrap()
}

pub fn random_spikes(r: &mut ChaCha8Rng, s: Shape5, p: f64) -> Spikes {
    Spikes::from_vec(s, (0..s.numel()).map(|_| u8::from(r.random_bool(p))).collect()).unwrap()
}

/// Cumulative spikes: each neuron fires from a random step, or never.
pub fn random_cumulative(r: &mut ChaCha8Rng, s: Shape5, p_never: f64) -> Spikes {
    let mut out = Spikes::zeros(s);
    for b in 0..s.b {
        for i in 0..s.frame() {
            if r.random_bool(p_never) {
                continue;
            }
            let t0 = r.random_range(0..s.t);
            for t in t0..s.t {
                out.frame_mut(b, t)[i] = 1;
            }
        }
    }
    out
}

pub fn random_potentials(r: &mut ChaCha8Rng, s: Shape5, lo: f32, hi: f32) -> Potentials {
    Potentials::from_vec(s, (0..s.numel()).map(|_| r.random_range(lo..hi)).collect()).unwrap()
}

/// Random nondecreasing-in-time potentials with small integer values, so ties
/// in crossing time and potential are common.
pub fn random_cumulative_potentials(r: &mut ChaCha8Rng, s: Shape5) -> Potentials {
    let mut p = Potentials::zeros(s);
    for b in 0..s.b {
        for i in 0..s.frame() {
            let mut v = 0.0f32;
            for t in 0..s.t {
                v += r.random_range(0..3) as f32;
                p.frame_mut(b, t)[i] = v;
            }
        }
    }
    p
}

pub fn eq1(input: usize, kernel: usize, pad: usize) -> Option<usize> {
    (input + 2 * pad).checked_sub(kernel).map(|d| d + 1)
}

pub fn eq2(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    (input + 2 * pad).checked_sub(kernel).map(|d| d / stride + 1)
}

/// Six-loop convolution in f64.
pub fn conv_oracle(layer: &ConvLayer, x: &Spikes) -> (Shape5, Vec<f64>) {
    let s = x.shape();
    let (kh, kw) = layer.kernel;
    let (sh, sw) = layer.stride;
    let (ph, pw) = layer.pad;
    let ho = eq2(s.h, kh, sh, ph).unwrap();
    let wo = eq2(s.w, kw, sw, pw).unwrap();
    let os = shape(s.b, s.t, layer.out_channels, ho, wo);
    let mut out = vec![0.0f64; os.numel()];
    for b in 0..s.b {
        for t in 0..s.t {
            for co in 0..layer.out_channels {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0f64;
                        for ci in 0..s.c {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * sh + ky) as isize - ph as isize;
                                    let ix = (ox * sw + kx) as isize - pw as isize;
                                    if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                                        continue;
                                    }
                                    let v = x.get(b, t, ci, iy as usize, ix as usize);
                                    acc += f64::from(v)
                                        * f64::from(layer.weights[layer.weight_index(co, ci, ky, kx)]);
                                }
                            }
                        }
                        out[os.index(b, t, co, oy, ox)] = acc;
                    }
                }
            }
        }
    }
    (os, out)
}

/// Depthwise filter oracle: output channel `ci * K + k`.
pub fn filter_oracle(kernels: &[Vec<f32>], radius: usize, pad: usize, x: &Potentials) -> (Shape5, Vec<f64>) {
    let s = x.shape();
    let k = 2 * radius + 1;
    let ho = eq1(s.h, k, pad).unwrap();
    let wo = eq1(s.w, k, pad).unwrap();
    let os = shape(s.b, s.t, s.c * kernels.len(), ho, wo);
    let mut out = vec![0.0f64; os.numel()];
    for b in 0..s.b {
        for t in 0..s.t {
            for ci in 0..s.c {
                for (ki, kern) in kernels.iter().enumerate() {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let mut acc = 0.0f64;
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy + ky) as isize - pad as isize;
                                    let ix = (ox + kx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                                        continue;
                                    }
                                    acc += f64::from(x.get(b, t, ci, iy as usize, ix as usize))
                                        * f64::from(kern[ky * k + kx]);
                                }
                            }
                            out[os.index(b, t, ci * kernels.len() + ki, oy, ox)] = acc;
                        }
                    }
                }
            }
        }
    }
    (os, out)
}

fn crosses(v: f32, thr: Option<f32>) -> bool {
    match thr {
        Some(t) => v >= t,
        None => v > 0.0,
    }
}

/// First crossing step and the potential there, for one neuron.
fn crossing(p: &Potentials, b: usize, c: usize, h: usize, w: usize, thr: Option<f32>) -> Option<(usize, f32)> {
    (0..p.shape().t).find_map(|t| {
        let v = p.get(b, t, c, h, w);
        crosses(v, thr).then_some((t, v))
    })
}

/// Exhaustive convolutional WTA: repeatedly scans every neuron.
pub fn conv_wta_oracle(p: &Potentials, radius: usize, count: usize, thr: Option<f32>) -> Vec<Winner> {
    let s = p.shape();
    let mut winners = Vec::new();
    for b in 0..s.b {
        let mut suppressed = vec![false; s.frame()];
        for _ in 0..count {
            let mut best: Option<(usize, f32, usize, usize, usize)> = None;
            for c in 0..s.c {
                for h in 0..s.h {
                    for w in 0..s.w {
                        if suppressed[(c * s.h + h) * s.w + w] {
                            continue;
                        }
                        if let Some((t, v)) = crossing(p, b, c, h, w, thr) {
                            let better = match best {
                                None => true,
                                Some((bt, bv, ..)) => t < bt || (t == bt && v > bv),
                            };
                            if better {
                                best = Some((t, v, c, h, w));
                            }
                        }
                    }
                }
            }
            let Some((t, _, c, h, w)) = best else { break };
            winners.push(Winner { b, t, c, h, w, config: 0 });
            for cc in 0..s.c {
                for hh in 0..s.h {
                    for ww in 0..s.w {
                        if cc == c || (hh.abs_diff(h) <= radius && ww.abs_diff(w) <= radius) {
                            suppressed[(cc * s.h + hh) * s.w + ww] = true;
                        }
                    }
                }
            }
        }
    }
    winners
}

/// Exhaustive fully connected WTA over the flattened `C x H x W` frame.
pub fn fc_wta_oracle(p: &Potentials, radius: usize, count: usize, thr: Option<f32>) -> Vec<Winner> {
    let s = p.shape();
    let n = s.frame();
    let mut winners = Vec::new();
    for b in 0..s.b {
        let mut suppressed = vec![false; n];
        for _ in 0..count {
            let mut best: Option<(usize, f32, usize)> = None;
            for o in 0..n {
                if suppressed[o] {
                    continue;
                }
                let found = (0..s.t).find_map(|t| {
                    let v = p.frame(b, t)[o];
                    crosses(v, thr).then_some((t, v))
                });
                if let Some((t, v)) = found {
                    if best.is_none_or(|(bt, bv, _)| t < bt || (t == bt && v > bv)) {
                        best = Some((t, v, o));
                    }
                }
            }
            let Some((t, _, o)) = best else { break };
            winners.push(Winner { b, t, c: o, h: 0, w: 0, config: 0 });
            for (j, sup) in suppressed.iter_mut().enumerate() {
                if j.abs_diff(o) <= radius {
                    *sup = true;
                }
            }
        }
    }
    winners
}

/// Exhaustive lateral inhibition.
pub fn inhibit_oracle(p: &Potentials, thr: Option<f32>) -> Potentials {
    let s = p.shape();
    let mut out = p.clone();
    for b in 0..s.b {
        for h in 0..s.h {
            for w in 0..s.w {
                let mut best: Option<(usize, f32, usize)> = None;
                for c in 0..s.c {
                    if let Some((t, _)) = crossing(p, b, c, h, w, thr) {
                        let last = p.get(b, s.t - 1, c, h, w);
                        if best.is_none_or(|(bt, bl, _)| t < bt || (t == bt && last > bl)) {
                            best = Some((t, last, c));
                        }
                    }
                }
                if let Some((_, _, keep)) = best {
                    for c in (0..s.c).filter(|&c| c != keep) {
                        for t in 0..s.t {
                            out.set(b, t, c, h, w, 0.0);
                        }
                    }
                }
            }
        }
    }
    out
}

/// MNIST directory: `$SNN_MNIST_DIR`, else `<workspace>/data/mnist`.
pub fn mnist_dir() -> PathBuf {
    std::env::var_os("SNN_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}
