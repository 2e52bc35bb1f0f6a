//! Property tests for the invariants of each module.

mod common;

use common::*;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;
use snn_core::coding::{gather, rank_bins, rank_code, rate_code};
use snn_core::config::NetworkConfig;
use snn_core::filters::{FilterBank, Zca};
use snn_core::layers::{conv_forward, fc_forward, pad, pool, ConvLayer, FcLayer, PoolConfig};
use snn_core::learning::{conv_wta, fc_wta, first_spike_times, inhibited, StdpConfig, Winner};
use snn_core::sparse::{to_dense, to_sparse, SparseSpikes};
use snn_core::tensor::{fire, quantize, threshold};
use snn_core::{Potentials, Shape5, Spikes};

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig { cases: n, ..ProptestConfig::default() }
}

fn small_shape() -> impl Strategy<Value = Shape5> {
    (1..3usize, 1..5usize, 1..4usize, 1..7usize, 1..7usize).prop_map(|(b, t, c, h, w)| shape(b, t, c, h, w))
}

// ---------------------------------------------------------------- tensor

proptest! {
    #![proptest_config(cases(200))]

    #[test]
    fn indexing_is_a_bijection(s in small_shape(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let (b, t, c, h, w) = (r.random_range(0..s.b), r.random_range(0..s.t), r.random_range(0..s.c),
            r.random_range(0..s.h), r.random_range(0..s.w));
        let mut x = Potentials::zeros(s);
        x.set(b, t, c, h, w, 3.5);
        prop_assert_eq!(x.get(b, t, c, h, w), 3.5);
        prop_assert_eq!(s.index(b, t, c, h, w), (((b * s.t + t) * s.c + c) * s.h + h) * s.w + w);
        prop_assert_eq!(x.data().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn elementwise_ops_are_local(s in small_shape(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_potentials(&mut r, s, -2.0, 2.0);
        let i = r.random_range(0..s.numel());
        let mut y = x.clone();
        y.data_mut()[i] += 1.5;
        let (tx, ty) = (threshold(&x, 0.1), threshold(&y, 0.1));
        let (fx, fy) = (fire(&x, Some(0.3)), fire(&y, Some(0.3)));
        let mut qx = x.data().to_vec();
        let mut qy = y.data().to_vec();
        quantize(&mut qx, -1.0, 0.0, 1.0).unwrap();
        quantize(&mut qy, -1.0, 0.0, 1.0).unwrap();
        for j in (0..s.numel()).filter(|&j| j != i) {
            prop_assert_eq!(tx.data()[j], ty.data()[j]);
            prop_assert_eq!(fx.data()[j], fy.data()[j]);
            prop_assert_eq!(qx[j], qy[j]);
        }
        prop_assert!(fx.data().iter().all(|&v| v <= 1));
        prop_assert!(fire(&x, None).data().iter().all(|&v| v <= 1));
    }
}

// ---------------------------------------------------------------- sparse

proptest! {
    #![proptest_config(cases(150))]

    #[test]
    fn sparse_round_trips(s in small_shape(), seed in any::<u64>(), never in 0.0..1.0f64) {
        let mut r = rng(seed);
        let x = random_cumulative(&mut r, s, never);
        let sp = to_sparse(&x).unwrap();
        prop_assert_eq!(to_dense(&sp), x.clone());
        prop_assert_eq!(to_sparse(&to_dense(&sp)).unwrap(), sp.clone());
        let mut bytes = Vec::new();
        sp.write_to(&mut bytes).unwrap();
        prop_assert_eq!(SparseSpikes::read_from(&bytes[..]).unwrap(), sp.clone());

        let doubled = sp.with_steps(2 * s.t).unwrap();
        for b in 0..s.b {
            for t in 0..s.t {
                prop_assert_eq!(doubled.events(b, t), sp.events(b, t));
            }
        }
        prop_assert_eq!(doubled.event_count(), sp.event_count());
    }
}

#[test]
fn sparse_size_grows_linearly_with_events() {
    let s = shape(1, 4, 8, 10, 10);
    let n = s.frame();
    let size = |k: usize| {
        let times: Vec<u32> = (0..n).map(|i| if i < k { (i % 4) as u32 } else { u32::MAX }).collect();
        SparseSpikes::from_first_times(s, &[times]).unwrap().serialized_len()
    };
    let base = size(0);
    for k in [1, 10, 100, 400, 800] {
        assert_eq!(size(k) - base, 4 * k);
    }
}

// ---------------------------------------------------------------- filters

proptest! {
    #![proptest_config(cases(100))]

    #[test]
    fn filter_shape_law_and_oracle(
        radius in 1..3usize, pad in 0..3usize, c in 1..3usize, h in 1..9usize, w in 1..9usize, seed in any::<u64>()
    ) {
        let mut r = rng(seed);
        let k = 2 * radius + 1;
        let kernels: Vec<Vec<f32>> = (0..2).map(|_| (0..k * k).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let bank = FilterBank::from_kernels(radius, kernels.clone(), (pad, pad)).unwrap();
        let x = random_potentials(&mut r, shape(1, 1, c, h, w), -1.0, 1.0);
        match (eq1(h, k, pad), eq1(w, k, pad)) {
            (Some(ho), Some(wo)) => {
                let y = bank.apply(&x).unwrap();
                prop_assert_eq!(y.shape(), shape(1, 1, 2 * c, ho, wo));
                let (_, oracle) = filter_oracle(&kernels, radius, pad, &x);
                for (a, b) in y.data().iter().zip(&oracle) {
                    prop_assert!((f64::from(*a) - b).abs() <= 1e-5);
                }
            }
            _ => prop_assert!(bank.apply(&x).is_err()),
        }
    }
}

#[test]
fn zca_shrinks_covariance_by_eigenvalues() {
    let mut r = rng(10);
    for trial in 0..20 {
        let (n, f) = (40, 3);
        let mix: Vec<f64> = (0..f * f).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut data = Vec::with_capacity(n * f);
        for _ in 0..n {
            let z: Vec<f64> = (0..f).map(|_| r.random_range(-1.0..1.0)).collect();
            for i in 0..f {
                data.push((0..f).map(|j| mix[i * f + j] * z[j]).sum::<f64>() as f32 + 1.0);
            }
        }
        let x = Potentials::from_vec(shape(n, 1, 1, 1, f), data).unwrap();
        let eps = 0.05 * (trial + 1) as f64;
        let mut zca = Zca::new(eps).unwrap();
        zca.fit(&x).unwrap();
        let y = zca.apply(&x).unwrap();

        let m = |t: &Potentials| DMatrix::from_fn(n, f, |i, j| f64::from(t.sample(i)[j]));
        let cov = |a: DMatrix<f64>| {
            let mut c = a.clone();
            for j in 0..f {
                let mean = a.column(j).mean();
                c.column_mut(j).add_scalar_mut(-mean);
            }
            c.transpose() * &c / (n as f64 - 1.0)
        };
        let eig = SymmetricEigen::new(cov(m(&x)));
        let expect = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l / (l + eps)))
            * eig.eigenvectors.transpose();
        let got = cov(m(&y));
        assert!((got - expect).abs().max() < 1e-4, "trial {trial}");
    }
}

// ---------------------------------------------------------------- coding

proptest! {
    #![proptest_config(cases(300))]

    #[test]
    fn rank_code_invariants(values in prop::collection::vec(-1.0..1.0f32, 1..60), steps in 1..16usize, k in 0.01..100.0f32) {
        let n = values.len();
        let x = Potentials::from_vec(shape(1, 1, 1, 1, n), values.clone()).unwrap();
        let s = rank_code(&x, steps, true).unwrap();
        let first = &first_spike_times(&s)[0];
        for i in 0..n {
            for j in 0..n {
                if values[i] > values[j] && values[j] > 0.0 {
                    prop_assert!(first[i] <= first[j]);
                }
            }
            prop_assert_eq!(first[i] == u32::MAX, values[i] <= 0.0);
        }
        for t in 1..steps {
            prop_assert!(s.frame(0, t).iter().zip(s.frame(0, t - 1)).all(|(a, b)| a >= b));
        }
        let mut sizes = vec![0usize; steps];
        for bin in rank_bins(&values, steps, true).into_iter().flatten() {
            sizes[bin] += 1;
        }
        let positives = values.iter().filter(|&&v| v > 0.0).count();
        if positives >= steps {
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
        let scaled = Potentials::from_vec(x.shape(), values.iter().map(|v| v * k).collect()).unwrap();
        if scaled.data().iter().zip(&values).all(|(a, b)| (*a > 0.0) == (*b > 0.0)) {
            let ranks_kept = (0..n).all(|i| (0..n).all(|j| (values[i] > values[j]) == (scaled.data()[i] > scaled.data()[j])));
            if ranks_kept {
                prop_assert_eq!(rank_code(&scaled, steps, true).unwrap(), s.clone());
            }
        }
        let g = gather(&s);
        for i in 0..n {
            for j in 0..n {
                if first[i] <= first[j] {
                    prop_assert!(g.data()[i] >= g.data()[j]);
                }
            }
        }
    }

    #[test]
    fn rate_code_is_reproducible(values in prop::collection::vec(-1.0..1.0f32, 1..40), seed in any::<u64>()) {
        let x = Potentials::from_vec(shape(1, 1, 1, 1, values.len()), values).unwrap();
        prop_assert_eq!(rate_code(&x, 20, seed).unwrap(), rate_code(&x, 20, seed).unwrap());
    }
}

// ---------------------------------------------------------------- layers

proptest! {
    #![proptest_config(cases(200))]

    #[test]
    fn conv_shape_law_and_oracle(
        cin in 1..3usize, cout in 1..3usize, k in 1..4usize, st in 1..3usize, p in 0..2usize,
        h in 1..8usize, w in 1..8usize, t in 1..3usize, seed in any::<u64>(), integer in any::<bool>()
    ) {
        let mut r = rng(seed);
        let mut layer = ConvLayer::new(cin, cout, (k, k), (st, st), (p, p), 0.5, 0.3, seed).unwrap();
        if integer {
            layer.weights.iter_mut().for_each(|v| *v = (*v * 4.0).round());
        }
        let x = random_spikes(&mut r, shape(2, t, cin, h, w), 0.4);
        match (eq2(h, k, st, p), eq2(w, k, st, p)) {
            (Some(ho), Some(wo)) => {
                let y = conv_forward(&layer, &x).unwrap();
                prop_assert_eq!(y.shape(), shape(2, t, cout, ho, wo));
                let (_, oracle) = conv_oracle(&layer, &x);
                let tol = if integer { 0.0 } else { 1e-4 };
                for (a, b) in y.data().iter().zip(&oracle) {
                    prop_assert!((f64::from(*a) - b).abs() <= tol);
                }
            }
            _ => prop_assert!(conv_forward(&layer, &x).is_err()),
        }
    }

    #[test]
    fn pool_shape_law_and_min_first_spike(
        win in 1..4usize, st in 1..4usize, p in 0..2usize, h in 1..9usize, w in 1..9usize, seed in any::<u64>()
    ) {
        let mut r = rng(seed);
        let cfg = PoolConfig::new(win).with_stride(st).with_pad(p);
        let x = random_cumulative(&mut r, shape(1, 4, 2, h, w), 0.3);
        match (eq2(h, win, st, p), eq2(w, win, st, p)) {
            (Some(ho), Some(wo)) => {
                let y = pool(&x, &cfg, None).unwrap();
                prop_assert_eq!(y.shape(), shape(1, 4, 2, ho, wo));
                let fx = &first_spike_times(&x)[0];
                let fy = &first_spike_times(&y)[0];
                for c in 0..2 {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let mut best = u32::MAX;
                            for dy in 0..win {
                                for dx in 0..win {
                                    let iy = (oy * st + dy) as isize - p as isize;
                                    let ix = (ox * st + dx) as isize - p as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        best = best.min(fx[(c * h + iy as usize) * w + ix as usize]);
                                    }
                                }
                            }
                            prop_assert_eq!(fy[(c * ho + oy) * wo + ox], best);
                        }
                    }
                }
            }
            _ => prop_assert!(pool(&x, &cfg, None).is_err()),
        }
    }

    #[test]
    fn time_steps_are_independent(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_spikes(&mut r, shape(1, 4, 2, 5, 5), 0.5);
        let perm = [2usize, 0, 3, 1];
        let permute = |s: &Spikes| {
            let mut out = s.clone();
            for (t, &src) in perm.iter().enumerate() {
                out.frame_mut(0, t).copy_from_slice(s.frame(0, src));
            }
            out
        };
        let permute_p = |s: &Potentials| {
            let mut out = s.clone();
            for (t, &src) in perm.iter().enumerate() {
                out.frame_mut(0, t).copy_from_slice(s.frame(0, src));
            }
            out
        };
        let conv = ConvLayer::new(2, 3, (3, 3), (1, 1), (1, 1), 0.5, 0.1, seed).unwrap();
        prop_assert_eq!(conv.forward(&permute(&x)).unwrap(), permute_p(&conv.forward(&x).unwrap()));
        let fc = FcLayer::new(50, 4, 0.5, 0.1, seed).unwrap();
        prop_assert_eq!(fc_forward(&fc, &permute(&x)).unwrap(), permute_p(&fc_forward(&fc, &x).unwrap()));
        prop_assert_eq!(pad(&permute(&x), (1, 2), 0), permute(&pad(&x, (1, 2), 0)));
    }

    #[test]
    fn nonnegative_weights_keep_trains_cumulative(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_cumulative(&mut r, shape(2, 5, 2, 6, 6), 0.4);
        let mut conv = ConvLayer::new(2, 3, (3, 3), (1, 1), (1, 1), 0.5, 0.3, seed).unwrap();
        conv.weights.iter_mut().for_each(|w| *w = w.abs());
        let p = conv.forward(&x).unwrap();
        for b in 0..2 {
            for t in 1..5 {
                prop_assert!(p.frame(b, t).iter().zip(p.frame(b, t - 1)).all(|(a, q)| a >= q));
            }
        }
        prop_assert!(to_sparse(&fire(&p, Some(2.0))).is_ok());
    }
}

// ---------------------------------------------------------------- learning

proptest! {
    #![proptest_config(cases(200))]

    #[test]
    fn stdp_bounds_fixed_points_and_sign(
        w in 0.0..1.0f32, lower in -1.0..0.5f32, span in 0.1..2.0f32, a in -0.5..0.5f32, causal in any::<bool>()
    ) {
        let cfg = StdpConfig { positive: a, negative: a, stabilize: true, lower, upper: lower + span };
        let w = lower + w * span;
        let next = cfg.apply(w, causal);
        prop_assert!(next >= cfg.lower && next <= cfg.upper);
        prop_assert_eq!(cfg.apply(cfg.lower, causal), cfg.lower);
        prop_assert_eq!(cfg.apply(cfg.upper, causal), cfg.upper);
        if w > lower && w < cfg.upper && next != w {
            prop_assert_eq!((next - w).signum(), a.signum());
        }
        let raw = StdpConfig { stabilize: false, ..cfg };
        let next = raw.apply(w, causal);
        prop_assert!(next >= raw.lower && next <= raw.upper);
    }

    #[test]
    fn wta_and_inhibit_match_oracles(
        b in 1..3usize, t in 1..5usize, c in 1..5usize, h in 1..7usize, w in 1..7usize,
        radius in 0..4usize, count in 1..6usize, thr in prop::option::of(0.0..6.0f32), seed in any::<u64>()
    ) {
        let mut r = rng(seed);
        let p = random_cumulative_potentials(&mut r, shape(b, t, c, h, w));
        prop_assert_eq!(conv_wta(&p, radius, count, thr), conv_wta_oracle(&p, radius, count, thr));
        prop_assert_eq!(fc_wta(&p, radius, count, thr), fc_wta_oracle(&p, radius, count, thr));
        prop_assert_eq!(inhibited(&p, thr), inhibit_oracle(&p, thr));
    }

    #[test]
    fn batch_update_equals_sequential_singles(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_cumulative(&mut r, shape(4, 5, 2, 6, 6), 0.4);
        let mut layer = ConvLayer::new(2, 4, (3, 3), (1, 1), (1, 1), 0.5, 0.05, seed).unwrap();
        layer.stdp_configs = vec![StdpConfig::new(0.05, -0.04)];
        let p = layer.forward(&x).unwrap();
        let winners = conv_wta(&p, 1, 3, Some(4.0));
        let out = fire(&p, Some(4.0));
        let mut batch = layer.clone();
        batch.stdp(&x, &winners, &out).unwrap();
        let mut single = layer.clone();
        for b in 0..4 {
            let mine: Vec<Winner> = winners.iter().filter(|w| w.b == b).map(|w| Winner { b: 0, ..*w }).collect();
            single.stdp(&x.slice_batch(b, b + 1).unwrap(), &mine, &out.slice_batch(b, b + 1).unwrap()).unwrap();
        }
        prop_assert_eq!(batch.weights, single.weights);
    }

    #[test]
    fn repeated_updates_stay_in_bounds(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut layer = FcLayer::new(12, 5, 0.5, 0.3, seed).unwrap();
        layer.weights.iter_mut().for_each(|w| *w = w.clamp(0.0, 1.0));
        layer.stdp_configs = vec![
            StdpConfig { positive: 0.3, negative: -0.4, stabilize: r.random_bool(0.5), lower: 0.0, upper: 1.0 },
        ];
        for _ in 0..5 {
            let x = random_cumulative(&mut r, shape(2, 3, 12, 1, 1), 0.3);
            let p = fc_forward(&layer, &x).unwrap();
            let winners = fc_wta(&p, 1, 2, Some(1.0));
            layer.stdp(&x, &winners, &fire(&p, Some(1.0))).unwrap();
            prop_assert!(layer.weights.iter().all(|w| (0.0..=1.0).contains(w)));
        }
    }
}

#[test]
fn stdp_separates_two_orthogonal_patterns() {
    let patterns: Vec<Vec<u8>> = (0..2)
        .map(|k| (0..64).map(|i| u8::from(if k == 0 { (i / 8) % 2 == 0 } else { (i / 8) % 2 == 1 })).collect())
        .collect();
    let input = |k: usize| {
        let mut s = Spikes::zeros(shape(1, 2, 1, 8, 8));
        for t in 0..2 {
            s.frame_mut(0, t).copy_from_slice(&patterns[k]);
        }
        s
    };
    let response = |layer: &ConvLayer, k: usize| -> Vec<f32> {
        let p = layer.forward(&input(k)).unwrap();
        p.frame(0, 1).to_vec()
    };
    for seed in 0..5 {
        let mut layer = ConvLayer::new(1, 4, (8, 8), (1, 1), (0, 0), 0.5, 0.02, seed).unwrap();
        layer.stdp_configs = vec![StdpConfig::new(0.02, -0.015)];
        let mut margins: Vec<[Vec<f32>; 2]> = Vec::new();
        for _ in 0..30 {
            let (a, b) = (response(&layer, 0), response(&layer, 1));
            margins.push([a.iter().zip(&b).map(|(x, y)| x - y).collect(), b.iter().zip(&a).map(|(x, y)| x - y).collect()]);
            for k in 0..2 {
                let x = input(k);
                let mut p = layer.forward(&x).unwrap();
                snn_core::tensor::threshold_inplace(&mut p, 1.0);
                snn_core::learning::inhibit(&mut p, None);
                let winners = conv_wta(&p, 0, 1, None);
                layer.stdp(&x, &winners, &fire(&p, None)).unwrap();
            }
        }
        for k in 0..2 {
            let grows = (0..4).any(|f| {
                let m: Vec<f32> = margins.iter().map(|m| m[k][f]).collect();
                m.windows(2).all(|w| w[1] >= w[0]) && m.last() > m.first()
            });
            assert!(grows, "seed {seed}: no feature separates pattern {k}");
        }
    }
}

#[test]
fn config_round_trips() {
    for cfg in [NetworkConfig::kheradpisheh(), NetworkConfig::demo(), NetworkConfig::rate_demo()] {
        assert_eq!(NetworkConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        let shipped = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../configs/{}.json", cfg.name));
        assert_eq!(NetworkConfig::load(&shipped).unwrap(), cfg, "{}", shipped.display());
    }
}
