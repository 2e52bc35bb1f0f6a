//! Feature-enhancement front end: DoG, Gabor and LoG filter banks applied
//! depthwise, and ZCA whitening.
//!
//! Kernels are square with edge `2 * radius + 1` and are sampled at integer
//! offsets. Gaussians are normalized to unit sum before subtraction, so every
//! DoG (and therefore LoG) kernel sums to zero. Gabor kernels are left
//! unnormalized. Application is cross-correlation with zero padding.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::filter_output_len;
use crate::tensor::{Potentials, Shape5};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DogSpec {
    pub sigma1: f32,
    pub sigma2: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaborSpec {
    pub sigma: f32,
    pub theta: f32,
    pub gamma: f32,
    pub lambda: f32,
    pub psi: f32,
}

fn check_radius(radius: usize) -> Result<()> {
    if radius == 0 {
        return Err(Error::InvalidArgument("filter radius must be >= 1".into()));
    }
    Ok(())
}

fn check_positive(name: &str, v: f32) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

fn offsets(radius: usize) -> impl Iterator<Item = (f64, f64)> {
    let r = radius as i64;
    (-r..=r).flat_map(move |y| (-r..=r).map(move |x| (y as f64, x as f64)))
}

fn gaussian(sigma: f32, radius: usize) -> Vec<f64> {
    let s2 = 2.0 * f64::from(sigma) * f64::from(sigma);
    let raw: Vec<f64> = offsets(radius).map(|(y, x)| (-(x * x + y * y) / s2).exp()).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// `N(sigma1) - N(sigma2)` on a `(2r+1)^2` grid, each Gaussian of unit sum.
pub fn make_dog(spec: DogSpec, radius: usize) -> Result<Vec<f32>> {
    check_radius(radius)?;
    check_positive("sigma1", spec.sigma1)?;
    check_positive("sigma2", spec.sigma2)?;
    let a = gaussian(spec.sigma1, radius);
    let b = gaussian(spec.sigma2, radius);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y) as f32).collect())
}

/// Gabor kernel `exp(-(x'^2 + gamma^2 y'^2) / (2 sigma^2)) * cos(2 pi x' / lambda + psi)`
/// with `(x', y')` the grid rotated by `theta`.
pub fn make_gabor(spec: GaborSpec, radius: usize) -> Result<Vec<f32>> {
    check_radius(radius)?;
    check_positive("sigma", spec.sigma)?;
    check_positive("lambda", spec.lambda)?;
    check_positive("gamma", spec.gamma)?;
    let (sin, cos) = f64::from(spec.theta).sin_cos();
    let sigma = f64::from(spec.sigma);
    let gamma = f64::from(spec.gamma);
    let lambda = f64::from(spec.lambda);
    let psi = f64::from(spec.psi);
    Ok(offsets(radius)
        .map(|(y, x)| {
            let xr = x * cos + y * sin;
            let yr = -x * sin + y * cos;
            let envelope = (-(xr * xr + gamma * gamma * yr * yr) / (2.0 * sigma * sigma)).exp();
            (envelope * (2.0 * std::f64::consts::PI * xr / lambda + psi).cos()) as f32
        })
        .collect())
}

/// Laplacian-of-Gaussian approximation: two opposite DoG kernels per sigma,
/// `DoG(s*sqrt2, s/sqrt2)` followed by `DoG(s/sqrt2, s*sqrt2)`.
pub fn make_log(stds: &[f32], radius: usize) -> Result<Vec<Vec<f32>>> {
    if stds.is_empty() {
        return Err(Error::InvalidArgument("LoG needs at least one standard deviation".into()));
    }
    let mut kernels = Vec::with_capacity(2 * stds.len());
    for &s in stds {
        check_positive("LoG std", s)?;
        let wide = s * std::f32::consts::SQRT_2;
        let narrow = s / std::f32::consts::SQRT_2;
        kernels.push(make_dog(DogSpec { sigma1: wide, sigma2: narrow }, radius)?);
        kernels.push(make_dog(DogSpec { sigma1: narrow, sigma2: wide }, radius)?);
    }
    Ok(kernels)
}

/// A bank of `K_c` square kernels applied to every input channel separately.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    radius: usize,
    pad: (usize, usize),
    kernels: Vec<Vec<f32>>,
}

impl FilterBank {
    pub fn from_kernels(radius: usize, kernels: Vec<Vec<f32>>, pad: (usize, usize)) -> Result<Self> {
        check_radius(radius)?;
        let k = 2 * radius + 1;
        if kernels.is_empty() || kernels.iter().any(|kern| kern.len() != k * k) {
            return Err(Error::InvalidArgument(format!(
                "filter bank needs at least one {k}x{k} kernel"
            )));
        }
        Ok(FilterBank { radius, pad, kernels })
    }

    pub fn dog(radius: usize, specs: &[DogSpec], pad: usize) -> Result<Self> {
        let kernels = specs.iter().map(|&s| make_dog(s, radius)).collect::<Result<_>>()?;
        FilterBank::from_kernels(radius, kernels, (pad, pad))
    }

    pub fn gabor(radius: usize, specs: &[GaborSpec], pad: usize) -> Result<Self> {
        let kernels = specs.iter().map(|&s| make_gabor(s, radius)).collect::<Result<_>>()?;
        FilterBank::from_kernels(radius, kernels, (pad, pad))
    }

    pub fn log(radius: usize, stds: &[f32], pad: usize) -> Result<Self> {
        FilterBank::from_kernels(radius, make_log(stds, radius)?, (pad, pad))
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Kernel edge length `K_h = K_w`.
    pub fn size(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn pad(&self) -> (usize, usize) {
        self.pad
    }

    pub fn kernels(&self) -> &[Vec<f32>] {
        &self.kernels
    }

    /// Number of kernels `K_c`.
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn output_shape(&self, input: Shape5) -> Result<Shape5> {
        let k = self.size();
        Ok(Shape5 {
            c: input.c * self.len(),
            h: filter_output_len(input.h, k, self.pad.0)?,
            w: filter_output_len(input.w, k, self.pad.1)?,
            ..input
        })
    }

    /// Filters every `(b, t)` frame. Output channel `ci * K_c + k` holds kernel
    /// `k` applied to input channel `ci`.
    pub fn apply(&self, x: &Potentials) -> Result<Potentials> {
        apply_filter(self, x)
    }
}

pub fn apply_filter(bank: &FilterBank, x: &Potentials) -> Result<Potentials> {
    let s = x.shape();
    let o = bank.output_shape(s)?;
    let k = bank.size();
    let (ph, pw) = bank.pad;
    let mut out = Potentials::zeros(o);
    for b in 0..s.b {
        for t in 0..s.t {
            let src = x.frame(b, t);
            let dst = out.frame_mut(b, t);
            for ci in 0..s.c {
                let plane = &src[ci * s.plane()..(ci + 1) * s.plane()];
                for (kc, kern) in bank.kernels.iter().enumerate() {
                    let oplane = &mut dst[(ci * bank.len() + kc) * o.plane()..][..o.plane()];
                    for oy in 0..o.h {
                        for ox in 0..o.w {
                            let mut acc = 0.0f32;
                            for dy in 0..k {
                                let iy = (oy + dy) as isize - ph as isize;
                                if iy < 0 || iy >= s.h as isize {
                                    continue;
                                }
                                let line = &plane[iy as usize * s.w..][..s.w];
                                let krow = &kern[dy * k..][..k];
                                for dx in 0..k {
                                    let ix = (ox + dx) as isize - pw as isize;
                                    if ix >= 0 && (ix as usize) < s.w {
                                        acc += krow[dx] * line[ix as usize];
                                    }
                                }
                            }
                            oplane[oy * o.w + ox] = acc;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// ZCA whitening `W = E (L + eps I)^(-1/2) E^T` fitted on rows of a data
/// matrix (one row per batch sample, features flattened).
#[derive(Debug, Clone, PartialEq)]
pub struct Zca {
    epsilon: f64,
    mean: Vec<f64>,
    whitening: Option<DMatrix<f64>>,
}

impl Zca {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
        }
        Ok(Zca { epsilon, mean: Vec::new(), whitening: None })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_fitted(&self) -> bool {
        self.whitening.is_some()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Row-major `F x F` whitening matrix.
    pub fn whitening(&self) -> Result<Vec<f64>> {
        let w = self.whitening.as_ref().ok_or(Error::NotFitted)?;
        Ok(w.transpose().as_slice().to_vec())
    }

    pub fn fit(&mut self, data: &Potentials) -> Result<()> {
        let s = data.shape();
        let (n, f) = (s.b, s.sample());
        if n < 2 {
            return Err(Error::InvalidArgument("ZCA fit needs at least two samples".into()));
        }
        let x = DMatrix::from_fn(n, f, |r, c| f64::from(data.sample(r)[c]));
        let mean: Vec<f64> = (0..f).map(|c| x.column(c).sum() / n as f64).collect();
        let mut centered = x;
        for (c, m) in mean.iter().enumerate() {
            centered.column_mut(c).add_scalar_mut(-m);
        }
        let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);

        let largest = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
        let smallest = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let tolerance = largest.max(f64::MIN_POSITIVE) * f as f64 * f64::EPSILON * 16.0;
        if self.epsilon == 0.0 && smallest <= tolerance {
            return Err(Error::RankDeficient { smallest, tolerance });
        }
        let scale = eig.eigenvalues.map(|l| 1.0 / (l.max(0.0) + self.epsilon).sqrt());
        let e = &eig.eigenvectors;
        let mut w = e * DMatrix::from_diagonal(&scale) * e.transpose();
        // Symmetrize away rounding.
        w = (&w + w.transpose()) * 0.5;
        self.mean = mean;
        self.whitening = Some(w);
        Ok(())
    }

    /// Returns `(x - mean) W` for every sample, preserving the input shape.
    pub fn apply(&self, data: &Potentials) -> Result<Potentials> {
        let w = self.whitening.as_ref().ok_or(Error::NotFitted)?;
        let s = data.shape();
        let f = s.sample();
        if f != self.mean.len() {
            return Err(Error::Shape(format!(
                "ZCA fitted on {} features, got {f}",
                self.mean.len()
            )));
        }
        let x = DMatrix::from_fn(s.b, f, |r, c| f64::from(data.sample(r)[c]) - self.mean[c]);
        let y = x * w;
        let mut out = Potentials::zeros(s);
        for r in 0..s.b {
            for (c, v) in out.sample_mut(r).iter_mut().enumerate() {
                *v = y[(r, c)] as f32;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dog_sums_to_zero_and_is_antisymmetric() {
        let k = make_dog(DogSpec { sigma1: 1.0, sigma2: 2.0 }, 3).unwrap();
        assert_eq!(k.len(), 49);
        assert!(k.iter().map(|&v| f64::from(v)).sum::<f64>().abs() < 1e-6);
        assert!(k[24] > 0.0, "on-center DoG must be positive at the center");
        let swapped = make_dog(DogSpec { sigma1: 2.0, sigma2: 1.0 }, 3).unwrap();
        assert!(k.iter().zip(&swapped).all(|(a, b)| *a == -*b));
        assert!(make_dog(DogSpec { sigma1: 0.0, sigma2: 1.0 }, 3).is_err());
        assert!(make_dog(DogSpec { sigma1: 1.0, sigma2: 2.0 }, 0).is_err());
    }

    #[test]
    fn gabor_symmetries() {
        let r = 3;
        let n = 2 * r + 1;
        let base = GaborSpec { sigma: 2.0, theta: 0.0, gamma: 0.5, lambda: 4.0, psi: 0.0 };
        let k = make_gabor(base, r).unwrap();
        for y in 0..n {
            for x in 0..n {
                assert_eq!(k[y * n + x], k[(n - 1 - y) * n + x]);
            }
        }
        let theta = 0.7;
        let a = make_gabor(GaborSpec { theta, ..base }, r).unwrap();
        let b = make_gabor(GaborSpec { theta: theta + std::f32::consts::PI, ..base }, r).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-5));

        let psi = 0.9f32;
        let c = make_gabor(GaborSpec { psi, ..base }, r).unwrap();
        assert!((c[r * n + r] - psi.cos()).abs() < 1e-6);
        assert!(make_gabor(GaborSpec { lambda: 0.0, ..base }, r).is_err());
        assert!(make_gabor(GaborSpec { gamma: -1.0, ..base }, r).is_err());
    }

    #[test]
    fn log_pairs_are_negations() {
        let ks = make_log(&[0.471, 1.099, 2.042], 3).unwrap();
        assert_eq!(ks.len(), 6);
        for pair in ks.chunks(2) {
            assert!(pair[0].iter().zip(&pair[1]).all(|(a, b)| *a == -*b));
            assert!(pair[0].iter().map(|&v| f64::from(v)).sum::<f64>().abs() < 1e-6);
        }
        assert!(make_log(&[], 3).is_err());
        assert!(make_log(&[1.0, -1.0], 3).is_err());
    }

    #[test]
    fn log_bank_output_shape() {
        let bank = FilterBank::log(3, &[0.471, 1.099, 2.042], 3).unwrap();
        let x = Potentials::zeros(Shape5::new(2, 1, 1, 28, 28).unwrap());
        let y = bank.apply(&x).unwrap();
        assert_eq!(y.shape(), Shape5::new(2, 1, 6, 28, 28).unwrap());
    }

    #[test]
    fn delta_kernel_crops() {
        let mut delta = vec![0.0; 9];
        delta[4] = 1.0;
        let bank = FilterBank::from_kernels(1, vec![delta], (0, 0)).unwrap();
        let s = Shape5::new(1, 1, 1, 4, 5).unwrap();
        let x = Potentials::from_vec(s, (0..20).map(|v| v as f32).collect()).unwrap();
        let y = bank.apply(&x).unwrap();
        assert_eq!(y.shape(), Shape5::new(1, 1, 1, 2, 3).unwrap());
        assert_eq!(y.data(), &[6.0, 7.0, 8.0, 11.0, 12.0, 13.0]);
    }

    #[test]
    fn geometry_violation() {
        let bank = FilterBank::log(3, &[1.0], 0).unwrap();
        let x = Potentials::zeros(Shape5::new(1, 1, 1, 5, 5).unwrap());
        assert!(matches!(bank.apply(&x), Err(Error::Geometry(_))));
    }

    fn toy() -> Potentials {
        let k = (3.0f32 / 4.0).sqrt();
        let rows = [1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0, 1.0];
        Potentials::from_vec(
            Shape5::new(4, 1, 1, 1, 2).unwrap(),
            rows.iter().map(|v| v * k + 0.25).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zca_identity_covariance_only_centers() {
        let data = toy();
        let mut zca = Zca::new(0.0).unwrap();
        zca.fit(&data).unwrap();
        let y = zca.apply(&data).unwrap();
        for (a, b) in y.data().iter().zip(data.data()) {
            assert!((a - (b - 0.25)).abs() < 1e-5);
        }
        let w = zca.whitening().unwrap();
        assert!((w[1] - w[2]).abs() < 1e-6);
    }

    #[test]
    fn zca_errors() {
        let zca = Zca::new(0.1).unwrap();
        assert!(matches!(zca.apply(&toy()), Err(Error::NotFitted)));
        assert!(Zca::new(-1.0).is_err());

        // second feature is a copy of the first: singular covariance
        let s = Shape5::new(3, 1, 1, 1, 2).unwrap();
        let data = Potentials::from_vec(s, vec![1.0, 1.0, 2.0, 2.0, 4.0, 4.0]).unwrap();
        let mut zca = Zca::new(0.0).unwrap();
        assert!(matches!(zca.fit(&data), Err(Error::RankDeficient { .. })));
        let mut zca = Zca::new(1e-3).unwrap();
        assert!(zca.fit(&data).is_ok());
    }
}
