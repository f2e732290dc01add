//! Multiscale 2D Frangi vesselness.
//!
//! At each scale the image Hessian is computed with sampled Gaussian
//! derivative kernels and scale-normalised by σ². With eigenvalues ordered
//! `|λ1| <= |λ2|`, the response is
//!
//! ```text
//! V = exp(-Rb² / 2β²) · (1 - exp(-S² / 2c²)),   Rb = λ1/λ2,   S = sqrt(λ1² + λ2²)
//! ```
//!
//! and is zero when λ2 has the wrong sign for the requested ridge polarity
//! (dark ridges need λ2 > 0). The result is the maximum over scales,
//! rescaled so that the strongest response is 1.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{CaveError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrangiParams {
    /// Gaussian σ values in pixels, ascending.
    pub scales: Vec<f64>,
    /// Plate sensitivity; only meaningful in 3D, carried for parity.
    pub alpha: f64,
    /// Blob sensitivity.
    pub beta: f64,
    /// Structureness sensitivity. `None` uses half of the maximum Hessian
    /// norm of the image at each scale.
    pub c: Option<f64>,
    /// Vesselness cut-off in (0, 1).
    pub threshold: f64,
    /// Vessels darker than the background (true for DSA).
    pub dark_ridges: bool,
}

impl Default for FrangiParams {
    fn default() -> Self {
        FrangiParams {
            scales: vec![0.75, 1.0, 1.5, 2.0],
            alpha: 0.5,
            beta: 0.5,
            c: None,
            threshold: 0.05,
            dark_ridges: true,
        }
    }
}

impl FrangiParams {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.scales.iter().any(|s| !(*s > 0.0)) {
            return Err(CaveError::Config("frangi scales must be non-empty and positive".into()));
        }
        if self.scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CaveError::Config("frangi scales must be ascending".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(CaveError::Config("frangi threshold must lie in (0, 1)".into()));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) || self.c.is_some_and(|c| !(c > 0.0)) {
            return Err(CaveError::Config("alpha, beta and c must be > 0".into()));
        }
        Ok(())
    }

    fn support(&self) -> usize {
        let sigma = self.scales.iter().copied().fold(0.0, f64::max);
        2 * kernel_radius(sigma) + 1
    }
}

fn kernel_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil().max(1.0) as usize
}

/// Sampled Gaussian, first and second derivative kernels. The derivative
/// kernels are exactly zero-sum and calibrated on x and x²/2.
fn derivative_kernels(sigma: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let r = kernel_radius(sigma) as isize;
    let xs: Vec<f64> = (-r..=r).map(|x| x as f64).collect();
    let s2 = sigma * sigma;
    let mut g: Vec<f64> = xs.iter().map(|x| (-x * x / (2.0 * s2)).exp()).collect();
    let gsum: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= gsum);

    let mut d1: Vec<f64> = xs.iter().zip(&g).map(|(x, g)| -x / s2 * g).collect();
    // convolution of a unit ramp must give 1
    let m1: f64 = xs.iter().zip(&d1).map(|(x, k)| -x * k).sum();
    d1.iter_mut().for_each(|v| *v /= m1);

    let mut d2: Vec<f64> = xs.iter().zip(&g).map(|(x, g)| (x * x / (s2 * s2) - 1.0 / s2) * g).collect();
    let mean = d2.iter().sum::<f64>() / d2.len() as f64;
    d2.iter_mut().for_each(|v| *v -= mean);
    let m2: f64 = xs.iter().zip(&d2).map(|(x, k)| x * x / 2.0 * k).sum();
    d2.iter_mut().for_each(|v| *v /= m2);
    (g, d1, d2)
}

/// Separable correlation with replicated borders: `ky` along rows, `kx`
/// along columns.
fn separable(img: &Array2<f64>, ky: &[f64], kx: &[f64]) -> Array2<f64> {
    let (h, w) = img.dim();
    let ry = (ky.len() / 2) as isize;
    let rx = (kx.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = Array2::<f64>::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            // kernels are indexed as f(x - u) k(u) so derivatives have the usual sign
            tmp[[i, j]] = kx
                .iter()
                .enumerate()
                .map(|(u, k)| k * img[[i, clamp(j as isize - (u as isize - rx), w)]])
                .sum();
        }
    }
    let mut out = Array2::<f64>::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            out[[i, j]] = ky
                .iter()
                .enumerate()
                .map(|(u, k)| k * tmp[[clamp(i as isize - (u as isize - ry), h), j]])
                .sum();
        }
    }
    out
}

/// Scale-normalised Hessian `(dxx, dxy, dyy)` at `sigma`; x runs along
/// columns.
pub fn hessian(img: &Array2<f64>, sigma: f64) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let (g, d1, d2) = derivative_kernels(sigma);
    let s2 = sigma * sigma;
    let dxx = separable(img, &g, &d2) * s2;
    let dyy = separable(img, &d2, &g) * s2;
    let dxy = separable(img, &d1, &d1) * s2;
    (dxx, dxy, dyy)
}

/// Eigenvalues of `[[a, b], [b, d]]` ordered by absolute value.
pub fn sorted_eigenvalues(a: f64, b: f64, d: f64) -> (f64, f64) {
    let tmp = ((a - d).powi(2) + 4.0 * b * b).sqrt();
    let mu1 = 0.5 * (a + d + tmp);
    let mu2 = 0.5 * (a + d - tmp);
    if mu1.abs() <= mu2.abs() {
        (mu1, mu2)
    } else {
        (mu2, mu1)
    }
}

/// Largest Hessian norm below which a scale is treated as flat.
const FLAT_NORM: f64 = 1e-6;

pub fn frangi_vesselness(image: &Array2<f32>, params: &FrangiParams) -> Result<Array2<f32>> {
    params.validate()?;
    let (h, w) = image.dim();
    let support = params.support();
    if h < support || w < support {
        return Err(CaveError::Validation(format!(
            "image {h}x{w} is smaller than the {support}px support of the largest scale"
        )));
    }
    let img = image.mapv(|v| v as f64);
    let two_b2 = 2.0 * params.beta * params.beta;
    let mut best = Array2::<f64>::zeros((h, w));
    for &sigma in &params.scales {
        let (dxx, dxy, dyy) = hessian(&img, sigma);
        let mut eig = Vec::with_capacity(h * w);
        let mut s_max = 0.0f64;
        for ((&a, &b), &d) in dxx.iter().zip(dxy.iter()).zip(dyy.iter()) {
            let (l1, l2) = sorted_eigenvalues(a, b, d);
            let s = (l1 * l1 + l2 * l2).sqrt();
            s_max = s_max.max(s);
            eig.push((l1, l2, s));
        }
        if s_max < FLAT_NORM {
            continue;
        }
        let c = params.c.unwrap_or(0.5 * s_max);
        let two_c2 = 2.0 * c * c;
        for (out, &(l1, l2, s)) in best.iter_mut().zip(&eig) {
            let polarity_ok = if params.dark_ridges { l2 > 0.0 } else { l2 < 0.0 };
            if !polarity_ok || s < FLAT_NORM {
                continue;
            }
            let rb = l1 / l2;
            let v = (-(rb * rb) / two_b2).exp() * (1.0 - (-(s * s) / two_c2).exp());
            if v > *out {
                *out = v;
            }
        }
    }
    let max = best.iter().copied().fold(0.0, f64::max);
    Ok(if max > 0.0 {
        best.mapv(|v| (v / max) as f32)
    } else {
        best.mapv(|v| v as f32)
    })
}

/// Binary vessel mask `vesselness >= threshold`.
pub fn threshold_vessels(vesselness: &Array2<f32>, threshold: f64) -> Array2<bool> {
    vesselness.mapv(|v| v as f64 >= threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dark_line(size: usize, col: usize, half_width: usize) -> Array2<f32> {
        Array2::from_shape_fn((size, size), |(_, j)| {
            if (j as isize - col as isize).unsigned_abs() <= half_width {
                55.0
            } else {
                255.0
            }
        })
    }

    #[test]
    fn derivative_kernels_are_calibrated() {
        let (g, d1, d2) = derivative_kernels(2.0);
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(d1.iter().sum::<f64>().abs() < 1e-12);
        assert!(d2.iter().sum::<f64>().abs() < 1e-12);
        let img = Array2::from_shape_fn((40, 40), |(i, j)| 0.5 * (j as f64).powi(2) + 3.0 * i as f64);
        let (dxx, dxy, dyy) = hessian(&img, 2.0);
        assert!((dxx[[20, 20]] / 4.0 - 1.0).abs() < 1e-9);
        assert!(dxy[[20, 20]].abs() < 1e-9 && dyy[[20, 20]].abs() < 1e-9);
    }

    #[test]
    fn constant_image_has_zero_response() {
        let img = Array2::from_elem((64, 64), 128.0f32);
        let v = frangi_vesselness(&img, &FrangiParams::default()).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn line_centre_dominates_background() {
        let params = FrangiParams { scales: vec![1.0, 2.0], ..Default::default() };
        let img = dark_line(64, 32, 2);
        let v = frangi_vesselness(&img, &params).unwrap();
        let centre = v[[32, 32]];
        assert!(centre > 0.5);
        assert!(centre > 10.0 * v[[32, 32 + 10]].max(1e-12));
    }

    #[test]
    fn response_ignores_constant_offset() {
        let img = dark_line(64, 20, 1);
        let shifted = img.mapv(|v| v + 40.0);
        let p = FrangiParams::default();
        let a = frangi_vesselness(&img, &p).unwrap();
        let b = frangi_vesselness(&shifted, &p).unwrap();
        let diff = a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max);
        assert!(diff < 1e-5, "{diff}");
    }

    #[test]
    fn bright_ridges_need_flipped_polarity() {
        let img = dark_line(64, 32, 2);
        let p = FrangiParams { dark_ridges: false, scales: vec![1.0, 2.0], ..Default::default() };
        let v = frangi_vesselness(&img, &p).unwrap();
        assert!(v[[32, 32]] < 1e-6);
    }

    #[test]
    fn small_image_is_rejected() {
        let p = FrangiParams::default();
        let n = p.support();
        let img = Array2::from_elem((n - 1, n + 5), 1.0f32);
        assert!(matches!(frangi_vesselness(&img, &p), Err(CaveError::Validation(_))));
        assert!(frangi_vesselness(&Array2::from_elem((n, n), 1.0f32), &p).is_ok());
    }

    #[test]
    fn threshold_extremes() {
        let v = Array2::from_shape_fn((8, 8), |(i, j)| ((i * 8 + j) as f32) / 63.0);
        assert!(threshold_vessels(&v, 0.0).iter().all(|&b| b));
        assert!(threshold_vessels(&v, 1.0 + 1e-6).iter().all(|&b| !b));
    }
}
