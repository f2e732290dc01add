//! Combined per-channel binary cross-entropy + soft multi-class Dice loss,
//! evaluated in f64 with an analytic gradient w.r.t. the logits.

use ndarray::{Array3, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::data::AvMask;
use crate::error::{CaveError, Result};

/// Default Dice smoothing.
pub const DICE_EPSILON: f64 = 1.0;
/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before `ln`.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub mdice_loss: f64,
    pub total: f64,
}

fn check(shape: &[usize], gt: &AvMask) -> Result<()> {
    let (h, w) = gt.dim();
    if shape != [2, h, w] {
        return Err(CaveError::Shape(format!("prediction {shape:?} vs reference [2, {h}, {w}]")));
    }
    Ok(())
}

fn target(gt: &AvMask, ch: usize) -> &ndarray::Array2<bool> {
    if ch == 0 {
        &gt.artery
    } else {
        &gt.vein
    }
}

/// Soft multi-class Dice `(2 Σ p g + ε) / (Σ p + Σ g + ε)` pooled over both
/// channels.
pub fn soft_mdice(pred: ArrayView3<f64>, gt: &AvMask, epsilon: f64) -> Result<f64> {
    check(pred.shape(), gt)?;
    let (mut inter, mut sum) = (0.0, 0.0);
    for ch in 0..2 {
        for (&p, &g) in pred.index_axis(Axis(0), ch).iter().zip(target(gt, ch)) {
            let g = g as u8 as f64;
            inter += p * g;
            sum += p + g;
        }
    }
    Ok((2.0 * inter + epsilon) / (sum + epsilon))
}

/// Loss on probabilities (clamped before the logarithm).
pub fn av_loss(pred: ArrayView3<f64>, gt: &AvMask, epsilon: f64) -> Result<LossBreakdown> {
    check(pred.shape(), gt)?;
    let mut ce = 0.0;
    for ch in 0..2 {
        for (&p, &g) in pred.index_axis(Axis(0), ch).iter().zip(target(gt, ch)) {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            ce -= if g { p.ln() } else { (1.0 - p).ln() };
        }
    }
    ce /= pred.len() as f64;
    let mdice_loss = 1.0 - soft_mdice(pred, gt, epsilon)?;
    Ok(LossBreakdown {
        ce,
        mdice_loss,
        total: ce + mdice_loss,
    })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Loss and `∂total/∂logits` for `[2, H, W]` logits.
pub fn av_loss_with_grad(logits: ArrayView3<f64>, gt: &AvMask, epsilon: f64) -> Result<(LossBreakdown, Array3<f64>)> {
    check(logits.shape(), gt)?;
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(CaveError::NonFinite("logits".into()));
    }
    let n = logits.len() as f64;
    let probs = logits.mapv(sigmoid);
    let mut ce = 0.0;
    let (mut inter, mut sum) = (0.0, 0.0);
    for ch in 0..2 {
        let t = target(gt, ch);
        for ((&z, &p), &g) in logits.index_axis(Axis(0), ch).iter().zip(probs.index_axis(Axis(0), ch)).zip(t) {
            let g = g as u8 as f64;
            // stable BCE-with-logits
            ce += z.max(0.0) - z * g + (-z.abs()).exp().ln_1p();
            inter += p * g;
            sum += p + g;
        }
    }
    ce /= n;
    let den = sum + epsilon;
    let dice = (2.0 * inter + epsilon) / den;
    let mut grad = Array3::zeros(logits.raw_dim());
    for ch in 0..2 {
        let t = target(gt, ch);
        let mut gch = grad.index_axis_mut(Axis(0), ch);
        for ((d, &p), &g) in gch.iter_mut().zip(probs.index_axis(Axis(0), ch)).zip(t) {
            let g = g as u8 as f64;
            let d_dice_dp = (2.0 * g * den - (2.0 * inter + epsilon)) / (den * den);
            *d = (p - g) / n - d_dice_dp * p * (1.0 - p);
        }
    }
    let mdice_loss = 1.0 - dice;
    Ok((
        LossBreakdown {
            ce,
            mdice_loss,
            total: ce + mdice_loss,
        },
        grad,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask(a: &[u8], v: &[u8]) -> AvMask {
        let m = |x: &[u8]| Array2::from_shape_fn((1, x.len()), |(_, j)| x[j] == 1);
        AvMask::new(m(a), m(v)).unwrap()
    }

    fn probs(a: &[f64], v: &[f64]) -> Array3<f64> {
        Array3::from_shape_fn((2, 1, a.len()), |(c, _, j)| if c == 0 { a[j] } else { v[j] })
    }

    #[test]
    fn hand_counted_mdice() {
        let gt = mask(&[1, 0, 1, 0], &[0, 0, 0, 0]);
        let p = probs(&[1.0, 1.0, 0.0, 0.0], &[0.0; 4]);
        assert!((soft_mdice(p.view(), &gt, 0.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let gt = mask(&[1, 0, 1, 0], &[0, 1, 1, 0]);
        let p = probs(&[1.0, 0.0, 1.0, 0.0], &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(soft_mdice(p.view(), &gt, 1.0).unwrap(), 1.0);
        let l = av_loss(p.view(), &gt, 1.0).unwrap();
        assert!(l.ce < 1e-6 && l.mdice_loss.abs() < 1e-12 && l.total < 1e-6);
        let empty = mask(&[0; 4], &[0; 4]);
        assert_eq!(soft_mdice(Array3::zeros((2, 1, 4)).view(), &empty, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn half_probability_costs_ln2() {
        let gt = mask(&[1, 0, 0, 1], &[0, 1, 1, 1]);
        let l = av_loss(Array3::from_elem((2, 1, 4), 0.5).view(), &gt, 1.0).unwrap();
        assert!((l.ce - std::f64::consts::LN_2).abs() < 1e-12);
        let (lz, _) = av_loss_with_grad(Array3::zeros((2, 1, 4)).view(), &gt, 1.0).unwrap();
        assert!((lz.ce - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn logit_and_probability_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = Array3::from_shape_fn((2, 4, 4), |_| rng.random_range(-4.0..4.0));
        let gt = AvMask::new(
            Array2::from_shape_fn((4, 4), |_| rng.random_bool(0.3)),
            Array2::from_shape_fn((4, 4), |_| rng.random_bool(0.3)),
        )
        .unwrap();
        let (a, _) = av_loss_with_grad(z.view(), &gt, 1.0).unwrap();
        let b = av_loss(z.mapv(sigmoid).view(), &gt, 1.0).unwrap();
        assert!((a.total - b.total).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = Array3::from_shape_fn((2, 3, 3), |_| rng.random_range(-3.0..3.0));
        let gt = AvMask::new(
            Array2::from_shape_fn((3, 3), |_| rng.random_bool(0.4)),
            Array2::from_shape_fn((3, 3), |_| rng.random_bool(0.4)),
        )
        .unwrap();
        let (_, grad) = av_loss_with_grad(z.view(), &gt, 1.0).unwrap();
        let h = 1e-6;
        for idx in ndarray::indices_of(&z) {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[idx] += h;
            zm[idx] -= h;
            let fp = av_loss_with_grad(zp.view(), &gt, 1.0).unwrap().0.total;
            let fm = av_loss_with_grad(zm.view(), &gt, 1.0).unwrap().0.total;
            let num = (fp - fm) / (2.0 * h);
            assert!((num - grad[idx]).abs() <= 1e-4 * num.abs().max(grad[idx].abs()).max(1e-8));
        }
    }

    #[test]
    fn shape_mismatch_and_nonfinite() {
        let gt = mask(&[1, 0], &[0, 1]);
        assert!(soft_mdice(Array3::zeros((2, 1, 3)).view(), &gt, 1.0).is_err());
        let mut z = Array3::zeros((2, 1, 2));
        z[[0, 0, 0]] = f64::NAN;
        assert!(matches!(av_loss_with_grad(z.view(), &gt, 1.0), Err(CaveError::NonFinite(_))));
    }
}
