//! Training-time geometric augmentation. One spatial transform is drawn per
//! call and applied identically to every frame and both mask channels.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AvMask, DsaSeries};

pub const AUGMENT_PROBABILITY: f64 = 0.5;
pub const MAX_TRANSLATION: f64 = 0.05;
pub const MAX_SCALING: f64 = 0.05;
pub const MAX_ROTATION_DEG: f64 = 10.0;

/// Drawn transform. `None` means the transform did not fire.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub hflip: bool,
    /// Shift as a fraction of (width, height).
    pub translate: Option<(f64, f64)>,
    /// Relative scale change; the zoom factor is `1 + scale`.
    pub scale: Option<f64>,
    pub rotate_deg: Option<f64>,
}

impl AugmentParams {
    pub fn sample(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hflip = rng.random_bool(AUGMENT_PROBABILITY);
        let translate = rng.random_bool(AUGMENT_PROBABILITY).then(|| {
            (
                rng.random_range(-MAX_TRANSLATION..=MAX_TRANSLATION),
                rng.random_range(-MAX_TRANSLATION..=MAX_TRANSLATION),
            )
        });
        let scale = rng
            .random_bool(AUGMENT_PROBABILITY)
            .then(|| rng.random_range(-MAX_SCALING..=MAX_SCALING));
        let rotate_deg = rng
            .random_bool(AUGMENT_PROBABILITY)
            .then(|| rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG));
        AugmentParams {
            hflip,
            translate,
            scale,
            rotate_deg,
        }
    }

    pub fn is_identity(&self) -> bool {
        !self.hflip && !self.has_warp()
    }

    fn has_warp(&self) -> bool {
        self.translate.is_some() || self.scale.is_some() || self.rotate_deg.is_some()
    }

    /// Output-to-input coordinate map `(row, col) -> (row, col)` of the
    /// affine part, about the image centre.
    fn inverse_map(&self, h: usize, w: usize) -> impl Fn(f64, f64) -> (f64, f64) {
        let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
        let (tx, ty) = self
            .translate
            .map(|(fx, fy)| (fx * w as f64, fy * h as f64))
            .unwrap_or((0.0, 0.0));
        let zoom = 1.0 + self.scale.unwrap_or(0.0);
        let theta = self.rotate_deg.unwrap_or(0.0).to_radians();
        let (sin, cos) = theta.sin_cos();
        move |r, c| {
            let (x, y) = (c - cx - tx, r - cy - ty);
            // inverse rotation then inverse zoom
            let xr = (cos * x + sin * y) / zoom;
            let yr = (-sin * x + cos * y) / zoom;
            (yr + cy, xr + cx)
        }
    }
}

fn hflip<T: Clone>(img: ArrayView2<T>) -> Array2<T> {
    img.slice(ndarray::s![.., ..;-1]).to_owned()
}

fn warp_bilinear(img: ArrayView2<f32>, map: &impl Fn(f64, f64) -> (f64, f64)) -> Array2<f32> {
    let (h, w) = img.dim();
    Array2::from_shape_fn((h, w), |(i, j)| {
        let (r, c) = map(i as f64, j as f64);
        // replicate border
        let r = r.clamp(0.0, (h - 1) as f64);
        let c = c.clamp(0.0, (w - 1) as f64);
        let (r0, c0) = (r.floor() as usize, c.floor() as usize);
        let (r1, c1) = ((r0 + 1).min(h - 1), (c0 + 1).min(w - 1));
        let (fr, fc) = ((r - r0 as f64) as f32, (c - c0 as f64) as f32);
        let top = img[[r0, c0]] + fc * (img[[r0, c1]] - img[[r0, c0]]);
        let bottom = img[[r1, c0]] + fc * (img[[r1, c1]] - img[[r1, c0]]);
        top + fr * (bottom - top)
    })
}

fn warp_nearest(img: ArrayView2<bool>, map: &impl Fn(f64, f64) -> (f64, f64)) -> Array2<bool> {
    let (h, w) = img.dim();
    Array2::from_shape_fn((h, w), |(i, j)| {
        let (r, c) = map(i as f64, j as f64);
        let (r, c) = (r.round(), c.round());
        if r < 0.0 || c < 0.0 || r > (h - 1) as f64 || c > (w - 1) as f64 {
            false
        } else {
            img[[r as usize, c as usize]]
        }
    })
}

/// Apply a drawn transform: exact horizontal flip first, then the affine
/// warp (bilinear for frames, nearest for masks).
pub fn apply_augment(series: &DsaSeries, mask: &AvMask, params: &AugmentParams) -> (DsaSeries, AvMask) {
    let mut out = series.clone();
    let mut out_mask = mask.clone();
    if params.is_identity() {
        return (out, out_mask);
    }
    if params.hflip {
        for mut frame in out.frames.outer_iter_mut() {
            let flipped = hflip(frame.view());
            frame.assign(&flipped);
        }
        out_mask.artery = hflip(out_mask.artery.view());
        out_mask.vein = hflip(out_mask.vein.view());
    }
    if params.has_warp() {
        let map = params.inverse_map(series.height(), series.width());
        for t in 0..out.n_frames() {
            let warped = warp_bilinear(out.frames.index_axis(Axis(0), t), &map);
            out.frames.index_axis_mut(Axis(0), t).assign(&warped);
        }
        out_mask.artery = warp_nearest(out_mask.artery.view(), &map);
        out_mask.vein = warp_nearest(out_mask.vein.view(), &map);
    }
    (out, out_mask)
}

/// Draw a transform from `seed` and apply it to series and mask.
pub fn augment(series: &DsaSeries, mask: &AvMask, seed: u64) -> (DsaSeries, AvMask) {
    apply_augment(series, mask, &AugmentParams::sample(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn fixture() -> (DsaSeries, AvMask) {
        let frames = Array3::from_shape_fn((3, 16, 12), |(t, i, j)| (t * 50 + i * 7 + j * 3) as f32);
        let series = DsaSeries::new(frames, 1.0).unwrap();
        let artery = Array2::from_shape_fn((16, 12), |(i, j)| j == 2 && i > 3);
        let vein = Array2::from_shape_fn((16, 12), |(i, _)| i == 8);
        (series, AvMask::new(artery, vein).unwrap())
    }

    #[test]
    fn identity_params_are_exact_identity() {
        let (s, m) = fixture();
        let (s2, m2) = apply_augment(&s, &m, &AugmentParams::default());
        assert_eq!(s, s2);
        assert_eq!(m, m2);
    }

    #[test]
    fn some_seed_draws_identity() {
        let seed = (0..1000).find(|&s| AugmentParams::sample(s).is_identity()).unwrap();
        let (s, m) = fixture();
        let (s2, m2) = augment(&s, &m, seed);
        assert_eq!((s, m), (s2, m2));
    }

    #[test]
    fn flip_is_an_involution() {
        let (s, m) = fixture();
        let p = AugmentParams { hflip: true, ..Default::default() };
        let (s1, m1) = apply_augment(&s, &m, &p);
        assert_ne!(s1, s);
        let (s2, m2) = apply_augment(&s1, &m1, &p);
        assert_eq!(s2, s);
        assert_eq!(m2, m);
    }

    #[test]
    fn sampled_parameters_stay_in_range() {
        for seed in 0..500 {
            let p = AugmentParams::sample(seed);
            if let Some((x, y)) = p.translate {
                assert!(x.abs() <= MAX_TRANSLATION && y.abs() <= MAX_TRANSLATION);
            }
            if let Some(s) = p.scale {
                assert!(s.abs() <= MAX_SCALING);
            }
            if let Some(r) = p.rotate_deg {
                assert!(r.abs() <= MAX_ROTATION_DEG);
            }
        }
    }

    #[test]
    fn each_transform_fires_about_half_the_time() {
        let n = 4000;
        let draws: Vec<_> = (0..n).map(AugmentParams::sample).collect();
        let rate = |f: &dyn Fn(&AugmentParams) -> bool| draws.iter().filter(|p| f(p)).count() as f64 / n as f64;
        for r in [
            rate(&|p| p.hflip),
            rate(&|p| p.translate.is_some()),
            rate(&|p| p.scale.is_some()),
            rate(&|p| p.rotate_deg.is_some()),
        ] {
            assert!((r - 0.5).abs() < 0.04, "rate {r}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (s, m) = fixture();
        assert_eq!(augment(&s, &m, 42), augment(&s, &m, 42));
    }
}
