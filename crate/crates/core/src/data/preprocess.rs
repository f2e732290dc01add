//! Spatial resize, temporal resampling onto a uniform grid and per-series
//! intensity normalisation.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{AvMask, DsaSeries};
use crate::error::{CaveError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// (height, width) in pixels.
    pub target_size: (usize, usize),
    pub target_fps: f64,
    pub intensity_range: (f32, f32),
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_size: (512, 512),
            target_fps: 1.0,
            intensity_range: (0.0, 255.0),
        }
    }
}

impl PreprocessConfig {
    pub fn with_size(size: usize) -> Self {
        PreprocessConfig {
            target_size: (size, size),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_size.0 == 0 || self.target_size.1 == 0 {
            return Err(CaveError::Config("target_size must be positive".into()));
        }
        if !(self.target_fps.is_finite() && self.target_fps > 0.0) {
            return Err(CaveError::Config("target_fps must be > 0".into()));
        }
        if !(self.intensity_range.0 < self.intensity_range.1) {
            return Err(CaveError::Config("intensity_range must be increasing".into()));
        }
        Ok(())
    }
}

/// Sample times of the resampled grid: `0, 1/fps, 2/fps, …` up to and
/// including the original duration.
pub fn resample_times(duration: f64, target_fps: f64) -> Vec<f64> {
    // tolerate round-off when the duration is an exact multiple of the step
    let n = (duration * target_fps + 1e-9).floor() as usize + 1;
    (0..n).map(|j| j as f64 / target_fps).collect()
}

fn resample_temporal(series: &DsaSeries, target_fps: f64) -> Array3<f32> {
    let t_in = series.n_frames();
    if t_in == 1 {
        return series.frames.clone();
    }
    let times = resample_times(series.duration(), target_fps);
    let (h, w) = (series.height(), series.width());
    let mut out = Array3::<f32>::zeros((times.len(), h, w));
    for (j, &t) in times.iter().enumerate() {
        let pos = t * series.fps;
        let i0 = (pos.floor() as usize).min(t_in - 1);
        let frac = (pos - i0 as f64) as f32;
        let mut dst = out.index_axis_mut(Axis(0), j);
        let a = series.frames.index_axis(Axis(0), i0);
        if frac <= 0.0 || i0 + 1 >= t_in {
            dst.assign(&a);
        } else {
            let b = series.frames.index_axis(Axis(0), i0 + 1);
            ndarray::Zip::from(&mut dst)
                .and(&a)
                .and(&b)
                .for_each(|d, &x, &y| *d = x + frac * (y - x));
        }
    }
    out
}

/// Source coordinate and weight table for a half-pixel-centred linear
/// resize along one axis.
fn linear_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f32)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, (src - i0 as f64) as f32)
        })
        .collect()
}

/// Bilinear resize with half-pixel centres (no antialiasing).
pub fn resize_bilinear(img: ArrayView2<f32>, size: (usize, usize)) -> Array2<f32> {
    let (h, w) = img.dim();
    if (h, w) == size {
        return img.to_owned();
    }
    let rows = linear_taps(h, size.0);
    let cols = linear_taps(w, size.1);
    Array2::from_shape_fn(size, |(i, j)| {
        let (r0, r1, fr) = rows[i];
        let (c0, c1, fc) = cols[j];
        let top = img[[r0, c0]] + fc * (img[[r0, c1]] - img[[r0, c0]]);
        let bottom = img[[r1, c0]] + fc * (img[[r1, c1]] - img[[r1, c0]]);
        top + fr * (bottom - top)
    })
}

fn nearest_index(i: usize, n_in: usize, n_out: usize) -> usize {
    (((i as f64 + 0.5) * n_in as f64 / n_out as f64).floor() as usize).min(n_in - 1)
}

pub(crate) fn resize_nearest(img: ArrayView2<bool>, size: (usize, usize)) -> Array2<bool> {
    let (h, w) = img.dim();
    Array2::from_shape_fn(size, |(i, j)| img[[nearest_index(i, h, size.0), nearest_index(j, w, size.1)]])
}

/// Nearest-neighbour resize of both channels; output stays binary.
pub fn resize_mask(mask: &AvMask, size: (usize, usize)) -> AvMask {
    AvMask {
        artery: resize_nearest(mask.artery.view(), size),
        vein: resize_nearest(mask.vein.view(), size),
    }
}

/// Temporal resampling to `target_fps`, bilinear resize to `target_size`,
/// then per-series min-max normalisation onto `intensity_range`.
///
/// A constant series normalises to the lower end of the range. A single
/// frame is passed through in time.
pub fn preprocess(series: &DsaSeries, cfg: &PreprocessConfig) -> Result<DsaSeries> {
    series.validate()?;
    cfg.validate()?;
    let resampled = resample_temporal(series, cfg.target_fps);
    let (th, tw) = cfg.target_size;
    let mut frames = Array3::<f32>::zeros((resampled.len_of(Axis(0)), th, tw));
    for (src, mut dst) in resampled.outer_iter().zip(frames.outer_iter_mut()) {
        dst.assign(&resize_bilinear(src, cfg.target_size));
    }

    let (lo, hi) = frames
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (out_lo, out_hi) = cfg.intensity_range;
    if hi > lo {
        // lerp form so the extremes land exactly on the range endpoints
        let span = hi - lo;
        frames.mapv_inplace(|v| {
            let t = (v - lo) / span;
            out_lo * (1.0 - t) + out_hi * t
        });
    } else {
        frames.fill(out_lo);
    }

    Ok(DsaSeries {
        frames,
        fps: if series.n_frames() == 1 { series.fps } else { cfg.target_fps },
        view: series.view,
        series_id: series.series_id.clone(),
        patient_id: series.patient_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_series(t: usize, h: usize, w: usize, fps: f64) -> DsaSeries {
        let frames = Array3::from_shape_fn((t, h, w), |(k, i, j)| 100.0 + ((k * 13 + i * 5 + j) % 101) as f32);
        DsaSeries::new(frames, fps).unwrap()
    }

    #[test]
    fn twenty_frames_at_two_fps_become_ten_at_one() {
        let s = ramp_series(20, 8, 8, 2.0);
        let cfg = PreprocessConfig::with_size(8);
        let out = preprocess(&s, &cfg).unwrap();
        assert_eq!(out.n_frames(), 10);
        assert_eq!(out.fps, 1.0);
        let times = resample_times(s.duration(), 1.0);
        assert_eq!(times.first(), Some(&0.0));
        assert_eq!(times.last(), Some(&9.0));
    }

    #[test]
    fn intensities_hit_range_endpoints() {
        let mut s = ramp_series(3, 4, 4, 1.0);
        s.frames.fill(150.0);
        s.frames[[0, 0, 0]] = 100.0;
        s.frames[[2, 3, 3]] = 200.0;
        let out = preprocess(&s, &PreprocessConfig::with_size(4)).unwrap();
        assert_eq!(out.frames[[0, 0, 0]], 0.0);
        assert_eq!(out.frames[[2, 3, 3]], 255.0);
        assert!((out.frames[[1, 1, 1]] - 127.5).abs() < 1e-4);
    }

    #[test]
    fn constant_series_maps_to_zero() {
        let s = DsaSeries::new(Array3::from_elem((3, 4, 4), 77.0), 1.0).unwrap();
        let out = preprocess(&s, &PreprocessConfig::with_size(4)).unwrap();
        assert!(out.frames.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_frame_passes_through_in_time() {
        let s = ramp_series(1, 6, 6, 4.0);
        let out = preprocess(&s, &PreprocessConfig::with_size(6)).unwrap();
        assert_eq!(out.n_frames(), 1);
    }

    #[test]
    fn conforming_series_is_fixed_point() {
        let mut s = ramp_series(5, 8, 8, 1.0);
        s.frames[[0, 0, 0]] = 0.0;
        s.frames[[4, 7, 7]] = 255.0;
        let cfg = PreprocessConfig::with_size(8);
        let once = preprocess(&s, &cfg).unwrap();
        let twice = preprocess(&once, &cfg).unwrap();
        for (a, b) in once.frames.iter().zip(twice.frames.iter()) {
            assert!((a - b).abs() < 1e-4);
        }
        for (a, b) in s.frames.iter().zip(once.frames.iter()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn mask_resize_preserves_uniform_masks() {
        let ones = AvMask {
            artery: Array2::from_elem((64, 64), true),
            vein: Array2::from_elem((64, 64), true),
        };
        let r = resize_mask(&ones, (32, 32));
        assert!(r.artery.iter().all(|&b| b) && r.vein.iter().all(|&b| b));
        let r = resize_mask(&AvMask::zeros(64, 64), (32, 32));
        assert!(r.is_empty());
    }

    #[test]
    fn bad_config_is_rejected() {
        let s = ramp_series(2, 4, 4, 1.0);
        let cfg = PreprocessConfig { target_fps: 0.0, ..PreprocessConfig::with_size(4) };
        assert!(matches!(preprocess(&s, &cfg), Err(CaveError::Config(_))));
    }
}
