//! DSA series and artery/vein mask model, plus derived views.

mod augment;
mod io;
mod preprocess;

pub use augment::{augment, apply_augment, AugmentParams};
pub use io::{load_mask, load_series, save_mask, save_series, SeriesMeta};
pub use preprocess::{preprocess, resize_bilinear, resize_mask, resample_times, PreprocessConfig};

use ndarray::{Array1, Array2, Array3, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{CaveError, Result};

/// Acquisition view. Only carried as metadata.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum View {
    #[serde(rename = "AP")]
    Ap,
    Lateral,
    #[default]
    Unknown,
}

/// A 2D+t grayscale frame stack `[T × H × W]`.
///
/// Frames are kept as `f32` so the preprocessing chain stays real-valued;
/// they are quantised to 8 bits only when written to disk. Vessels are dark:
/// 255 means no contrast.
#[derive(Clone, Debug, PartialEq)]
pub struct DsaSeries {
    pub frames: Array3<f32>,
    pub fps: f64,
    pub view: View,
    pub series_id: String,
    pub patient_id: String,
}

impl DsaSeries {
    pub fn new(frames: Array3<f32>, fps: f64) -> Result<Self> {
        let series = DsaSeries {
            frames,
            fps,
            view: View::Unknown,
            series_id: String::new(),
            patient_id: String::new(),
        };
        series.validate()?;
        Ok(series)
    }

    pub fn with_ids(mut self, series_id: impl Into<String>, patient_id: impl Into<String>) -> Self {
        self.series_id = series_id.into();
        self.patient_id = patient_id.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.len_of(Axis(0)) == 0 {
            return Err(CaveError::EmptySeries);
        }
        if self.height() == 0 || self.width() == 0 {
            return Err(CaveError::Validation("frames have zero area".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(CaveError::Validation(format!("fps must be > 0, got {}", self.fps)));
        }
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len_of(Axis(0))
    }

    pub fn height(&self) -> usize {
        self.frames.len_of(Axis(1))
    }

    pub fn width(&self) -> usize {
        self.frames.len_of(Axis(2))
    }

    /// Duration between the first and the last frame, in seconds.
    pub fn duration(&self) -> f64 {
        (self.n_frames().saturating_sub(1)) as f64 / self.fps
    }

    /// Per-pixel temporal minimum (MinIP). Accumulates every opacified vessel
    /// into a single static image.
    pub fn min_intensity_projection(&self) -> Array2<f32> {
        min_intensity_projection(self)
    }

    pub fn extract_tic(&self, row: usize, col: usize) -> Result<Tic> {
        extract_tic(self, row, col)
    }
}

pub fn min_intensity_projection(series: &DsaSeries) -> Array2<f32> {
    series
        .frames
        .fold_axis(Axis(0), f32::INFINITY, |&acc, &v| acc.min(v))
}

/// Time-intensity curve at one pixel, as a contrast proxy (255 − I) so that
/// bolus passage shows up as a peak.
#[derive(Clone, Debug, PartialEq)]
pub struct Tic {
    pub values: Array1<f32>,
    pub location: (usize, usize),
}

impl Tic {
    /// Index of the first maximum.
    pub fn time_to_peak(&self) -> usize {
        argmax(self.values.iter().copied())
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f32>) -> usize {
    let mut best = (0, f32::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn extract_tic(series: &DsaSeries, row: usize, col: usize) -> Result<Tic> {
    if row >= series.height() || col >= series.width() {
        return Err(CaveError::Index {
            row,
            col,
            height: series.height(),
            width: series.width(),
        });
    }
    let values = series
        .frames
        .slice(ndarray::s![.., row, col])
        .mapv(|v| (255.0 - v).max(0.0));
    Ok(Tic {
        values,
        location: (row, col),
    })
}

/// Two independent binary channels. A pixel may carry both labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AvMask {
    pub artery: Array2<bool>,
    pub vein: Array2<bool>,
}

impl AvMask {
    pub fn new(artery: Array2<bool>, vein: Array2<bool>) -> Result<Self> {
        if artery.dim() != vein.dim() {
            return Err(CaveError::Shape(format!(
                "artery {:?} and vein {:?} channels differ in size",
                artery.dim(),
                vein.dim()
            )));
        }
        Ok(AvMask { artery, vein })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        AvMask {
            artery: Array2::from_elem((height, width), false),
            vein: Array2::from_elem((height, width), false),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.artery.dim()
    }

    /// Vessel mask: artery ∪ vein.
    pub fn union(&self) -> Array2<bool> {
        Zip::from(&self.artery)
            .and(&self.vein)
            .map_collect(|&a, &v| a || v)
    }

    pub fn overlap_count(&self) -> usize {
        Zip::from(&self.artery)
            .and(&self.vein)
            .fold(0, |n, &a, &v| n + (a && v) as usize)
    }

    pub fn is_empty(&self) -> bool {
        !self.artery.iter().chain(self.vein.iter()).any(|&b| b)
    }
}
