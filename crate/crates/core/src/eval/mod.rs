//! Hard segmentation metrics, significance testing, error maps and reports.

mod report;
mod runners;
mod wilcoxon;

pub use report::{evaluate_methods, evaluate_pairs, MethodRunner, MethodSummary, MetricStat, PairwiseTest, SegReport};
pub use runners::{load_baseline_params, parse_method, CascadeRunner, FrangiKmeansRunner, MaskDirRunner, NetRunner};
pub use wilcoxon::{average_ranks, wilcoxon_paired, WilcoxonResult, EXACT_MAX_N, MIN_N};

use image::{Rgb, RgbImage};
use ndarray::{Array2, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::data::AvMask;
use crate::error::{CaveError, Result};

pub const FP_COLOR: Rgb<u8> = Rgb([255, 165, 0]);
pub const FN_COLOR: Rgb<u8> = Rgb([173, 216, 230]);
pub const TP_COLOR: Rgb<u8> = Rgb([255, 255, 255]);
pub const TN_COLOR: Rgb<u8> = Rgb([0, 0, 0]);

/// Per-channel `p >= threshold` on a `[2, H, W]` probability map.
pub fn binarize(pred: ArrayView3<f32>, threshold: f32) -> Result<AvMask> {
    if pred.shape()[0] != 2 {
        return Err(CaveError::Shape(format!("expected 2 channels, got {}", pred.shape()[0])));
    }
    let a = pred.index_axis(ndarray::Axis(0), 0).mapv(|p| p >= threshold);
    let v = pred.index_axis(ndarray::Axis(0), 1).mapv(|p| p >= threshold);
    AvMask::new(a, v)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for Confusion {
    type Output = Confusion;
    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

pub fn confusion(pred: &Array2<bool>, gt: &Array2<bool>) -> Result<Confusion> {
    if pred.dim() != gt.dim() {
        return Err(CaveError::Shape(format!("prediction {:?} vs reference {:?}", pred.dim(), gt.dim())));
    }
    let mut c = Confusion::default();
    for (&p, &g) in pred.iter().zip(gt) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Dice from counts. Returns `(dice, empty_empty)`; both masks empty scores
/// 1 and sets the flag.
pub fn dice_from_counts(c: &Confusion) -> (f64, bool) {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        (1.0, true)
    } else {
        (2.0 * c.tp as f64 / denom as f64, false)
    }
}

pub fn binary_dice(pred: &Array2<bool>, gt: &Array2<bool>) -> (f64, bool) {
    dice_from_counts(&confusion(pred, gt).expect("binary_dice on mismatched shapes"))
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmptyFlags {
    pub artery: bool,
    pub vein: bool,
    pub vessel: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegScores {
    pub series_id: String,
    pub acc: f64,
    pub sens: f64,
    pub spec: f64,
    pub a_dice: f64,
    pub v_dice: f64,
    pub m_dice: f64,
    pub vessel_dice: f64,
    /// Which Dice values came from the empty-vs-empty convention.
    pub empty_empty: EmptyFlags,
}

impl SegScores {
    pub const METRICS: [&'static str; 7] = ["acc", "sens", "spec", "vessel_dice", "a_dice", "v_dice", "m_dice"];

    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "acc" => self.acc,
            "sens" => self.sens,
            "spec" => self.spec,
            "a_dice" => self.a_dice,
            "v_dice" => self.v_dice,
            "m_dice" => self.m_dice,
            "vessel_dice" => self.vessel_dice,
            _ => return None,
        })
    }
}

pub fn av_scores(pred: &AvMask, gt: &AvMask) -> Result<SegScores> {
    let ca = confusion(&pred.artery, &gt.artery)?;
    let cv = confusion(&pred.vein, &gt.vein)?;
    let (a_dice, ea) = dice_from_counts(&ca);
    let (v_dice, ev) = dice_from_counts(&cv);
    let pooled = ca + cv;
    let (m_dice, _) = dice_from_counts(&pooled);
    let (vessel_dice, evs) = dice_from_counts(&confusion(&pred.union(), &gt.union())?);
    Ok(SegScores {
        series_id: String::new(),
        acc: ratio(pooled.tp + pooled.tn, pooled.total()),
        sens: ratio(pooled.tp, pooled.tp + pooled.fn_),
        spec: ratio(pooled.tn, pooled.tn + pooled.fp),
        a_dice,
        v_dice,
        m_dice,
        vessel_dice,
        empty_empty: EmptyFlags {
            artery: ea,
            vein: ev,
            vessel: evs,
        },
    })
}

/// Colour-coded comparison of one binary channel against its reference.
pub fn error_map(pred: &Array2<bool>, gt: &Array2<bool>) -> Result<RgbImage> {
    if pred.dim() != gt.dim() {
        return Err(CaveError::Shape(format!("prediction {:?} vs reference {:?}", pred.dim(), gt.dim())));
    }
    let (h, w) = pred.dim();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let idx = [y as usize, x as usize];
        match (pred[idx], gt[idx]) {
            (true, true) => TP_COLOR,
            (true, false) => FP_COLOR,
            (false, true) => FN_COLOR,
            (false, false) => TN_COLOR,
        }
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorTask {
    Vessel,
    Artery,
    Vein,
}

pub fn av_error_map(pred: &AvMask, gt: &AvMask, task: ErrorTask) -> Result<RgbImage> {
    match task {
        ErrorTask::Vessel => error_map(&pred.union(), &gt.union()),
        ErrorTask::Artery => error_map(&pred.artery, &gt.artery),
        ErrorTask::Vein => error_map(&pred.vein, &gt.vein),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array3};

    fn row(v: &[u8]) -> Array2<bool> {
        Array2::from_shape_fn((1, v.len()), |(_, j)| v[j] == 1)
    }

    #[test]
    fn binarize_tie_counts_positive() {
        let p = Array3::from_elem((2, 2, 2), 0.5f32);
        assert!(binarize(p.view(), 0.5).unwrap().artery.iter().all(|&b| b));
        let p = Array3::from_elem((2, 2, 2), 0.6f32);
        let m = binarize(p.view(), 0.5).unwrap();
        assert_eq!(m.overlap_count(), 4);
        assert!(binarize(Array3::zeros((3, 2, 2)).view(), 0.5).is_err());
    }

    #[test]
    fn hand_counted_confusion() {
        let c = confusion(&row(&[1, 1, 0, 0]), &row(&[1, 0, 1, 0])).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (1, 1, 1, 1));
    }

    #[test]
    fn dice_examples() {
        let c = Confusion { tp: 3, fp: 1, fn_: 2, tn: 0 };
        assert!((dice_from_counts(&c).0 - 6.0 / 9.0).abs() < 1e-15);
        // M-Dice pools both channels
        let v = Confusion { tp: 2, fp: 0, fn_: 1, tn: 0 };
        assert!((dice_from_counts(&(c + v)).0 - 10.0 / 14.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_prediction() {
        let gt = AvMask::new(arr2(&[[true, false], [false, false]]), arr2(&[[true, true], [false, false]])).unwrap();
        let s = av_scores(&gt, &gt).unwrap();
        for m in SegScores::METRICS {
            assert_eq!(s.metric(m), Some(1.0), "{m}");
        }
    }

    #[test]
    fn empty_conventions() {
        let e = AvMask::zeros(2, 2);
        let s = av_scores(&e, &e).unwrap();
        assert_eq!(s.a_dice, 1.0);
        assert!(s.empty_empty.artery && s.empty_empty.vein);
        let mut p = AvMask::zeros(2, 2);
        p.vein[[0, 0]] = true;
        assert_eq!(av_scores(&p, &e).unwrap().v_dice, 0.0);
    }

    #[test]
    fn error_map_colours_count_errors() {
        let pred = row(&[1, 1, 0, 0, 1]);
        let gt = row(&[1, 0, 1, 0, 0]);
        let img = error_map(&pred, &gt).unwrap();
        let c = confusion(&pred, &gt).unwrap();
        let count = |col| img.pixels().filter(|p| **p == col).count() as u64;
        assert_eq!(count(FP_COLOR), c.fp);
        assert_eq!(count(FN_COLOR), c.fn_);
        assert_eq!(count(TP_COLOR), c.tp);
        let all = error_map(&Array2::from_elem((3, 3), true), &Array2::from_elem((3, 3), false)).unwrap();
        assert!(all.pixels().all(|p| *p == FP_COLOR));
    }
}
