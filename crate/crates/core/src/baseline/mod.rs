//! Classical two-step artery/vein classification: a Frangi vessel mask on the
//! MinIP, then K-means over the time-intensity curves of vessel pixels.

mod frangi;
mod kmeans;

pub use frangi::{frangi_vesselness, hessian, sorted_eigenvalues, threshold_vessels, FrangiParams};
pub use kmeans::{kmeans, kmeans_tic, lloyd, AvLabel, KmeansFit, KmeansParams, TicClustering};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{AvMask, DsaSeries};
use crate::error::{CaveError, Result};

/// Parameter file accepted by `cave baseline`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineParams {
    pub frangi: FrangiParams,
    pub kmeans: KmeansParams,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BaselineWarnings {
    /// No pixel passed the vessel threshold.
    pub empty_vessel_mask: bool,
    /// All vessel curves were identical.
    pub degenerate_clustering: bool,
}

#[derive(Clone, Debug)]
pub struct BaselineOutput {
    pub mask: AvMask,
    pub vessel_mask: Array2<bool>,
    pub warnings: BaselineWarnings,
}

/// Label each pixel of `vessel_mask` artery or vein by clustering its curve.
pub fn cascade_kmeans(vessel_mask: &Array2<bool>, series: &DsaSeries, kp: &KmeansParams) -> Result<BaselineOutput> {
    kp.validate()?;
    let (h, w) = (series.height(), series.width());
    if vessel_mask.dim() != (h, w) {
        return Err(CaveError::Shape(format!(
            "vessel mask is {:?} but series frames are {:?}",
            vessel_mask.dim(),
            (h, w)
        )));
    }
    let pixels: Vec<(usize, usize)> = vessel_mask
        .indexed_iter()
        .filter(|(_, &v)| v)
        .map(|(p, _)| p)
        .collect();
    let mut warnings = BaselineWarnings::default();
    let mut mask = AvMask::zeros(h, w);
    match pixels.len() {
        0 => {
            log::warn!("vessel mask is empty; returning an empty artery/vein mask");
            warnings.empty_vessel_mask = true;
        }
        1 => {
            // a lone pixel cannot be split into two clusters
            mask.artery[pixels[0]] = true;
            warnings.degenerate_clustering = true;
        }
        _ => {
            let tics = pixels
                .iter()
                .map(|&(r, c)| series.extract_tic(r, c))
                .collect::<Result<Vec<_>>>()?;
            let clustering = kmeans_tic(&tics, kp)?;
            warnings.degenerate_clustering = clustering.degenerate;
            for (&p, label) in pixels.iter().zip(&clustering.labels) {
                match label {
                    AvLabel::Artery => mask.artery[p] = true,
                    AvLabel::Vein => mask.vein[p] = true,
                }
            }
        }
    }
    Ok(BaselineOutput {
        mask,
        vessel_mask: vessel_mask.clone(),
        warnings,
    })
}

/// MinIP → Frangi → threshold → per-pixel curve clustering.
pub fn frangi_kmeans_pipeline(series: &DsaSeries, fp: &FrangiParams, kp: &KmeansParams) -> Result<BaselineOutput> {
    fp.validate()?;
    let minip = series.min_intensity_projection();
    let v = frangi_vesselness(&minip, fp)?;
    let vessels = threshold_vessels(&v, fp.threshold);
    cascade_kmeans(&vessels, series, kp)
}

/// Pick the vesselness threshold maximising mean vessel Dice over
/// `(series, ground truth)` pairs. Candidates are `n_steps` evenly spaced
/// values in (0, 1).
pub fn calibrate_threshold(pairs: &[(DsaSeries, AvMask)], fp: &FrangiParams, n_steps: usize) -> Result<(f64, f64)> {
    if pairs.is_empty() || n_steps == 0 {
        return Err(CaveError::Validation("threshold calibration needs data and candidates".into()));
    }
    let maps = pairs
        .iter()
        .map(|(s, m)| Ok((frangi_vesselness(&s.min_intensity_projection(), fp)?, m.union())))
        .collect::<Result<Vec<_>>>()?;
    let mut best = (fp.threshold, f64::NEG_INFINITY);
    for i in 1..=n_steps {
        let thr = i as f64 / (n_steps + 1) as f64;
        let score = maps
            .iter()
            .map(|(v, gt)| crate::eval::binary_dice(&threshold_vessels(v, thr), gt).0)
            .sum::<f64>()
            / maps.len() as f64;
        if score > best.1 {
            best = (thr, score);
        }
    }
    Ok(best)
}
