use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::{av_scores, wilcoxon_paired, SegScores};
use crate::data::{AvMask, DsaSeries};
use crate::error::{CaveError, Result};
use crate::synth::Manifest;

/// Anything that maps a series to an artery/vein mask.
pub trait MethodRunner {
    fn name(&self) -> &str;
    fn segment(&mut self, series: &DsaSeries) -> Result<AvMask>;
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricStat {
    pub mean: f64,
    /// Sample standard deviation; absent with fewer than two series.
    pub std: Option<f64>,
    pub n: usize,
}

impl MetricStat {
    fn from_values(v: &[f64]) -> Option<Self> {
        if v.is_empty() {
            return None;
        }
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = (n >= 2).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Some(MetricStat { mean, std, n })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodSummary {
    pub name: String,
    /// One entry per test series; `None` where the method failed.
    pub scores: Vec<Option<SegScores>>,
    pub failures: Vec<(String, String)>,
    pub stats: BTreeMap<String, MetricStat>,
    /// Series where at least one Dice used the empty-vs-empty convention.
    pub empty_empty_series: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct PairwiseTest {
    pub a: String,
    pub b: String,
    pub metric: String,
    pub n_pairs: usize,
    pub p_value: Option<f64>,
    pub all_zero: bool,
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SegReport {
    pub series_ids: Vec<String>,
    pub methods: Vec<MethodSummary>,
    pub pairwise: Vec<PairwiseTest>,
}

pub const PAIRWISE_METRICS: [&str; 2] = ["m_dice", "vessel_dice"];

impl SegReport {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn pairwise(&self, a: &str, b: &str, metric: &str) -> Option<&PairwiseTest> {
        self.pairwise
            .iter()
            .find(|p| p.metric == metric && ((p.a == a && p.b == b) || (p.a == b && p.b == a)))
    }

    /// Plain-text table: vessel columns, then artery/vein columns.
    pub fn table(&self) -> String {
        let cols = [
            ("Acc", "acc"),
            ("Sens", "sens"),
            ("Spec", "spec"),
            ("Dice", "vessel_dice"),
            ("A-Dice", "a_dice"),
            ("V-Dice", "v_dice"),
            ("M-Dice", "m_dice"),
        ];
        let name_w = self.methods.iter().map(|m| m.name.len()).max().unwrap_or(6).max(6);
        let mut out = String::new();
        let _ = write!(out, "{:<name_w$}", "Method");
        for (h, _) in cols {
            let _ = write!(out, " | {h:^13}");
        }
        out.push('\n');
        out.push_str(&"-".repeat(name_w + cols.len() * 16));
        out.push('\n');
        for m in &self.methods {
            let _ = write!(out, "{:<name_w$}", m.name);
            for (_, key) in cols {
                let cell = match m.stats.get(key) {
                    Some(s) => match s.std {
                        Some(sd) => format!("{:.3} ± {:.3}", s.mean, sd),
                        None => format!("{:.3}", s.mean),
                    },
                    None => "-".into(),
                };
                let _ = write!(out, " | {cell:^13}");
            }
            out.push('\n');
        }
        out
    }
}

/// Score every runner on every `(series, reference)` pair. `on_prediction`
/// sees each successful prediction (e.g. to write error maps).
pub fn evaluate_pairs<F>(
    pairs: &[(DsaSeries, AvMask)],
    runners: &mut [Box<dyn MethodRunner + '_>],
    mut on_prediction: F,
) -> Result<SegReport>
where
    F: FnMut(&str, &DsaSeries, &AvMask, &AvMask) -> Result<()>,
{
    if pairs.is_empty() {
        return Err(CaveError::Validation("no test series to evaluate".into()));
    }
    let series_ids: Vec<String> = pairs.iter().map(|(s, _)| s.series_id.clone()).collect();
    let mut methods = Vec::new();
    for runner in runners.iter_mut() {
        let name = runner.name().to_string();
        let mut scores = Vec::with_capacity(pairs.len());
        let mut failures = Vec::new();
        for (series, gt) in pairs {
            let outcome = runner
                .segment(series)
                .and_then(|pred| Ok((av_scores(&pred, gt)?, pred)));
            match outcome {
                Ok((mut s, pred)) => {
                    on_prediction(&name, series, &pred, gt)?;
                    s.series_id = series.series_id.clone();
                    scores.push(Some(s));
                }
                Err(e) => {
                    log::warn!("{name} failed on {}: {e}", series.series_id);
                    failures.push((series.series_id.clone(), e.to_string()));
                    scores.push(None);
                }
            }
        }
        let mut stats = BTreeMap::new();
        for metric in SegScores::METRICS {
            let vals: Vec<f64> = scores.iter().flatten().filter_map(|s| s.metric(metric)).collect();
            if let Some(st) = MetricStat::from_values(&vals) {
                stats.insert(metric.to_string(), st);
            }
        }
        let empty_empty_series = scores
            .iter()
            .flatten()
            .filter(|s| s.empty_empty.artery || s.empty_empty.vein || s.empty_empty.vessel)
            .count();
        methods.push(MethodSummary {
            name,
            scores,
            failures,
            stats,
            empty_empty_series,
        });
    }

    let mut pairwise = Vec::new();
    for i in 0..methods.len() {
        for j in i + 1..methods.len() {
            for metric in PAIRWISE_METRICS {
                let (mut x, mut y) = (Vec::new(), Vec::new());
                for (a, b) in methods[i].scores.iter().zip(&methods[j].scores) {
                    if let (Some(a), Some(b)) = (a, b) {
                        x.push(a.metric(metric).unwrap());
                        y.push(b.metric(metric).unwrap());
                    }
                }
                let excluded = pairs.len() - x.len();
                if excluded > 0 {
                    log::warn!(
                        "{} vs {}: {excluded} series excluded from the paired test",
                        methods[i].name,
                        methods[j].name
                    );
                }
                let (p_value, all_zero, note) = match wilcoxon_paired(&x, &y) {
                    _ if x.is_empty() => (None, false, Some("no series scored by both methods".into())),
                    Ok(r) => (Some(r.p_value), r.all_zero, None),
                    Err(e) => (None, false, Some(e.to_string())),
                };
                pairwise.push(PairwiseTest {
                    a: methods[i].name.clone(),
                    b: methods[j].name.clone(),
                    metric: metric.to_string(),
                    n_pairs: x.len(),
                    p_value,
                    all_zero,
                    note,
                });
            }
        }
    }
    Ok(SegReport {
        series_ids,
        methods,
        pairwise,
    })
}

/// Evaluate on the manifest's test split.
pub fn evaluate_methods(manifest: &Manifest, runners: &mut [Box<dyn MethodRunner + '_>]) -> Result<SegReport> {
    if manifest.test.is_empty() {
        return Err(CaveError::Validation("manifest has an empty test split".into()));
    }
    let pairs = manifest.load_split(&manifest.test)?;
    evaluate_pairs(&pairs, runners, |_, _, _, _| Ok(()))
}
