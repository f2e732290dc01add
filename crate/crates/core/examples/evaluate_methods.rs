//! Metrics, error maps, paired Wilcoxon tests and the summary table.

use cave::baseline::BaselineParams;
use cave::eval::{av_error_map, av_scores, evaluate_pairs, wilcoxon_paired, ErrorTask, FrangiKmeansRunner, MethodRunner};
use cave::synth::{render_series, SynthConfig};
use cave::{AvMask, DsaSeries, Result};

/// Ground truth with the vein channel erased: a deliberately weak method.
struct ArteriesOnly(Vec<(DsaSeries, AvMask)>);

impl MethodRunner for ArteriesOnly {
    fn name(&self) -> &str {
        "arteries-only"
    }
    fn segment(&mut self, series: &DsaSeries) -> Result<AvMask> {
        let (_, gt) = self.0.iter().find(|(s, _)| s.series_id == series.series_id).expect("known series");
        Ok(AvMask::new(gt.artery.clone(), ndarray::Array2::from_elem(gt.artery.dim(), false))?)
    }
}

fn main() -> Result<()> {
    let pairs: Vec<(DsaSeries, AvMask)> = (0..8)
        .map(|seed| {
            render_series(&SynthConfig {
                size: (64, 64),
                artifact_level: 0.2,
                seed,
                ..Default::default()
            })
        })
        .collect::<Result<_>>()?;

    let s = av_scores(&pairs[0].1, &pairs[0].1)?;
    println!("self-comparison: M-Dice {} acc {}", s.m_dice, s.acc);

    let mut runners: Vec<Box<dyn MethodRunner>> = vec![
        Box::new(FrangiKmeansRunner {
            name: "frangi-kmeans".into(),
            params: BaselineParams::default(),
        }),
        Box::new(ArteriesOnly(pairs.clone())),
    ];
    let out_dir = std::env::temp_dir().join("cave-errmaps");
    std::fs::create_dir_all(&out_dir).map_err(|e| cave::CaveError::Io { path: out_dir.clone(), source: e })?;
    let report = evaluate_pairs(&pairs, &mut runners, |method, series, pred, gt| {
        let path = out_dir.join(format!("{method}_{}.png", series.series_id));
        av_error_map(pred, gt, ErrorTask::Vessel)?
            .save(&path)
            .map_err(|e| cave::CaveError::Image { path: path.clone(), source: e })
    })?;
    println!("{}", report.table());
    for t in &report.pairwise {
        println!("{} vs {} on {}: p = {:?} over {} pairs", t.a, t.b, t.metric, t.p_value, t.n_pairs);
    }

    // the test on its own
    let x = [0.91, 0.88, 0.93, 0.90, 0.87, 0.92, 0.89, 0.94];
    let y = [0.85, 0.86, 0.88, 0.84, 0.80, 0.90, 0.83, 0.86];
    println!("wilcoxon: {:?}", wilcoxon_paired(&x, &y)?);
    println!("error maps in {}", out_dir.display());
    Ok(())
}
