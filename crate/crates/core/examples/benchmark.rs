//! Synthetic ordering benchmark: Frangi+K-means vs U-Net (MinIP) vs CAVE.
//!
//! `cargo run --release --example benchmark -- [epochs] [temporal module]`
//!
//! 150 series at 128² with artifact level 0.5, split 100/20/30. Both
//! networks use base 8, depth 2, lr 1e-3. Expect about 80 s per CAVE epoch on
//! one core.

use std::time::Instant;

use cave::baseline::{calibrate_threshold, frangi_kmeans_pipeline, BaselineParams};
use cave::eval::{av_scores, binarize, wilcoxon_paired, SegScores};
use cave::model::{CaveConfig, SegNet, TemporalModule};
use cave::synth::{render_dataset, DatasetConfig, SynthConfig};
use cave::train::{train_loop, validation_stats, TrainConfig};

const SEED: u64 = 2024;

fn summary(name: &str, scores: &[SegScores]) {
    let n = scores.len() as f64;
    let mean = |f: fn(&SegScores) -> f64| scores.iter().map(f).sum::<f64>() / n;
    println!(
        "{name:<16} vessel {:.3}  A {:.3}  V {:.3}  M {:.3}",
        mean(|s| s.vessel_dice),
        mean(|s| s.a_dice),
        mean(|s| s.v_dice),
        mean(|s| s.m_dice)
    );
}

fn main() -> cave::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs: usize = args.first().map_or(15, |s| s.parse().expect("epochs"));
    let module: TemporalModule = match args.get(1) {
        Some(s) => s.parse()?,
        None => TemporalModule::ConvGru,
    };

    let cfg = DatasetConfig {
        template: SynthConfig { size: (128, 128), artifact_level: 0.5, ..Default::default() },
        n_series: 150,
        split_ratios: (100.0 / 150.0, 20.0 / 150.0, 30.0 / 150.0),
        seed: SEED,
    };
    let [train, val, test] = render_dataset(&cfg)?;

    let mut bp = BaselineParams::default();
    let (thr, val_dice) = calibrate_threshold(&val, &bp.frangi, 19)?;
    bp.frangi.threshold = thr;
    println!("frangi threshold {thr:.3} (val vessel dice {val_dice:.3})");
    let fk = test
        .iter()
        .map(|(s, m)| av_scores(&frangi_kmeans_pipeline(s, &bp.frangi, &bp.kmeans)?.mask, m))
        .collect::<cave::Result<Vec<_>>>()?;

    let fit = |module: TemporalModule| -> cave::Result<Vec<SegScores>> {
        let tc = TrainConfig {
            model: CaveConfig { base_channels: 8, depth: 2, temporal_module: module, ..Default::default() },
            lr: 1e-3,
            max_epochs: epochs,
            seed: SEED,
            ..Default::default()
        };
        let mut model = SegNet::new(tc.model.clone(), SEED)?;
        println!("{module:?}: {} parameters", model.num_params());
        let t = Instant::now();
        train_loop(&mut model, &train, &tc, |m| validation_stats(m, &val, tc.dice_epsilon), |l, _| {
            println!(
                "  epoch {:>2}  train {:.4}  val {:.4}  lr {:e}  {:.0?}",
                l.epoch, l.train_loss, l.val_loss, l.lr, t.elapsed()
            );
            Ok(())
        })?;
        test.iter().map(|(s, m)| av_scores(&binarize(model.predict(s)?.view(), 0.5)?, m)).collect()
    };
    let unet = fit(TemporalModule::None)?;
    let cave = fit(module)?;

    println!();
    summary("frangi+kmeans", &fk);
    summary("unet (MinIP)", &unet);
    summary(&format!("cave ({module:?})"), &cave);
    let m = |v: &[SegScores]| v.iter().map(|s| s.m_dice).collect::<Vec<_>>();
    let w = wilcoxon_paired(&m(&cave), &m(&unet))?;
    println!("Wilcoxon CAVE vs U-Net on M-Dice: p = {:.3e}", w.p_value);
    Ok(())
}
