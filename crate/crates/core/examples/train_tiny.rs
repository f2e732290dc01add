//! Train a very small CAVE on a handful of synthetic series, save the best
//! checkpoint and reload it.

use cave::eval::{av_scores, binarize};
use cave::model::{load_checkpoint, save_checkpoint, CaveConfig, TemporalModule};
use cave::synth::{render_dataset, DatasetConfig, SynthConfig};
use cave::train::{train_loop, validation_stats, TrainConfig};
use cave::SegNet;

fn main() -> cave::Result<()> {
    let data = DatasetConfig {
        template: SynthConfig {
            size: (32, 32),
            n_frames: 8,
            ..Default::default()
        },
        n_series: 12,
        split_ratios: (0.5, 0.25, 0.25),
        seed: 5,
    };
    let [train, val, test] = render_dataset(&data)?;
    let cfg = TrainConfig {
        model: CaveConfig {
            base_channels: 4,
            depth: 2,
            temporal_module: TemporalModule::ConvGru,
            ..Default::default()
        },
        lr: 1e-3,
        max_epochs: 8,
        ..Default::default()
    };
    let mut model = SegNet::new(cfg.model.clone(), cfg.seed)?;
    let outcome = train_loop(
        &mut model,
        &train,
        &cfg,
        |m| validation_stats(m, &val, cfg.dice_epsilon),
        |log, _| {
            println!(
                "epoch {:>2}  train {:.4}  val {:.4}  val M-Dice {:.3}  lr {:e}{}",
                log.epoch,
                log.train_loss,
                log.val_loss,
                log.val_mdice.unwrap_or(f64::NAN),
                log.lr,
                if log.improved { "  *" } else { "" }
            );
            Ok(())
        },
    )?;
    println!("best epoch {}", outcome.best_epoch);

    let path = std::env::temp_dir().join("cave-train-tiny.ckpt");
    save_checkpoint(&model, &serde_json::json!({"best_epoch": outcome.best_epoch}), &path)?;
    let restored = load_checkpoint(&path)?;
    for (series, gt) in &test {
        let mask = binarize(restored.model.predict(series)?.view(), 0.5)?;
        println!("{}: M-Dice {:.3}", series.series_id, av_scores(&mask, gt)?.m_dice);
    }
    Ok(())
}
