//! Loss, optimiser, schedule and the training loop.

mod loss;
mod optim;
mod schedule;

pub use loss::{av_loss, av_loss_with_grad, soft_mdice, LossBreakdown, DICE_EPSILON, PROB_CLAMP};
pub use optim::RmsProp;
pub use schedule::{EarlyStopping, PlateauScheduler};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{augment, AvMask, DsaSeries};
use crate::error::{CaveError, Result};
use crate::model::{save_checkpoint, CaveConfig, SegNet};
use crate::nn::{Graph, ParamStore, Tensor};
use crate::synth::Manifest;

pub const LOG_FILE: &str = "log.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.best";

/// Quantity driving the scheduler and early stopping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    #[default]
    ValLoss,
    /// `1 - mean validation M-Dice` (hard, thresholded at 0.5).
    ValMdice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: CaveConfig,
    pub lr: f64,
    pub plateau_patience: usize,
    pub decay_factor: f64,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    /// Minimum absolute decrease that counts as an improvement.
    pub improvement_threshold: f64,
    pub rms_alpha: f64,
    pub rms_eps: f64,
    pub aug_enabled: bool,
    pub seed: u64,
    pub dice_epsilon: f64,
    pub monitor: Monitor,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: CaveConfig::default(),
            lr: 1e-5,
            plateau_patience: 10,
            decay_factor: 0.5,
            early_stop_patience: 50,
            max_epochs: 1000,
            improvement_threshold: 1e-6,
            rms_alpha: 0.99,
            rms_eps: 1e-8,
            aug_enabled: true,
            seed: 0,
            dice_epsilon: DICE_EPSILON,
            monitor: Monitor::ValLoss,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.plateau_patience < 1 || self.early_stop_patience < 1 || self.max_epochs < 1 {
            return Err(CaveError::Config("patiences and max_epochs must be >= 1".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(CaveError::Config("decay_factor must lie in (0, 1)".into()));
        }
        if !(self.lr > 0.0) || !(self.dice_epsilon >= 0.0) {
            return Err(CaveError::Config("lr must be > 0 and dice_epsilon >= 0".into()));
        }
        Ok(())
    }
}

/// One line of `log.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_ce: f64,
    pub train_mdice_loss: f64,
    pub val_loss: f64,
    pub val_mdice: Option<f64>,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub improved: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValStats {
    pub loss: f64,
    pub m_dice: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub logs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_monitor: f64,
    pub stopped_early: bool,
}

/// Logits of `model` on `input` as a `[2, H, W]` f64 array.
fn logits_to_array(t: &Tensor) -> Array3<f64> {
    let [_, c, h, w] = t.dims4();
    Array3::from_shape_vec((c, h, w), t.data().iter().map(|&v| v as f64).collect()).expect("logit shape")
}

/// One optimisation step on a single series.
pub fn train_step(model: &mut SegNet, series: &DsaSeries, gt: &AvMask, opt: &mut RmsProp, epsilon: f64) -> Result<LossBreakdown> {
    let input = model.input_for(series);
    let (loss, grads) = {
        let mut g = Graph::new(model.params());
        let x = g.constant(input);
        let logits = model.logits(&mut g, x)?;
        let z = logits_to_array(g.value(logits));
        let (loss, dz) = av_loss_with_grad(z.view(), gt, epsilon).map_err(|e| match e {
            CaveError::NonFinite(_) => CaveError::NonFinite(format!(
                "logits for series {:?} (lr {:e})",
                series.series_id, opt.lr
            )),
            e => e,
        })?;
        let seed = Tensor::from_vec(g.shape(logits), dz.iter().map(|&v| v as f32).collect());
        (loss, g.backward(logits, seed))
    };
    if grads.iter().any(|(_, t)| t.data().iter().any(|v| !v.is_finite())) {
        return Err(CaveError::NonFinite(format!("gradient on series {:?}", series.series_id)));
    }
    opt.step(model.params_mut(), &grads);
    Ok(loss)
}

/// Mean loss and hard M-Dice of `model` over `pairs`.
pub fn validation_stats(model: &SegNet, pairs: &[(DsaSeries, AvMask)], epsilon: f64) -> Result<ValStats> {
    if pairs.is_empty() {
        return Err(CaveError::Config("validation split is empty".into()));
    }
    let (mut loss, mut dice) = (0.0, 0.0);
    for (series, gt) in pairs {
        let mut g = Graph::inference(model.params());
        let x = g.constant(model.input_for(series));
        let logits = model.logits(&mut g, x)?;
        let z = logits_to_array(g.value(logits));
        loss += av_loss_with_grad(z.view(), gt, epsilon)?.0.total;
        let pred = crate::eval::binarize(z.mapv(|v| (v >= 0.0) as u8 as f32).view(), 0.5)?;
        dice += crate::eval::av_scores(&pred, gt)?.m_dice;
    }
    let n = pairs.len() as f64;
    Ok(ValStats {
        loss: loss / n,
        m_dice: Some(dice / n),
    })
}

/// Epoch loop. `validate` scores the current weights (stubbable);
/// `on_epoch` sees every log line and the current weights, with
/// `improved` set when they are the best so far. On return the model holds
/// the best weights.
pub fn train_loop<V, E>(
    model: &mut SegNet,
    train: &[(DsaSeries, AvMask)],
    cfg: &TrainConfig,
    mut validate: V,
    mut on_epoch: E,
) -> Result<TrainOutcome>
where
    V: FnMut(&SegNet) -> Result<ValStats>,
    E: FnMut(&EpochLog, &SegNet) -> Result<()>,
{
    cfg.validate()?;
    if train.is_empty() {
        return Err(CaveError::Config("training split is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = RmsProp::new(cfg.lr, cfg.rms_alpha, cfg.rms_eps);
    let mut sched = PlateauScheduler::new(cfg.lr, cfg.decay_factor, cfg.plateau_patience, cfg.improvement_threshold);
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience, cfg.improvement_threshold);
    let mut best: Option<ParamStore> = None;
    let mut outcome = TrainOutcome {
        logs: Vec::new(),
        best_epoch: 0,
        best_monitor: f64::INFINITY,
        stopped_early: false,
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        let lr = sched.lr();
        opt.lr = lr;
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        for &i in &order {
            let (series, gt) = &train[i];
            let aug_seed: u64 = rng.random();
            let l = if cfg.aug_enabled {
                let (s, m) = augment(series, gt, aug_seed);
                train_step(model, &s, &m, &mut opt, cfg.dice_epsilon)?
            } else {
                train_step(model, series, gt, &mut opt, cfg.dice_epsilon)?
            };
            sum.ce += l.ce;
            sum.mdice_loss += l.mdice_loss;
            sum.total += l.total;
        }
        let n = train.len() as f64;
        let val = validate(model)?;
        let monitored = match cfg.monitor {
            Monitor::ValLoss => val.loss,
            Monitor::ValMdice => 1.0 - val.m_dice.ok_or_else(|| CaveError::Config("validation gave no M-Dice".into()))?,
        };
        if !monitored.is_finite() {
            return Err(CaveError::NonFinite(format!("validation value at epoch {epoch}")));
        }
        let improved = stopper.improved(monitored);
        if improved {
            best = Some(model.params().clone());
            outcome.best_epoch = epoch;
            outcome.best_monitor = monitored;
        }
        let log = EpochLog {
            epoch,
            train_loss: sum.total / n,
            train_ce: sum.ce / n,
            train_mdice_loss: sum.mdice_loss / n,
            val_loss: val.loss,
            val_mdice: val.m_dice,
            lr,
            improved,
        };
        log::info!(
            "epoch {epoch}: train {:.5} val {:.5} lr {lr:e}{}",
            log.train_loss,
            log.val_loss,
            if improved { " *" } else { "" }
        );
        on_epoch(&log, model)?;
        outcome.logs.push(log);
        sched.step(monitored);
        if stopper.step(monitored) {
            outcome.stopped_early = true;
            break;
        }
    }
    if let Some(best) = best {
        *model.params_mut() = best;
    }
    Ok(outcome)
}

/// Train from a manifest, writing `log.jsonl` and `checkpoint.best` into
/// `out_dir`.
pub fn train(manifest: &Manifest, cfg: &TrainConfig, out_dir: impl AsRef<Path>) -> Result<(SegNet, TrainOutcome)> {
    cfg.validate()?;
    if manifest.train.is_empty() || manifest.val.is_empty() {
        return Err(CaveError::Config("manifest needs non-empty train and val splits".into()));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| CaveError::io(out_dir, e))?;
    let train_set = manifest.load_split(&manifest.train)?;
    let val_set = manifest.load_split(&manifest.val)?;
    let mut model = SegNet::new(cfg.model.clone(), cfg.seed)?;
    log::info!(
        "training {} ({} parameters) on {} series, validating on {}",
        cfg.model.temporal_module.as_str(),
        model.num_params(),
        train_set.len(),
        val_set.len()
    );
    let log_path = out_dir.join(LOG_FILE);
    let ckpt_path = out_dir.join(CHECKPOINT_FILE);
    let mut log_file = BufWriter::new(File::create(&log_path).map_err(|e| CaveError::io(&log_path, e))?);
    let eps = cfg.dice_epsilon;
    let outcome = train_loop(
        &mut model,
        &train_set,
        cfg,
        |m| validation_stats(m, &val_set, eps),
        |log, m| {
            serde_json::to_writer(&mut log_file, log)?;
            writeln!(log_file).and_then(|_| log_file.flush()).map_err(|e| CaveError::io(&log_path, e))?;
            if log.improved {
                let meta = serde_json::json!({"epoch": log.epoch, "val_loss": log.val_loss, "seed": cfg.seed});
                save_checkpoint(m, &meta, &ckpt_path)?;
            }
            Ok(())
        },
    )?;
    Ok((model, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TemporalModule;
    use crate::synth::{render_series, SynthConfig};

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            model: CaveConfig {
                base_channels: 2,
                depth: 1,
                temporal_module: TemporalModule::ConvGru,
                ..Default::default()
            },
            aug_enabled: false,
            max_epochs: 3,
            ..Default::default()
        }
    }

    fn tiny_data() -> Vec<(DsaSeries, AvMask)> {
        let cfg = SynthConfig {
            size: (16, 16),
            n_frames: 3,
            ..Default::default()
        };
        vec![render_series(&cfg).unwrap()]
    }

    #[test]
    fn stubbed_validation_drives_the_schedule() {
        let mut cfg = tiny_cfg();
        cfg.max_epochs = 60;
        cfg.lr = 1e-5;
        let data = tiny_data();
        let mut model = SegNet::new(cfg.model.clone(), 0).unwrap();
        let out = train_loop(&mut model, &data, &cfg, |_| Ok(ValStats { loss: 1.0, m_dice: None }), |_, _| Ok(())).unwrap();
        let lrs: Vec<f64> = out.logs.iter().map(|l| l.lr).collect();
        assert_eq!(out.logs.len(), 51);
        assert!(out.stopped_early);
        assert_eq!(lrs[10], 1e-5);
        assert_eq!(lrs[11], 5e-6);
        assert_eq!(lrs[21], 2.5e-6);
        assert_eq!(out.best_epoch, 1);
    }

    #[test]
    fn empty_split_is_a_config_error() {
        let cfg = tiny_cfg();
        let mut model = SegNet::new(cfg.model.clone(), 0).unwrap();
        let r = train_loop(&mut model, &[], &cfg, |_| Ok(ValStats { loss: 1.0, m_dice: None }), |_, _| Ok(()));
        assert!(matches!(r, Err(CaveError::Config(_))));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let mut cfg = tiny_cfg();
        cfg.aug_enabled = true;
        let data = tiny_data();
        let run = || {
            let mut model = SegNet::new(cfg.model.clone(), 0).unwrap();
            let out = train_loop(&mut model, &data, &cfg, |m| validation_stats(m, &data, 1.0), |_, _| Ok(())).unwrap();
            (out.logs, model.params().clone())
        };
        let (a, pa) = run();
        let (b, pb) = run();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
    }

    #[test]
    fn single_sample_loss_decreases() {
        let mut cfg = tiny_cfg();
        cfg.lr = 1e-3;
        cfg.max_epochs = 10;
        let data = tiny_data();
        let mut model = SegNet::new(cfg.model.clone(), 1).unwrap();
        let out = train_loop(&mut model, &data, &cfg, |m| validation_stats(m, &data, 1.0), |_, _| Ok(())).unwrap();
        let losses: Vec<f64> = out.logs.iter().map(|l| l.train_loss).collect();
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        c.decay_factor = 1.0;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            plateau_patience: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
