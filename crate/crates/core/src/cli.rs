//! Subcommands behind the `cave` binary. Every run writes `run_meta.json`
//! (command line, resolved config, seed, crate version) next to its output.
//!
//! Exit codes: 0 success, 1 invalid input or configuration (including usage
//! errors), 2 failure while running.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::baseline::{calibrate_threshold, cascade_kmeans, frangi_kmeans_pipeline};
use crate::data::{load_mask, load_series, preprocess, resize_mask, save_mask, save_series, PreprocessConfig};
use crate::error::{CaveError, Result};
use crate::eval::{av_error_map, binarize, evaluate_pairs, load_baseline_params, parse_method, ErrorTask, MethodRunner};
use crate::model::load_checkpoint;
use crate::synth::{generate_dataset, DatasetConfig, Manifest};
use crate::train::{train, TrainConfig};

pub const RUN_META_FILE: &str = "run_meta.json";
pub const DETERMINISTIC_ENV: &str = "CAVE_DETERMINISTIC";

#[derive(Debug, Parser)]
#[command(name = "cave", version, about = "Artery/vein segmentation of 2D+t DSA series")]
pub struct Cli {
    /// Override the seed stored in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Force deterministic numerics (also via CAVE_DETERMINISTIC=1).
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a seeded synthetic dataset with a split manifest.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Resample, resize and normalise a series (and optionally its mask).
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Train CAVE or the U-Net from a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment one series with a checkpoint into an RGB mask.
    Segment {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f32,
        /// Preprocess the series first with this config.
        #[arg(long)]
        preprocess: Option<PathBuf>,
    },
    /// Classical baselines.
    #[command(subcommand)]
    Baseline(BaselineCommand),
    /// Compare methods on the manifest's test split.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Items `[label=]kind[:arg]`, e.g. `cave:run/checkpoint.best`,
        /// `unet:u.ckpt`, `unet-kmeans:u.ckpt+params.json`, `frangi-kmeans:params.json`,
        /// `masks:dir`. Separate methods with commas or repeat the flag.
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Skip writing error maps.
        #[arg(long)]
        no_errmaps: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum BaselineCommand {
    /// Frangi vessel mask on the MinIP + K-means on time-intensity curves.
    FrangiKmeans(BaselineIo),
    /// U-Net vessel mask + K-means on time-intensity curves.
    UnetKmeans {
        #[arg(long)]
        ckpt: PathBuf,
        #[command(flatten)]
        io: BaselineIo,
    },
    /// Pick the vesselness threshold maximising vessel Dice on the val split.
    Calibrate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        /// Where to write the calibrated parameter file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 19)]
        steps: usize,
    },
}

#[derive(Debug, Args)]
pub struct BaselineIo {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub params: Option<PathBuf>,
}

#[derive(Serialize)]
struct RunMeta<'a, C: Serialize> {
    command: &'a str,
    args: Vec<String>,
    seed: Option<u64>,
    deterministic: bool,
    version: &'static str,
    config: &'a C,
}

fn read_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                if e.kind() == std::io::ErrorKind::NotFound {
                    CaveError::Validation(format!("config file {} does not exist", p.display()))
                } else {
                    CaveError::io(p, e)
                }
            })?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn require_exists(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CaveError::Validation(format!("{} does not exist", path.display())))
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CaveError::io(dir, e))
}

/// Directory that receives `run_meta.json` for an output path: the path
/// itself when it is a directory output, otherwise its parent.
fn meta_dir(out: &Path, out_is_dir: bool) -> PathBuf {
    if out_is_dir {
        out.to_path_buf()
    } else {
        out.parent().filter(|p| !p.as_os_str().is_empty()).map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
    }
}

struct Ctx {
    args: Vec<String>,
    seed: Option<u64>,
    deterministic: bool,
}

impl Ctx {
    fn write_meta<C: Serialize>(&self, command: &str, dir: &Path, seed: Option<u64>, config: &C) -> Result<()> {
        ensure_dir(dir)?;
        let meta = RunMeta {
            command,
            args: self.args.clone(),
            seed: seed.or(self.seed),
            deterministic: self.deterministic,
            version: env!("CARGO_PKG_VERSION"),
            config,
        };
        let path = dir.join(RUN_META_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| CaveError::io(&path, e))
    }
}

fn deterministic_from_env() -> bool {
    std::env::var(DETERMINISTIC_ENV).is_ok_and(|v| v == "1" || v.eq_ignore_ascii_case("true"))
}

/// Run a parsed command line.
pub fn execute(cli: Cli, args: Vec<String>) -> Result<()> {
    // all numerics are single-threaded with fixed reduction order, so
    // deterministic mode needs no switch; it is only recorded in run_meta.json
    let ctx = Ctx {
        args,
        seed: cli.seed,
        deterministic: cli.deterministic || deterministic_from_env(),
    };
    match cli.command {
        Command::Synth { config, out } => {
            let mut cfg: DatasetConfig = read_json(config.as_deref())?;
            if let Some(s) = ctx.seed {
                cfg.seed = s;
            }
            let manifest = generate_dataset(&cfg, &out)?;
            log::info!(
                "wrote {} series ({} train / {} val / {} test) to {}",
                cfg.n_series,
                manifest.train.len(),
                manifest.val.len(),
                manifest.test.len(),
                out.display()
            );
            ctx.write_meta("synth", &out, Some(cfg.seed), &cfg)
        }
        Command::Preprocess { input, out, config, mask } => {
            require_exists(&input)?;
            let cfg: PreprocessConfig = read_json(config.as_deref())?;
            let series = load_series(&input)?;
            let pre = preprocess(&series, &cfg)?;
            save_series(&pre, &out)?;
            if let Some(m) = mask {
                require_exists(&m)?;
                let resized = resize_mask(&load_mask(&m)?, cfg.target_size);
                save_mask(&resized, out.join(crate::synth::MASK_FILE))?;
            }
            ctx.write_meta("preprocess", &out, None, &cfg)
        }
        Command::Train { manifest, config, out } => {
            require_exists(&manifest)?;
            let mut cfg: TrainConfig = read_json(config.as_deref())?;
            if let Some(s) = ctx.seed {
                cfg.seed = s;
            }
            let m = Manifest::load(&manifest)?;
            ensure_dir(&out)?;
            ctx.write_meta("train", &out, Some(cfg.seed), &cfg)?;
            let (_, outcome) = train(&m, &cfg, &out)?;
            log::info!(
                "best epoch {} (monitored {:.5}) after {} epochs",
                outcome.best_epoch,
                outcome.best_monitor,
                outcome.logs.len()
            );
            Ok(())
        }
        Command::Segment {
            ckpt,
            input,
            out,
            threshold,
            preprocess: pre,
        } => {
            require_exists(&ckpt)?;
            require_exists(&input)?;
            let model = load_checkpoint(&ckpt)?.model;
            let mut series = load_series(&input)?;
            let pre_cfg: Option<PreprocessConfig> = match pre {
                Some(p) => Some(read_json(Some(&p))?),
                None => None,
            };
            if let Some(c) = &pre_cfg {
                series = preprocess(&series, c)?;
            }
            let mask = binarize(model.predict(&series)?.view(), threshold)?;
            save_mask(&mask, &out)?;
            let snapshot = serde_json::json!({
                "model": model.config(),
                "threshold": threshold,
                "preprocess": pre_cfg,
            });
            ctx.write_meta("segment", &meta_dir(&out, false), None, &snapshot)
        }
        Command::Baseline(BaselineCommand::FrangiKmeans(io)) => {
            require_exists(&io.input)?;
            let mut params = load_baseline_params(io.params.as_deref())?;
            if let Some(s) = ctx.seed {
                params.kmeans.seed = s;
            }
            let series = load_series(&io.input)?;
            let result = frangi_kmeans_pipeline(&series, &params.frangi, &params.kmeans)?;
            if result.warnings.empty_vessel_mask || result.warnings.degenerate_clustering {
                log::warn!("baseline warnings: {:?}", result.warnings);
            }
            save_mask(&result.mask, &io.out)?;
            let snapshot = serde_json::json!({"params": params, "warnings": result.warnings});
            ctx.write_meta("baseline frangi-kmeans", &meta_dir(&io.out, false), Some(params.kmeans.seed), &snapshot)
        }
        Command::Baseline(BaselineCommand::UnetKmeans { ckpt, io }) => {
            require_exists(&ckpt)?;
            require_exists(&io.input)?;
            let mut params = load_baseline_params(io.params.as_deref())?;
            if let Some(s) = ctx.seed {
                params.kmeans.seed = s;
            }
            let unet = load_checkpoint(&ckpt)?.model;
            if unet.config().is_temporal() {
                return Err(CaveError::Validation("unet-kmeans needs a U-Net checkpoint".into()));
            }
            let series = load_series(&io.input)?;
            let vessels = binarize(unet.predict(&series)?.view(), 0.5)?.union();
            let result = cascade_kmeans(&vessels, &series, &params.kmeans)?;
            save_mask(&result.mask, &io.out)?;
            let snapshot = serde_json::json!({"params": params, "warnings": result.warnings});
            ctx.write_meta("baseline unet-kmeans", &meta_dir(&io.out, false), Some(params.kmeans.seed), &snapshot)
        }
        Command::Baseline(BaselineCommand::Calibrate {
            manifest,
            params,
            out,
            steps,
        }) => {
            require_exists(&manifest)?;
            let mut p = load_baseline_params(params.as_deref())?;
            let m = Manifest::load(&manifest)?;
            if m.val.is_empty() {
                return Err(CaveError::Validation("manifest has an empty val split".into()));
            }
            let val = m.load_split(&m.val)?;
            let (thr, dice) = calibrate_threshold(&val, &p.frangi, steps)?;
            log::info!("threshold {thr:.3} gives mean validation vessel Dice {dice:.4}");
            p.frangi.threshold = thr;
            if let Some(parent) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                ensure_dir(parent)?;
            }
            std::fs::write(&out, serde_json::to_string_pretty(&p)?).map_err(|e| CaveError::io(&out, e))?;
            let snapshot = serde_json::json!({"params": p, "val_vessel_dice": dice, "steps": steps});
            ctx.write_meta("baseline calibrate", &meta_dir(&out, false), None, &snapshot)
        }
        Command::Eval {
            manifest,
            methods,
            out,
            no_errmaps,
        } => {
            require_exists(&manifest)?;
            let m = Manifest::load(&manifest)?;
            if m.test.is_empty() {
                return Err(CaveError::Validation("manifest has an empty test split".into()));
            }
            let mut runners: Vec<Box<dyn MethodRunner>> = methods.iter().map(|s| parse_method(s)).collect::<Result<_>>()?;
            let mut names: Vec<String> = runners.iter().map(|r| r.name().to_string()).collect();
            names.sort();
            if names.windows(2).any(|w| w[0] == w[1]) {
                return Err(CaveError::Validation("method names must be unique; use label=kind:arg".into()));
            }
            let pairs = m.load_split(&m.test)?;
            let errdir = out.join("errmaps");
            ensure_dir(&out)?;
            if !no_errmaps {
                ensure_dir(&errdir)?;
            }
            let report = evaluate_pairs(&pairs, &mut runners, |method, series, pred, gt| {
                if no_errmaps {
                    return Ok(());
                }
                for (task, tag) in [(ErrorTask::Vessel, "vessel"), (ErrorTask::Artery, "artery"), (ErrorTask::Vein, "vein")] {
                    let img = av_error_map(pred, gt, task)?;
                    let path = errdir.join(format!("{method}_{}_{tag}.png", series.series_id));
                    img.save(&path).map_err(|e| CaveError::image(&path, e))?;
                }
                Ok(())
            })?;
            let report_path = out.join("report.json");
            std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)
                .map_err(|e| CaveError::io(&report_path, e))?;
            let table = report.table();
            let table_path = out.join("table.txt");
            std::fs::write(&table_path, &table).map_err(|e| CaveError::io(&table_path, e))?;
            println!("{table}");
            ctx.write_meta("eval", &out, None, &serde_json::json!({"methods": methods}))
        }
    }
}

/// Parse `argv`, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let args = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli, args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}
