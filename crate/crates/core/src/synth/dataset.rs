//! Seeded synthetic datasets on disk with a patient-level split manifest.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{render_series, seed_for, SynthConfig};
use crate::data::{load_mask, load_series, save_mask, save_series, AvMask, DsaSeries};
use crate::error::{CaveError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
/// Ground-truth mask stored inside each series directory.
pub const MASK_FILE: &str = "mask.png";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub template: SynthConfig,
    pub n_series: usize,
    /// (train, val, test) fractions; must sum to 1.
    pub split_ratios: (f64, f64, f64),
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            template: SynthConfig::default(),
            n_series: 10,
            split_ratios: (0.5, 0.2, 0.3),
            seed: 0,
        }
    }
}

/// Series directories per split. Paths are stored relative to the manifest.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub train: Vec<PathBuf>,
    pub val: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
    #[serde(skip)]
    root: PathBuf,
}

impl Manifest {
    pub fn new(train: Vec<PathBuf>, val: Vec<PathBuf>, test: Vec<PathBuf>, root: impl Into<PathBuf>) -> Self {
        Manifest {
            train,
            val,
            test,
            root: root.into(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CaveError::io(path, e))?;
        let mut m: Manifest = serde_json::from_str(&text)?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| CaveError::io(path, e))
    }

    /// Absolute (or cwd-relative) location of an entry.
    pub fn resolve(&self, entry: &Path) -> PathBuf {
        if entry.is_absolute() {
            entry.to_path_buf()
        } else {
            self.root.join(entry)
        }
    }

    pub fn load_split(&self, split: &[PathBuf]) -> Result<Vec<(DsaSeries, AvMask)>> {
        split
            .iter()
            .map(|p| {
                let dir = self.resolve(p);
                Ok((load_series(&dir)?, load_mask(dir.join(MASK_FILE))?))
            })
            .collect()
    }
}

/// Split `n` items by largest remainder so the counts always sum to `n`.
pub(crate) fn split_counts(n: usize, ratios: (f64, f64, f64)) -> [usize; 3] {
    let r = [ratios.0, ratios.1, ratios.2];
    let exact: Vec<f64> = r.iter().map(|x| x * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - counts[a] as f64;
        let fb = exact[b] - counts[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut left = n - counts.iter().sum::<usize>().min(n);
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    [counts[0], counts[1], counts[2]]
}

fn jitter(template: &SynthConfig, seed: u64) -> SynthConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = template.clone();
    cfg.seed = seed;
    let wiggle = |rng: &mut ChaCha8Rng, v: usize| (v as i64 + rng.random_range(-1..=1)).max(1) as usize;
    cfg.n_artery_branches = wiggle(&mut rng, template.n_artery_branches);
    cfg.n_vein_branches = wiggle(&mut rng, template.n_vein_branches);
    cfg.artery_arrival *= rng.random_range(0.8..1.2);
    cfg.vein_delay *= rng.random_range(0.85..1.15);
    cfg.bolus_width *= rng.random_range(0.85..1.15);
    cfg.n_frames = (template.n_frames as i64 + rng.random_range(-1..=1)).max(2) as usize;
    cfg
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.split_ratios;
        if [a, b, c].iter().any(|r| *r < 0.0) || ((a + b + c) - 1.0).abs() > 1e-6 {
            return Err(CaveError::Config(format!(
                "split ratios {:?} must be >= 0 and sum to 1",
                self.split_ratios
            )));
        }
        self.template.validate()
    }
}

/// The `i`-th series of the dataset (one synthetic patient each).
pub fn dataset_series(cfg: &DatasetConfig, i: usize) -> Result<(DsaSeries, AvMask)> {
    let series_cfg = jitter(&cfg.template, seed_for(cfg.seed, 1000 + i as u64));
    let (series, mask) = render_series(&series_cfg)?;
    Ok((series.with_ids(format!("series_{i:04}"), format!("patient_{i:04}")), mask))
}

/// Series indices of the (train, val, test) splits. Patients are shuffled
/// with the dataset seed, so no patient straddles two splits.
pub fn split_indices(cfg: &DatasetConfig) -> [Vec<usize>; 3] {
    let mut order: Vec<usize> = (0..cfg.n_series).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed_for(cfg.seed, 7)));
    let [n_train, n_val, _] = split_counts(cfg.n_series, cfg.split_ratios);
    let mut splits: [Vec<usize>; 3] = Default::default();
    for (rank, &i) in order.iter().enumerate() {
        let k = if rank < n_train {
            0
        } else if rank < n_train + n_val {
            1
        } else {
            2
        };
        splits[k].push(i);
    }
    splits.iter_mut().for_each(|s| s.sort_unstable());
    splits
}

/// Render the whole dataset in memory, split as on disk.
pub fn render_dataset(cfg: &DatasetConfig) -> Result<[Vec<(DsaSeries, AvMask)>; 3]> {
    cfg.validate()?;
    let [a, b, c] = split_indices(cfg);
    let render = |idx: Vec<usize>| idx.into_iter().map(|i| dataset_series(cfg, i)).collect::<Result<Vec<_>>>();
    Ok([render(a)?, render(b)?, render(c)?])
}

/// Render the dataset into `out_dir` (one directory per series, holding its
/// frames and `mask.png`) and write `manifest.json`.
pub fn generate_dataset(cfg: &DatasetConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| CaveError::io(out_dir, e))?;
    for i in 0..cfg.n_series {
        let (series, mask) = dataset_series(cfg, i)?;
        let dir = out_dir.join(&series.series_id);
        save_series(&series, &dir)?;
        save_mask(&mask, dir.join(MASK_FILE))?;
    }
    let [train, val, test] =
        split_indices(cfg).map(|idx| idx.into_iter().map(|i| PathBuf::from(format!("series_{i:04}"))).collect());
    let manifest = Manifest::new(train, val, test, out_dir);
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
