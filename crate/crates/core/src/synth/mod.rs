//! Synthetic DSA phantoms with known artery/vein ground truth.
//!
//! Each series is rendered from two random vessel trees. Contrast at a
//! vessel pixel follows a gamma-variate bolus whose arrival is delayed by the
//! path length from the tree root; veins receive the bolus `vein_delay`
//! seconds after the arteries. Subtraction artifacts are static curved
//! strokes (present before contrast arrives) plus per-frame noise.

mod dataset;
mod tree;

pub use dataset::{dataset_series, generate_dataset, render_dataset, split_indices, DatasetConfig, Manifest, MANIFEST_FILE, MASK_FILE};
pub use tree::{generate_tree, CenterPoint, VesselKind, VesselTree};

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{AvMask, DsaSeries, View};
use crate::error::{CaveError, Result};

/// Shape parameter of the gamma-variate bolus curve.
pub const GAMMA_SHAPE: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// (height, width) in pixels.
    pub size: (usize, usize),
    pub n_frames: usize,
    pub fps: f64,
    pub n_artery_branches: usize,
    pub n_vein_branches: usize,
    /// Bolus arrival at the arterial root, seconds.
    pub artery_arrival: f64,
    /// Extra delay before the venous root opacifies, seconds.
    pub vein_delay: f64,
    /// Time from bolus arrival to peak concentration, seconds.
    pub bolus_width: f64,
    /// Contrast propagation speed along the trees, pixels per second.
    pub flow_velocity: f64,
    /// Strength of static strokes and frame noise, in [0, 1].
    pub artifact_level: f64,
    /// How far the venous tree reaches into the arterial territory, in [0, 1].
    pub overlap_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            size: (128, 128),
            n_frames: 10,
            fps: 1.0,
            n_artery_branches: 7,
            n_vein_branches: 5,
            artery_arrival: 1.0,
            vein_delay: 4.0,
            bolus_width: 2.0,
            flow_velocity: 100.0,
            artifact_level: 0.5,
            overlap_fraction: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CaveError::Config(m.to_string()));
        if self.size.0 < 8 || self.size.1 < 8 {
            return bad("size must be at least 8x8");
        }
        if self.n_frames < 2 {
            return bad("n_frames must be >= 2");
        }
        if !(self.fps > 0.0) {
            return bad("fps must be > 0");
        }
        if self.n_artery_branches < 1 || self.n_vein_branches < 1 {
            return bad("branch counts must be >= 1");
        }
        if !(self.vein_delay > 0.0) {
            return bad("vein_delay must be > 0");
        }
        if !(self.bolus_width > 0.0 && self.flow_velocity > 0.0) {
            return bad("bolus_width and flow_velocity must be > 0");
        }
        if !(0.0..=1.0).contains(&self.artifact_level) || !(0.0..=1.0).contains(&self.overlap_fraction) {
            return bad("artifact_level and overlap_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        (self.n_frames - 1) as f64 / self.fps
    }
}

/// Gamma-variate bolus curve normalised to a peak of 1 at `tau = time_to_peak`;
/// zero before arrival (`tau <= 0`).
pub fn gamma_variate(tau: f64, time_to_peak: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let x = tau / time_to_peak;
    (x.powf(GAMMA_SHAPE) * (GAMMA_SHAPE * (1.0 - x)).exp()).min(1.0)
}

/// Everything produced while rendering one series.
#[derive(Clone, Debug)]
pub struct Phantom {
    pub series: DsaSeries,
    pub mask: AvMask,
    pub artery: VesselTree,
    pub vein: VesselTree,
    /// Static artifact strokes.
    pub artifacts: Array2<bool>,
    /// Bolus arrival time per pixel for arteries / veins (+inf outside).
    pub artery_arrival: Array2<f32>,
    pub vein_arrival: Array2<f32>,
    /// Peak opacification (fraction of full scale) per tree.
    pub artery_amplitude: f64,
    pub vein_amplitude: f64,
}

fn seed_for(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Static strokes shaped like vessel segments: wandering tubes with vessel
/// calibre and vessel-like contrast, so a single projection cannot tell
/// them apart from opacified vessels. Only their timing (dark before the
/// bolus arrives) gives them away.
fn draw_artifacts(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> (Array2<bool>, Array2<f32>) {
    let (h, w) = cfg.size;
    let mut strokes = Array2::from_elem((h, w), false);
    let mut darkening = Array2::<f32>::zeros((h, w));
    if cfg.artifact_level <= 0.0 {
        return (strokes, darkening);
    }
    let n = (8.0 * cfg.artifact_level).ceil() as usize;
    let strength = (2.0 * cfg.artifact_level).min(1.0);
    let (hf, wf) = (h as f64, w as f64);
    let scale = (hf.min(wf) / 128.0).sqrt();
    for _ in 0..n {
        let (mut r, mut c) = (rng.random_range(0.1..0.9) * hf, rng.random_range(0.1..0.9) * wf);
        let mut theta = rng.random_range(0.0..std::f64::consts::TAU);
        let length = rng.random_range(0.25..0.6) * hf.min(wf);
        let drift = rng.random_range(-0.03..0.03);
        let width: f64 = rng.random_range(0.9..2.4) * scale;
        let contrast = (255.0 * rng.random_range(0.5..0.8) * strength) as f32;
        let steps = (length / 0.5).ceil() as usize;
        for _ in 0..=steps {
            let reach = width.ceil() as isize + 1;
            let (ir, ic) = (r.round() as isize, c.round() as isize);
            for i in (ir - reach).max(0)..=(ir + reach).min(h as isize - 1) {
                for j in (ic - reach).max(0)..=(ic + reach).min(w as isize - 1) {
                    let (dr, dc) = (i as f64 - r, j as f64 - c);
                    if (dr * dr + dc * dc).sqrt() <= width {
                        let idx = [i as usize, j as usize];
                        strokes[idx] = true;
                        darkening[idx] = darkening[idx].max(contrast);
                    }
                }
            }
            theta += drift + rng.random_range(-0.05..0.05);
            r += 0.5 * theta.sin();
            c += 0.5 * theta.cos();
            if r < 0.0 || c < 0.0 || r > hf - 1.0 || c > wf - 1.0 {
                break;
            }
        }
    }
    (strokes, darkening)
}

/// Render one phantom with its trees and timing maps.
pub fn render_phantom(cfg: &SynthConfig) -> Result<Phantom> {
    cfg.validate()?;
    let (h, w) = cfg.size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(cfg.seed, 0));
    let artery = generate_tree(VesselKind::Artery, cfg, seed_for(cfg.seed, 1));
    let vein = generate_tree(VesselKind::Vein, cfg, seed_for(cfg.seed, 2));
    let artery_amplitude = rng.random_range(0.6..0.8);
    let vein_amplitude = rng.random_range(0.55..0.75);
    let (artifacts, darkening) = draw_artifacts(cfg, &mut rng);

    let arrival = |tree: &VesselTree, base: f64| tree.path_length.mapv(|pl| (base + pl as f64 / cfg.flow_velocity) as f32);
    let artery_arrival = arrival(&artery, cfg.artery_arrival);
    let vein_arrival = arrival(&vein, cfg.artery_arrival + cfg.vein_delay);

    let noise_sd = 12.0 * cfg.artifact_level;
    let noise = Normal::new(0.0, noise_sd.max(f64::MIN_POSITIVE)).expect("finite sd");
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed_for(cfg.seed, 3));
    let mut frames = Array3::<f32>::zeros((cfg.n_frames, h, w));
    for t in 0..cfg.n_frames {
        let time = t as f64 / cfg.fps;
        for i in 0..h {
            for j in 0..w {
                let mut c = 0.0;
                if artery.mask[[i, j]] {
                    c += artery_amplitude * gamma_variate(time - artery_arrival[[i, j]] as f64, cfg.bolus_width);
                }
                if vein.mask[[i, j]] {
                    c += vein_amplitude * gamma_variate(time - vein_arrival[[i, j]] as f64, cfg.bolus_width);
                }
                let mut v = 255.0 * (1.0 - c) - darkening[[i, j]] as f64;
                if noise_sd > 0.0 {
                    v += noise.sample(&mut noise_rng);
                }
                frames[[t, i, j]] = v.clamp(0.0, 255.0) as f32;
            }
        }
    }

    let series = DsaSeries {
        frames,
        fps: cfg.fps,
        view: View::Unknown,
        series_id: format!("synth_{:016x}", cfg.seed),
        patient_id: format!("patient_{:016x}", cfg.seed),
    };
    let mask = AvMask {
        artery: artery.mask.clone(),
        vein: vein.mask.clone(),
    };
    Ok(Phantom {
        series,
        mask,
        artery,
        vein,
        artifacts,
        artery_arrival,
        vein_arrival,
        artery_amplitude,
        vein_amplitude,
    })
}

/// Render a synthetic series and its ground-truth mask.
pub fn render_series(cfg: &SynthConfig) -> Result<(DsaSeries, AvMask)> {
    let p = render_phantom(cfg)?;
    Ok((p.series, p.mask))
}
