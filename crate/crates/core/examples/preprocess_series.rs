//! Temporal resampling, resize and intensity normalisation.

use cave::data::{preprocess, resample_times, resize_mask, PreprocessConfig};
use cave::synth::{render_series, SynthConfig};
use cave::DsaSeries;

fn main() -> cave::Result<()> {
    // a 20-frame series acquired at 2 fps
    let (raw, mask) = render_series(&SynthConfig {
        size: (96, 96),
        n_frames: 20,
        fps: 2.0,
        seed: 4,
        ..Default::default()
    })?;
    let cfg = PreprocessConfig {
        target_size: (64, 64),
        ..Default::default()
    };
    println!("resample times: {:?}", resample_times(raw.duration(), cfg.target_fps));
    let out: DsaSeries = preprocess(&raw, &cfg)?;
    let (lo, hi) = out.frames.iter().fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    println!(
        "{}x{}x{} @ {} fps -> {}x{}x{} @ {} fps, intensities [{lo}, {hi}]",
        raw.n_frames(),
        raw.height(),
        raw.width(),
        raw.fps,
        out.n_frames(),
        out.height(),
        out.width(),
        out.fps
    );
    let small = resize_mask(&mask, cfg.target_size);
    println!("mask {:?} -> {:?}, overlap {} -> {}", mask.dim(), small.dim(), mask.overlap_count(), small.overlap_count());
    Ok(())
}
