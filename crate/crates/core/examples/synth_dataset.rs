//! Render one synthetic phantom, look at its timing, then write a small
//! dataset with a split manifest.
//!
//!     cargo run --example synth_dataset -- /tmp/cave-data

use cave::synth::{generate_dataset, render_phantom, DatasetConfig, SynthConfig};

fn main() -> cave::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synth-data".into());

    let cfg = SynthConfig {
        size: (64, 64),
        seed: 7,
        ..Default::default()
    };
    let p = render_phantom(&cfg)?;
    let count = |m: &ndarray::Array2<bool>| m.iter().filter(|&&b| b).count();
    println!(
        "{}: {} frames, {} artery px, {} vein px, {} overlap px, {} artifact px",
        p.series.series_id,
        p.series.n_frames(),
        count(&p.mask.artery),
        count(&p.mask.vein),
        p.mask.overlap_count(),
        count(&p.artifacts)
    );
    // roots opacify first; veins a `vein_delay` later
    let ttp = |root: (usize, usize)| p.series.extract_tic(root.0, root.1).map(|t| t.time_to_peak());
    println!("time-to-peak at artery root {}, vein root {}", ttp(p.artery.root)?, ttp(p.vein.root)?);

    let ds = DatasetConfig {
        template: SynthConfig {
            size: (64, 64),
            ..Default::default()
        },
        n_series: 10,
        split_ratios: (0.5, 0.2, 0.3),
        seed: 1,
    };
    let manifest = generate_dataset(&ds, &out)?;
    println!(
        "wrote {} train / {} val / {} test series to {out}",
        manifest.train.len(),
        manifest.val.len(),
        manifest.test.len()
    );
    Ok(())
}
