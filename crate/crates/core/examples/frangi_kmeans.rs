//! Classical baseline: Frangi vesselness on the MinIP, then K-means on the
//! time-intensity curves of the detected pixels.

use cave::baseline::{frangi_kmeans_pipeline, frangi_vesselness, kmeans_tic, BaselineParams, KmeansParams};
use cave::eval::av_scores;
use cave::synth::{render_series, SynthConfig};
use cave::Tic;

fn main() -> cave::Result<()> {
    // two hand-made curves: the early one is called artery
    let tic = |v: [f32; 8]| Tic {
        values: ndarray::Array1::from(v.to_vec()),
        location: (0, 0),
    };
    let early = tic([0.0, 40.0, 90.0, 40.0, 10.0, 0.0, 0.0, 0.0]);
    let late = tic([0.0, 0.0, 0.0, 10.0, 50.0, 80.0, 40.0, 5.0]);
    let c = kmeans_tic(&[early, late], &KmeansParams::default())?;
    println!(
        "early curve -> {:?}, late curve -> {:?}; artery cluster {} peaks at frame {}",
        c.labels[0], c.labels[1], c.artery_cluster, c.centroid_ttp[c.artery_cluster]
    );

    let params = BaselineParams::default();
    for artifact_level in [0.0, 0.5] {
        let (series, gt) = render_series(&SynthConfig {
            artifact_level,
            seed: 3,
            ..Default::default()
        })?;
        let v = frangi_vesselness(&series.min_intensity_projection(), &params.frangi)?;
        let out = frangi_kmeans_pipeline(&series, &params.frangi, &params.kmeans)?;
        let s = av_scores(&out.mask, &gt)?;
        println!(
            "artifact {artifact_level}: max vesselness {:.2}, vessel Dice {:.3}, A-Dice {:.3}, V-Dice {:.3}, warnings {:?}",
            v.iter().cloned().fold(0.0f32, f32::max),
            s.vessel_dice,
            s.a_dice,
            s.v_dice,
            out.warnings
        );
    }
    Ok(())
}
