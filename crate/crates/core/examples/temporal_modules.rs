//! The three temporal aggregators next to the MinIP U-Net: parameter
//! counts, output shapes, and what happens when the frame order is reversed.

use ndarray::Axis;

use cave::model::{cave_forward, unet_forward, CaveConfig, SegNet, TemporalModule};
use cave::synth::{render_series, SynthConfig};

fn main() -> cave::Result<()> {
    let (series, _) = render_series(&SynthConfig {
        size: (64, 64),
        seed: 2,
        ..Default::default()
    })?;
    let mut reversed = series.clone();
    reversed.frames.invert_axis(Axis(0));

    for module in TemporalModule::TEMPORAL {
        let cfg = CaveConfig {
            base_channels: 8,
            depth: 3,
            temporal_module: module,
            ..Default::default()
        };
        let model = SegNet::new(cfg, 0)?;
        let a = cave_forward(&model, &series)?;
        let b = cave_forward(&model, &reversed)?;
        let diff = a.iter().zip(b.iter()).fold(0.0f32, |m, (x, y)| m.max((x - y).abs()));
        println!("{:<22} {:>8} params, output {:?}, reversal L-inf {diff:.3e}", module.as_str(), model.num_params(), a.dim());
    }

    let unet = SegNet::new(CaveConfig::unet(8, 3), 0)?;
    let a = unet_forward(&unet, &series.min_intensity_projection())?;
    let b = unet_forward(&unet, &reversed.min_intensity_projection())?;
    println!("{:<22} {:>8} params, reversal changes output: {}", "NONE (U-Net on MinIP)", unet.num_params(), a != b);

    // the full-size configuration
    println!("default CAVE: {} params", SegNet::new(CaveConfig::default(), 0)?.num_params());
    Ok(())
}
