//! Applies each distortion family to a clip and reports how far it moved.

use finequest::clip::ClipTensor;
use finequest::distortion::{
    distort, temporal_index_map, DistortionSpec, SpatialVariant, TemporalVariant,
};

fn mean_abs_diff(a: &ClipTensor, b: &ClipTensor) -> f64 {
    let n = a.data().len() as f64;
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / n
}

fn run() -> anyhow::Result<()> {
    let clip = ClipTensor::from_fn(16, 16, 16, 3, 25.0, |t, y, x, c| {
        0.5 + 0.4 * ((t as f32 * 0.4 + y as f32 * 0.2 + x as f32 * 0.1 + c as f32).sin())
    })?;
    let seed = 42;
    let specs = [
        ("gaussian noise", DistortionSpec::spatial(0.1, seed)),
        (
            "cutmix",
            DistortionSpec { spatial_variant: SpatialVariant::CutMix, ..DistortionSpec::spatial(0.3, seed) },
        ),
        ("temporal warp", DistortionSpec::temporal(0.9, seed)),
        (
            "local shuffle",
            DistortionSpec { temporal_variant: TemporalVariant::LocalShuffle, ..DistortionSpec::temporal(0.3, seed) },
        ),
        ("spatio-temporal", DistortionSpec::spatiotemporal(0.1, 0.9, seed)),
    ];
    for (name, spec) in specs {
        let out = distort(&clip, &spec)?;
        println!("{name:<16} mean |delta| = {:.4}", mean_abs_diff(&clip, &out));
    }
    println!("warp map: {:?}", temporal_index_map(16, TemporalVariant::Warp, 0.9, seed));
    Ok(())
}

fn main() -> anyhow::Result<()> {
    run()
}
