//! Runs an ONNX backbone on a rendered view and reports the feature map.
//!
//!     cargo run --example onnx_backbone -- resnet18_layers123.onnx 448
//!
//! The model must take one `1x3x224x224` float input and return feature maps
//! of shape `1xCxhxw` whose channel counts add up to the given dimension.

use cpmf::feat2d::{extract_feature_map, FeatureBackend, OnnxBackend};
use cpmf::pipeline::Extractor;
use cpmf::render::{fit_camera, make_schedule, render_view};
use cpmf::synthetic::{plate_scan, PlateSpec};
use cpmf::config::PipelineConfig;

fn main() -> cpmf::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(model) = args.next() else {
        eprintln!("usage: onnx_backbone <model.onnx> [dim]");
        std::process::exit(2);
    };
    let dim = args.next().map_or(448, |d| d.parse().expect("dim must be an integer"));
    let backend = OnnxBackend::load(&model, dim, 224, 224)?;

    let cfg = PipelineConfig::default();
    let extractor = Extractor::new(&PipelineConfig {
        feature_mode: cpmf::fusion::FeatureMode::ThreeD,
        ..cfg.clone()
    })?;
    let scan = plate_scan(&PlateSpec::default(), None, 0);
    let prepared = extractor.prepare(&extractor.foreground(&scan.cloud)?)?;
    let cam = fit_camera(&prepared.cloud, &cfg.camera_params())?;
    let view = render_view(&prepared.cloud, &cam, &make_schedule(1)?.rotations[0], 0, cfg.render.splat_px)?;

    let started = std::time::Instant::now();
    let map = extract_feature_map(&backend, &view.image)?;
    let centre = map.pixel(map.height() / 2, map.width() / 2);
    println!(
        "{model}: {} channels at {}x{} in {:.1?}; centre pixel norm {:.4}",
        backend.dim(),
        map.height(),
        map.width(),
        started.elapsed(),
        centre.iter().map(|v| v * v).sum::<f64>().sqrt()
    );
    Ok(())
}
