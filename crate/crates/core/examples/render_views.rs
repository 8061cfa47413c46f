//! Renders the default 27-view schedule of a synthetic scan to PNG files and
//! checks that every visible point reprojects onto a covered pixel.
//!
//!     cargo run --example render_views -- /tmp/views

use std::path::PathBuf;

use cpmf::config::PipelineConfig;
use cpmf::pipeline::Extractor;
use cpmf::render::{fit_camera, make_schedule, render_view};
use cpmf::synthetic::{plate_scan, DefectKind, PlateSpec};

fn main() -> cpmf::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "views".into()));
    std::fs::create_dir_all(&out).map_err(|e| cpmf::Error::Io { path: out.clone(), source: e })?;

    let scan = plate_scan(&PlateSpec::default(), Some(DefectKind::Bump), 7);
    let cfg = PipelineConfig::default();
    let extractor = Extractor::new(&cfg)?;
    let prepared = extractor.prepare(&extractor.foreground(&scan.cloud)?)?;
    let cam = fit_camera(&prepared.cloud, &cfg.camera_params())?;
    let schedule = make_schedule(cfg.n_views)?;

    for (k, rotation) in schedule.rotations.iter().enumerate() {
        let view = render_view(&prepared.cloud, &cam, rotation, k, cfg.render.splat_px)?;
        let visible = view.visible.iter().filter(|&&v| v).count();
        let reprojected = (0..view.pix.len())
            .filter(|&i| view.visible[i])
            .filter(|&i| view.covered(view.pix[i][1].round() as usize, view.pix[i][0].round() as usize))
            .count();
        let a = schedule.angles[k];
        println!(
            "view {k:2} angles ({:+.3}, {:+.3}, {:+.3}): {visible} visible, {reprojected} on covered pixels",
            a[0], a[1], a[2]
        );
        view.image.save_png(out.join(format!("view_{k:02}.png")))?;
    }
    println!("wrote {} images to {}", schedule.len(), out.display());
    Ok(())
}
