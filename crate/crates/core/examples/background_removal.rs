//! Segments a synthetic tabletop scan: fit the table plane on the border
//! strip, drop it, keep the largest density cluster.

use cpmf::preprocess::{boundary_strip, ransac_plane, remove_background, BackgroundParams};
use cpmf::synthetic::{plate_scan, PlateSpec};

fn main() -> cpmf::Result<()> {
    let spec = PlateSpec::default();
    let scan = plate_scan(&spec, None, 1);
    let oc = &scan.cloud;
    let params = BackgroundParams::default();

    let strip = boundary_strip(oc, params.strip_width)?;
    let plane = ransac_plane(&strip, params.ransac_threshold, params.ransac_iterations, params.seed)?;
    let n = plane.normal;
    println!(
        "plane: normal ({:+.4}, {:+.4}, {:+.4}), offset {:.4}, from {} strip points",
        n.x,
        n.y,
        n.z,
        plane.offset,
        strip.len()
    );

    let fg = remove_background(oc, &plane, params.db_eps, params.db_min_pts, params.retention)?;
    let (lo, hi) = fg.bounds().expect("foreground is non-empty");
    println!("valid pixels: {}", oc.valid_count());
    println!("foreground:   {} points", fg.len());
    println!(
        "foreground z range [{:.4}, {:.4}] (table at {:.4})",
        lo.z, hi.z, spec.table_depth
    );
    Ok(())
}
