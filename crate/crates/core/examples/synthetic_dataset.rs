//! Writes the synthetic plate dataset in the MVTec 3D-AD layout.
//!
//!     cargo run --example synthetic_dataset -- /tmp/plates [seed]

use std::path::PathBuf;

use cpmf::synthetic::{plate_dataset, write_dataset, PlateSpec};

fn main() -> cpmf::Result<()> {
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(args.next().unwrap_or_else(|| "synthetic_plates".into()));
    let seed = args.next().map_or(0, |s| s.parse().expect("seed must be an integer"));
    let ds = plate_dataset(&PlateSpec::default(), seed);
    let class_dir = write_dataset(&ds, &root, "plate")?;
    println!("wrote {} training and {} test scans to {}", ds.train.len(), ds.test.len(), class_dir.display());
    println!("try: cpmf fit {0} bank.bin && cpmf score bank.bin {0} scores && cpmf eval scores {0}", class_dir.display());
    Ok(())
}
