//! Deterministic synthetic plate scans laid out like the MVTec 3D-AD dataset.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::eval::Mask;
use crate::pcd::tiff::save_organized_tiff;
use crate::pcd::OrganizedCloud;

/// Geometry of a plate lying on a table, seen from a sensor at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateSpec {
    pub height: usize,
    pub width: usize,
    /// Lateral spacing between grid samples.
    pub pitch: f64,
    pub table_depth: f64,
    pub plate_thickness: f64,
    /// Plate inset from the grid border, in pixels.
    pub plate_margin: usize,
    /// Per-scan random shift of the plate, in pixels.
    pub jitter_px: usize,
    /// Standard deviation of depth noise.
    pub noise: f64,
    /// Defect amplitude in multiples of `noise`.
    pub defect_depth_factor: f64,
    /// Support radius of the defect bell, in pixels.
    pub defect_radius_px: f64,
}

impl Default for PlateSpec {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            pitch: 0.001,
            table_depth: 0.6,
            plate_thickness: 0.02,
            plate_margin: 14,
            jitter_px: 2,
            noise: 0.0002,
            defect_depth_factor: 5.0,
            defect_radius_px: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefectKind {
    /// Surface pushed away from the sensor.
    Dent,
    /// Surface raised towards the sensor.
    Bump,
}

impl DefectKind {
    pub fn name(self) -> &'static str {
        match self {
            DefectKind::Dent => "dent",
            DefectKind::Bump => "bump",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScan {
    pub cloud: OrganizedCloud,
    /// Pixels where the defect displaces the surface by at least half its amplitude.
    pub mask: Mask,
    pub defect: Option<DefectKind>,
}

/// Renders one scan. The same `seed` always gives the same scan.
pub fn plate_scan(spec: &PlateSpec, defect: Option<DefectKind>, seed: u64) -> SyntheticScan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (spec.height, spec.width);
    let j = spec.jitter_px as i64;
    let dr = rng.gen_range(-j..=j);
    let dc = rng.gen_range(-j..=j);
    let top = (spec.plate_margin as i64 + dr) as usize;
    let left = (spec.plate_margin as i64 + dc) as usize;
    let bottom = h - spec.plate_margin + top - spec.plate_margin;
    let right = w - spec.plate_margin + left - spec.plate_margin;

    let radius = spec.defect_radius_px;
    let keep_out = radius.ceil() as usize + 4;
    let center = defect.map(|_| {
        (
            rng.gen_range((top + keep_out) as f64..(bottom - keep_out) as f64),
            rng.gen_range((left + keep_out) as f64..(right - keep_out) as f64),
        )
    });
    let amplitude = spec.defect_depth_factor * spec.noise;
    let noise = Normal::new(0.0, spec.noise).expect("finite noise");

    let mut points = Vec::with_capacity(h * w);
    let mut mask = Mask::empty(h, w);
    for r in 0..h {
        for c in 0..w {
            let on_plate = (top..bottom).contains(&r) && (left..right).contains(&c);
            let mut z = if on_plate {
                spec.table_depth - spec.plate_thickness
            } else {
                spec.table_depth
            };
            if let (true, Some((cr, cc)), Some(kind)) = (on_plate, center, defect) {
                let d = ((r as f64 - cr).powi(2) + (c as f64 - cc).powi(2)).sqrt();
                if d < radius {
                    let bell = 0.5 * (1.0 + (std::f64::consts::PI * d / radius).cos());
                    z += match kind {
                        DefectKind::Dent => amplitude * bell,
                        DefectKind::Bump => -amplitude * bell,
                    };
                    if bell >= 0.5 {
                        mask.data[r * w + c] = true;
                    }
                }
            }
            z += noise.sample(&mut rng);
            let x = (c as f64 - w as f64 / 2.0) * spec.pitch;
            let y = (r as f64 - h as f64 / 2.0) * spec.pitch;
            points.push([x as f32, y as f32, z as f32]);
        }
    }
    SyntheticScan {
        cloud: OrganizedCloud::from_xyz(h, w, points).expect("grid has h * w points"),
        mask,
        defect,
    }
}

/// Five training scans, two good test scans and three defective ones.
#[derive(Debug, Clone)]
pub struct PlateDataset {
    pub train: Vec<SyntheticScan>,
    pub test: Vec<SyntheticScan>,
}

pub const TRAIN_SCANS: usize = 5;
pub const GOOD_TEST_SCANS: usize = 2;
pub const DEFECT_SEQUENCE: [DefectKind; 3] = [DefectKind::Dent, DefectKind::Bump, DefectKind::Dent];

pub fn plate_dataset(spec: &PlateSpec, seed: u64) -> PlateDataset {
    let mut next = seed.wrapping_mul(1000);
    let mut scan = |d| {
        next += 1;
        plate_scan(spec, d, next)
    };
    let train = (0..TRAIN_SCANS).map(|_| scan(None)).collect();
    let mut test: Vec<SyntheticScan> = (0..GOOD_TEST_SCANS).map(|_| scan(None)).collect();
    test.extend(DEFECT_SEQUENCE.iter().map(|&d| scan(Some(d))));
    PlateDataset { train, test }
}

fn save_mask(mask: &Mask, path: &Path) -> Result<()> {
    let pixels = mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let img = image::GrayImage::from_raw(mask.width as u32, mask.height as u32, pixels).expect("sized buffer");
    img.save(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Writes `<root>/<class>/{train/good,test/<defect>}/xyz/NNN.tiff` plus
/// `test/<defect>/gt/NNN.png` masks. Returns the class directory.
pub fn write_dataset(ds: &PlateDataset, root: &Path, class: &str) -> Result<PathBuf> {
    let class_dir = root.join(class);
    let train_dir = class_dir.join("train/good/xyz");
    create_dir(&train_dir)?;
    for (i, s) in ds.train.iter().enumerate() {
        save_organized_tiff(&s.cloud, train_dir.join(format!("{i:03}.tiff")))?;
    }
    let mut counters = std::collections::BTreeMap::<&str, usize>::new();
    for s in &ds.test {
        let defect = s.defect.map_or("good", DefectKind::name);
        let n = counters.entry(defect).or_default();
        let stem = format!("{:03}", *n);
        *n += 1;
        let dir = class_dir.join("test").join(defect);
        create_dir(&dir.join("xyz"))?;
        save_organized_tiff(&s.cloud, dir.join("xyz").join(format!("{stem}.tiff")))?;
        if s.defect.is_some() {
            create_dir(&dir.join("gt"))?;
            save_mask(&s.mask, &dir.join("gt").join(format!("{stem}.png")))?;
        }
    }
    Ok(class_dir)
}
