//! FPFH on a dense plane and a sphere: the plane's histograms pile up in the
//! zero bin of each angle, the sphere's spread out.

use cpmf::feat3d::{estimate_normals, fpfh, FpfhWeighting, FPFH_BINS};
use cpmf::pcd::{PointCloud, Vec3};

fn zero_bin_mass(row: &[f64]) -> [f64; 3] {
    // theta spans [-pi, pi], alpha and phi span [-1, 1]; zero falls in the middle bin.
    let mid = FPFH_BINS / 2;
    [0, 1, 2].map(|s| {
        let sub = &row[s * FPFH_BINS..(s + 1) * FPFH_BINS];
        sub[mid] / sub.iter().sum::<f64>()
    })
}

fn describe(name: &str, pc: PointCloud, radius: f64) -> cpmf::Result<()> {
    let with_normals = estimate_normals(&pc, 20, Vec3::new(0.0, 0.0, 10.0))?.cloud;
    let f = fpfh(&with_normals, radius, FpfhWeighting::InverseDistance)?;
    let center = (0..pc.len())
        .min_by(|&a, &b| pc.positions[a].norm().total_cmp(&pc.positions[b].norm()))
        .unwrap();
    let row = f.features.row(center);
    let m = zero_bin_mass(row);
    println!("{name}: {} points, isolated {}", pc.len(), f.isolated.len());
    println!("  zero-bin mass (theta, alpha, phi) = ({:.3}, {:.3}, {:.3})", m[0], m[1], m[2]);
    println!("  histogram: {:?}", row.iter().map(|v| v.round() as i64).collect::<Vec<_>>());
    Ok(())
}

fn main() -> cpmf::Result<()> {
    let plane: Vec<Vec3> = (0..41 * 41)
        .map(|i| Vec3::new((i % 41) as f64 * 0.05 - 1.0, (i / 41) as f64 * 0.05 - 1.0, 0.0))
        .collect();
    describe("plane", PointCloud::from_positions(plane), 0.2)?;

    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let n = 3000;
    let sphere: Vec<Vec3> = (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            Vec3::new(r * t.cos(), r * t.sin(), z)
        })
        .collect();
    describe("sphere", PointCloud::from_positions(sphere), 0.25)
}
