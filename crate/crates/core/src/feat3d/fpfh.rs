use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Modality};
use crate::pcd::{NeighborIndex, PointCloud, Vec3};

/// Bins per angular feature.
pub const FPFH_BINS: usize = 11;
/// Three concatenated sub-histograms: theta, alpha, phi.
pub const FPFH_DIM: usize = 3 * FPFH_BINS;

/// How neighbor SPFH histograms are folded into a point's FPFH.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpfhWeighting {
    /// `SPFH(p) + 1/k * sum_i SPFH(p_i) / |p - p_i|`.
    #[default]
    InverseDistance,
    /// Neighbor sum weighted by `1 / |p - p_i|^2`, each sub-histogram rescaled
    /// to 100, then `SPFH(p)` added (the Open3D formulation).
    NormalizedInverseSquare,
}

/// Descriptors plus the points that had no neighbor inside the radius
/// (their rows are all zero).
#[derive(Debug, Clone)]
pub struct Fpfh {
    pub features: FeatureMatrix,
    pub isolated: Vec<usize>,
}

/// Darboux-frame pair features `(theta, alpha, phi, distance)` between two
/// oriented points.
///
/// The source of the frame is whichever point's normal makes the smaller
/// angle with the connecting line; `phi` is measured from the source.
pub fn pair_features(p1: &Vec3, n1: &Vec3, p2: &Vec3, n2: &Vec3) -> [f64; 4] {
    let mut dp = p2 - p1;
    let dist = dp.norm();
    if dist == 0.0 {
        return [0.0; 4];
    }
    let a1 = n1.dot(&dp) / dist;
    let a2 = n2.dot(&dp) / dist;
    let (ns, nt, phi) = if a1.abs().acos() > a2.abs().acos() {
        dp = -dp;
        (n2, n1, -a2)
    } else {
        (n1, n2, a1)
    };
    let v = dp.cross(ns);
    let v_norm = v.norm();
    if v_norm == 0.0 {
        return [0.0, 0.0, 0.0, dist];
    }
    let v = v / v_norm;
    let w = ns.cross(&v);
    let alpha = v.dot(nt);
    let theta = w.dot(nt).atan2(ns.dot(nt));
    [theta, alpha, phi, dist]
}

fn bin(value: f64, lo: f64, hi: f64) -> usize {
    let b = (FPFH_BINS as f64 * (value - lo) / (hi - lo)).floor();
    b.clamp(0.0, (FPFH_BINS - 1) as f64) as usize
}

/// Simplified point feature histogram of one point against its neighbors.
/// Each sub-histogram sums to 100 unless `neighbors` is empty.
pub fn spfh(positions: &[Vec3], normals: &[Vec3], i: usize, neighbors: &[usize]) -> [f64; FPFH_DIM] {
    let mut h = [0.0; FPFH_DIM];
    if neighbors.is_empty() {
        return h;
    }
    let inc = 100.0 / neighbors.len() as f64;
    for &j in neighbors {
        let [theta, alpha, phi, _] = pair_features(&positions[i], &normals[i], &positions[j], &normals[j]);
        h[bin(theta, -PI, PI)] += inc;
        h[FPFH_BINS + bin(alpha, -1.0, 1.0)] += inc;
        h[2 * FPFH_BINS + bin(phi, -1.0, 1.0)] += inc;
    }
    h
}

/// Fast Point Feature Histograms over radius neighborhoods (33 values per point).
pub fn fpfh(pc: &PointCloud, radius: f64, weighting: FpfhWeighting) -> Result<Fpfh> {
    let Some(normals) = pc.normals.as_ref() else {
        return Err(Error::InvalidArgument("fpfh requires normals".into()));
    };
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("fpfh radius must be positive, got {radius}")));
    }
    let pos = &pc.positions;
    let index = NeighborIndex::new(pc);
    // (index, distance) of every other point inside the radius; coincident points are skipped.
    let neighborhoods: Vec<Vec<(usize, f64)>> = pos
        .par_iter()
        .map(|p| {
            index
                .radius(p, radius)
                .map(|v| {
                    v.into_iter()
                        .filter(|&(_, d2)| d2 > 0.0)
                        .map(|(j, d2)| (j, d2.sqrt()))
                        .collect()
                })
                .unwrap_or_default()
        })
        .collect();

    let spfhs: Vec<[f64; FPFH_DIM]> = (0..pos.len())
        .into_par_iter()
        .map(|i| {
            let nb: Vec<usize> = neighborhoods[i].iter().map(|&(j, _)| j).collect();
            spfh(pos, normals, i, &nb)
        })
        .collect();

    let rows: Vec<[f64; FPFH_DIM]> = (0..pos.len())
        .into_par_iter()
        .map(|i| fold_neighbors(&spfhs, i, &neighborhoods[i], weighting))
        .collect();

    let isolated = (0..pos.len()).filter(|&i| neighborhoods[i].is_empty()).collect();
    let data = rows.into_iter().flatten().collect();
    Ok(Fpfh {
        features: FeatureMatrix::new(pos.len(), FPFH_DIM, data, Modality::ThreeD)?,
        isolated,
    })
}

fn fold_neighbors(
    spfhs: &[[f64; FPFH_DIM]],
    i: usize,
    nbrs: &[(usize, f64)],
    weighting: FpfhWeighting,
) -> [f64; FPFH_DIM] {
    let mut out = [0.0; FPFH_DIM];
    if nbrs.is_empty() {
        return out;
    }
    match weighting {
        FpfhWeighting::InverseDistance => {
            let k = nbrs.len() as f64;
            for &(j, d) in nbrs {
                let w = 1.0 / (k * d);
                for (o, s) in out.iter_mut().zip(&spfhs[j]) {
                    *o += w * s;
                }
            }
        }
        FpfhWeighting::NormalizedInverseSquare => {
            let mut sums = [0.0; 3];
            for &(j, d) in nbrs {
                let w = 1.0 / (d * d);
                for (b, (o, s)) in out.iter_mut().zip(&spfhs[j]).enumerate() {
                    let v = w * s;
                    *o += v;
                    sums[b / FPFH_BINS] += v;
                }
            }
            for (b, o) in out.iter_mut().enumerate() {
                let s = sums[b / FPFH_BINS];
                if s != 0.0 {
                    *o *= 100.0 / s;
                }
            }
        }
    }
    for (o, s) in out.iter_mut().zip(&spfhs[i]) {
        *o += s;
    }
    out
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::feat3d::estimate_normals;
    use crate::pcd::{rotate, rotation_from_angles};

    fn flat_plane(n: usize, spacing: f64) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                pts.push(Vec3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
            }
        }
        let normals = vec![Vec3::z(); pts.len()];
        PointCloud::from_positions(pts).with_normals(normals).unwrap()
    }

    #[test]
    fn coplanar_pairs_have_zero_angles() {
        let f = pair_features(&Vec3::zeros(), &Vec3::z(), &Vec3::new(0.3, 0.1, 0.0), &Vec3::z());
        assert_eq!(&f[..3], &[0.0, 0.0, 0.0]);
        assert!((f[3] - 0.1f64.hypot(0.3)).abs() < 1e-15);
    }

    #[test]
    fn zero_bin_holds_plane_mass() {
        let pc = flat_plane(20, 0.01);
        let out = fpfh(&pc, 0.025, FpfhWeighting::InverseDistance).unwrap();
        assert_eq!(out.features.dim(), 33);
        let zero_bins = [bin(0.0, -PI, PI), FPFH_BINS + bin(0.0, -1.0, 1.0), 2 * FPFH_BINS + bin(0.0, -1.0, 1.0)];
        assert_eq!(zero_bins, [5, 16, 27]);
        for row in out.features.iter_rows() {
            for (s, &zb) in zero_bins.iter().enumerate() {
                let sub = &row[s * FPFH_BINS..(s + 1) * FPFH_BINS];
                let total: f64 = sub.iter().sum();
                assert!(sub[zb - s * FPFH_BINS] >= 0.99 * total);
            }
        }
    }

    #[test]
    fn spfh_sub_histograms_sum_to_hundred() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vec3> = (0..200).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let pc = estimate_normals(&PointCloud::from_positions(pts), 8, Vec3::new(0.0, 0.0, 5.0)).unwrap().cloud;
        let normals = pc.normals.as_ref().unwrap();
        let nb: Vec<usize> = (1..20).collect();
        let h = spfh(&pc.positions, normals, 0, &nb);
        for s in 0..3 {
            let sum: f64 = h[s * FPFH_BINS..(s + 1) * FPFH_BINS].iter().sum();
            assert!((sum - 100.0).abs() < 1e-6);
        }
    }

    #[test]
    fn isolated_point_gets_zero_row() {
        let mut pc = flat_plane(3, 0.01);
        pc.positions.push(Vec3::new(5.0, 5.0, 5.0));
        pc.normals.as_mut().unwrap().push(Vec3::z());
        let out = fpfh(&pc, 0.015, FpfhWeighting::InverseDistance).unwrap();
        assert_eq!(out.isolated, vec![9]);
        assert!(out.features.row(9).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_normals_rejected() {
        let pc = PointCloud::from_positions(vec![Vec3::zeros()]);
        assert!(fpfh(&pc, 1.0, FpfhWeighting::InverseDistance).is_err());
    }

    #[test]
    fn both_weightings_are_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<Vec3> = (0..400)
            .map(|_| {
                let (x, y): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                Vec3::new(x, y, 0.3 * (2.0 * x).sin() * y.cos())
            })
            .collect();
        let pc = estimate_normals(&PointCloud::from_positions(pts), 10, Vec3::new(0.0, 0.0, 4.0)).unwrap().cloud;
        let r = rotation_from_angles(0.4, -1.1, 2.3).unwrap();
        for w in [FpfhWeighting::InverseDistance, FpfhWeighting::NormalizedInverseSquare] {
            let a = fpfh(&pc, 0.2, w).unwrap().features;
            let b = fpfh(&rotate(&pc, &r), 0.2, w).unwrap().features;
            let worst = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-6, "{w:?}: {worst}");
            assert!(a.data().iter().all(|&v| v >= 0.0 && v.is_finite()));
        }
    }
}
