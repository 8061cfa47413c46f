//! Background-plane removal for organized tabletop scans.
//!
//! The plane is estimated from a strip along the grid border, where a scan
//! sees only the support surface, then every point near that plane is dropped
//! and the remainder is cleaned up with density clustering.

use nalgebra::Matrix3;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pcd::{NeighborIndex, OrganizedCloud, PointCloud, Vec3};

/// The plane `{p : normal . p + offset = 0}` with its inlier band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneModel {
    pub normal: Vec3,
    pub offset: f64,
    pub inlier_threshold: f64,
}

impl PlaneModel {
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) + self.offset
    }

    pub fn is_inlier(&self, p: &Vec3) -> bool {
        self.signed_distance(p).abs() <= self.inlier_threshold
    }
}

/// Which density clusters survive background removal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterRetention {
    #[default]
    Largest,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundParams {
    pub strip_width: usize,
    pub ransac_threshold: f64,
    pub ransac_iterations: usize,
    /// Neighborhood radius for clustering; `None` picks 3x the median
    /// nearest-neighbor spacing of the points left after plane removal.
    pub db_eps: Option<f64>,
    pub db_min_pts: usize,
    pub retention: ClusterRetention,
    pub seed: u64,
}

impl Default for BackgroundParams {
    fn default() -> Self {
        Self {
            strip_width: 10,
            ransac_threshold: 0.005,
            ransac_iterations: 500,
            db_eps: None,
            db_min_pts: 10,
            retention: ClusterRetention::Largest,
            seed: 0,
        }
    }
}

/// Valid points whose pixel lies within `strip_width` of any grid edge.
pub fn boundary_strip(oc: &OrganizedCloud, strip_width: usize) -> Result<PointCloud> {
    if strip_width == 0 {
        return Err(Error::InvalidArgument("strip width must be at least 1".into()));
    }
    let (h, w) = (oc.height(), oc.width());
    Ok(oc.collect_points(|r, c| {
        r < strip_width || c < strip_width || r + strip_width >= h || c + strip_width >= w
    }))
}

/// RANSAC over 3-point hypotheses followed by a least-squares refit on the inliers.
///
/// Trials are drawn sequentially from a seeded generator and scored in
/// parallel; the hypothesis with most inliers wins, lowest trial index on ties.
/// The returned normal is oriented so that the origin (the sensor) lies on the
/// positive side, i.e. `offset >= 0`.
pub fn ransac_plane(pc: &PointCloud, threshold: f64, iterations: usize, seed: u64) -> Result<PlaneModel> {
    let n = pc.len();
    if n < 3 {
        return Err(Error::InsufficientPoints { needed: 3, got: n });
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {threshold}")));
    }
    if iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be at least 1".into()));
    }
    let pts = &pc.positions;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triples: Vec<[usize; 3]> = (0..iterations)
        .map(|_| {
            let s = sample(&mut rng, n, 3);
            [s.index(0), s.index(1), s.index(2)]
        })
        .collect();

    let best = triples
        .par_iter()
        .enumerate()
        .filter_map(|(trial, t)| {
            let (a, b, c) = (pts[t[0]], pts[t[1]], pts[t[2]]);
            let cross = (b - a).cross(&(c - a));
            let scale = (b - a).norm() * (c - a).norm();
            if scale == 0.0 || cross.norm() <= 1e-12 * scale {
                return None;
            }
            let normal = cross.normalize();
            let offset = -normal.dot(&a);
            let count = pts
                .iter()
                .filter(|p| (normal.dot(p) + offset).abs() <= threshold)
                .count();
            Some((count, trial, normal, offset))
        })
        .reduce_with(|x, y| {
            if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) {
                y
            } else {
                x
            }
        });
    let Some((_, _, normal, offset)) = best else {
        return Err(Error::DegenerateGeometry(
            "every sampled point triple was collinear".into(),
        ));
    };

    let inliers: Vec<Vec3> = pts
        .iter()
        .filter(|p| (normal.dot(p) + offset).abs() <= threshold)
        .copied()
        .collect();
    let (mut normal, mut offset) = refit_plane(&inliers).unwrap_or((normal, offset));
    if offset < 0.0 {
        normal = -normal;
        offset = -offset;
    }
    Ok(PlaneModel {
        normal,
        offset,
        inlier_threshold: threshold,
    })
}

/// Total least squares: the plane through the centroid normal to the
/// smallest-variance direction. `None` when the points do not span a plane.
fn refit_plane(points: &[Vec3]) -> Option<(Vec3, f64)> {
    if points.len() < 3 {
        return None;
    }
    let centroid: Vec3 = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    if eig.eigenvalues[order[1]] <= 1e-12 * eig.eigenvalues[order[2]].max(f64::MIN_POSITIVE) {
        return None;
    }
    let normal = eig.eigenvectors.column(order[0]).into_owned().normalize();
    Some((normal, -normal.dot(&centroid)))
}

/// Median distance from each point to its nearest other point.
pub fn median_spacing(pc: &PointCloud) -> Option<f64> {
    if pc.len() < 2 {
        return None;
    }
    let index = NeighborIndex::new(pc);
    let mut d: Vec<f64> = pc
        .positions
        .par_iter()
        .map(|p| {
            index
                .knn_with_distances(p, 2)
                .expect("index holds at least two points")[1]
                .1
                .sqrt()
        })
        .collect();
    d.sort_by(f64::total_cmp);
    Some(d[d.len() / 2])
}

/// DBSCAN labels: `Some(cluster)` for core/border points, `None` for noise.
/// Clusters are numbered in order of their lowest-index core point.
pub fn dbscan(pc: &PointCloud, eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = pc.len();
    let index = NeighborIndex::new(pc);
    let neighbors: Vec<Vec<usize>> = pc
        .positions
        .par_iter()
        .map(|p| {
            index
                .radius(p, eps)
                .map(|v| v.into_iter().map(|(i, _)| i).collect())
                .unwrap_or_default()
        })
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();
    let mut labels = vec![None; n];
    let mut next = 0;
    for seed in 0..n {
        if !core[seed] || labels[seed].is_some() {
            continue;
        }
        let cluster = next;
        next += 1;
        labels[seed] = Some(cluster);
        let mut stack = vec![seed];
        while let Some(i) = stack.pop() {
            for &j in &neighbors[i] {
                if labels[j].is_none() {
                    labels[j] = Some(cluster);
                    if core[j] {
                        stack.push(j);
                    }
                }
            }
        }
    }
    labels
}

/// Drops the plane's inlier band, then keeps the dominant density cluster(s).
pub fn remove_background(
    oc: &OrganizedCloud,
    plane: &PlaneModel,
    db_eps: Option<f64>,
    db_min_pts: usize,
    retention: ClusterRetention,
) -> Result<PointCloud> {
    let all = oc.collect_points(|_, _| true);
    let keep: Vec<usize> = (0..all.len())
        .filter(|&i| !plane.is_inlier(&all.positions[i]))
        .collect();
    let rest = all.select(&keep);
    if rest.is_empty() {
        return Err(Error::EmptyForeground);
    }
    let eps = match db_eps {
        Some(e) => e,
        None => 3.0 * median_spacing(&rest).unwrap_or(0.0),
    };
    let labels = dbscan(&rest, eps, db_min_pts.max(1));
    let clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; clusters];
    for l in labels.iter().flatten() {
        sizes[*l] += 1;
    }
    let chosen: Vec<usize> = match retention {
        ClusterRetention::All => (0..rest.len()).filter(|&i| labels[i].is_some()).collect(),
        ClusterRetention::Largest => {
            // First cluster wins ties.
            let Some(big) = (0..clusters).rev().max_by_key(|&c| sizes[c]) else {
                return Err(Error::EmptyForeground);
            };
            (0..rest.len()).filter(|&i| labels[i] == Some(big)).collect()
        }
    };
    if chosen.is_empty() {
        return Err(Error::EmptyForeground);
    }
    Ok(rest.select(&chosen))
}

/// Border strip -> plane fit -> plane and clutter removal.
pub fn segment_foreground(oc: &OrganizedCloud, params: &BackgroundParams) -> Result<PointCloud> {
    let strip = boundary_strip(oc, params.strip_width)?;
    let plane = ransac_plane(&strip, params.ransac_threshold, params.ransac_iterations, params.seed)?;
    remove_background(oc, &plane, params.db_eps, params.db_min_pts, params.retention)
}
