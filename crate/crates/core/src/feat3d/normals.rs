use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pcd::{NeighborIndex, PointCloud, Vec3};

/// A cloud with normals filled in, plus the points whose neighborhood was too
/// degenerate (covariance rank < 2) to define a surface.
#[derive(Debug, Clone)]
pub struct Normals {
    pub cloud: PointCloud,
    pub degenerate: Vec<usize>,
}

/// PCA normals over the `k` nearest neighbors (the point itself included),
/// oriented towards `viewpoint`.
pub fn estimate_normals(pc: &PointCloud, k: usize, viewpoint: Vec3) -> Result<Normals> {
    if k < 3 {
        return Err(Error::InvalidArgument(format!("normal estimation needs k >= 3, got {k}")));
    }
    if k > pc.len() {
        return Err(Error::InsufficientPoints {
            needed: k,
            got: pc.len(),
        });
    }
    let index = NeighborIndex::new(pc);
    let results: Vec<(Vec3, bool)> = pc
        .positions
        .par_iter()
        .map(|p| {
            let nbrs = index.knn(p, k).expect("non-empty index");
            let to_view = viewpoint - p;
            match pca_normal(&pc.positions, &nbrs) {
                Some(n) if n.dot(&to_view) < 0.0 => (-n, false),
                Some(n) => (n, false),
                None => {
                    let fallback = to_view.try_normalize(0.0).unwrap_or_else(Vec3::z);
                    (fallback, true)
                }
            }
        })
        .collect();
    let degenerate = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.1.then_some(i))
        .collect();
    let normals = results.into_iter().map(|r| r.0).collect();
    Ok(Normals {
        cloud: pc.clone().with_normals(normals)?,
        degenerate,
    })
}

fn pca_normal(points: &[Vec3], nbrs: &[usize]) -> Option<Vec3> {
    let n = nbrs.len() as f64;
    let centroid: Vec3 = nbrs.iter().map(|&i| points[i]).sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for &i in nbrs {
        let d = points[i] - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[2]];
    if !(largest > 0.0) || eig.eigenvalues[order[1]] <= 1e-12 * largest {
        return None;
    }
    eig.eigenvectors.column(order[0]).into_owned().try_normalize(0.0)
}
