use std::collections::HashMap;

use super::{PointCloud, Vec3};
use crate::error::{Error, Result};

/// A voxel-downsampled cloud plus the map back to the original points.
#[derive(Debug, Clone)]
pub struct Downsampled {
    pub cloud: PointCloud,
    /// For every original point, the index of its voxel's representative in `cloud`.
    pub up_map: Vec<usize>,
}

/// One point per occupied voxel, placed at the centroid of the voxel's members.
///
/// The grid is anchored at the cloud's minimum corner. Output points appear in
/// the order their voxel is first touched, so a cloud with one point per voxel
/// comes back unchanged. Normals and provenance are not carried over; use the
/// returned `up_map` to relate the two resolutions.
pub fn voxel_downsample(pc: &PointCloud, voxel_size: f64) -> Result<Downsampled> {
    if !(voxel_size > 0.0) || !voxel_size.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "voxel size must be positive, got {voxel_size}"
        )));
    }
    let Some((lo, _)) = pc.bounds() else {
        return Err(Error::EmptyCloud);
    };
    let mut slot_of: HashMap<[i64; 3], usize> = HashMap::new();
    let mut sums: Vec<(Vec3, usize)> = Vec::new();
    let mut up_map = Vec::with_capacity(pc.len());
    for p in &pc.positions {
        let rel = (p - lo) / voxel_size;
        let key = [rel.x.floor() as i64, rel.y.floor() as i64, rel.z.floor() as i64];
        let slot = *slot_of.entry(key).or_insert_with(|| {
            sums.push((Vec3::zeros(), 0));
            sums.len() - 1
        });
        sums[slot].0 += p;
        sums[slot].1 += 1;
        up_map.push(slot);
    }
    let positions = sums
        .into_iter()
        .map(|(sum, n)| if n == 1 { sum } else { sum / n as f64 })
        .collect();
    Ok(Downsampled {
        cloud: PointCloud::from_positions(positions),
        up_map,
    })
}
