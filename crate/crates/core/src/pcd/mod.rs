//! Point-cloud containers, rotations, neighbor search, downsampling and file I/O.

pub(crate) mod kdtree;
pub mod ply;
mod rotation;
pub mod tiff;
mod voxel;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub use kdtree::{KdTree, NeighborIndex};
pub use rotation::{rotate, rotation_from_angles, Rotation};
pub use voxel::{voxel_downsample, Downsampled};

pub type Vec3 = Vector3<f64>;

/// A range scan stored as an `height x width` grid of 3D points.
///
/// Pixels without a sensor return are marked invalid; their stored coordinates
/// are kept as read so the grid can be written back unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct OrganizedCloud {
    height: usize,
    width: usize,
    points: Vec<[f32; 3]>,
    valid: Vec<bool>,
}

impl OrganizedCloud {
    /// Builds a grid from raw samples, deriving validity: a pixel is invalid when
    /// any channel is non-finite or `z <= 0`.
    pub fn from_xyz(height: usize, width: usize, points: Vec<[f32; 3]>) -> Result<Self> {
        let valid = points.iter().map(is_valid_sample).collect();
        Self::new(height, width, points, valid)
    }

    pub fn new(height: usize, width: usize, points: Vec<[f32; 3]>, valid: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "organized cloud must be at least 1x1, got {height}x{width}"
            )));
        }
        let len = height * width;
        if points.len() != len || valid.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                found: points.len().min(valid.len()),
            });
        }
        if let Some(i) = (0..len).find(|&i| valid[i] && !points[i].iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "pixel ({}, {}) is marked valid but holds a non-finite point",
                i / width,
                i % width
            )));
        }
        Ok(Self {
            height,
            width,
            points,
            valid,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn point(&self, row: usize, col: usize) -> [f32; 3] {
        self.points[row * self.width + col]
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[row * self.width + col]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Valid pixels in row-major order, filtered by `keep(row, col)`.
    pub(crate) fn collect_points<F>(&self, mut keep: F) -> PointCloud
    where
        F: FnMut(usize, usize) -> bool,
    {
        let mut positions = Vec::new();
        let mut origin = Vec::new();
        for row in 0..self.height {
            for col in 0..self.width {
                let i = row * self.width + col;
                if self.valid[i] && keep(row, col) {
                    let p = self.points[i];
                    positions.push(Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64));
                    origin.push((row as u32, col as u32));
                }
            }
        }
        PointCloud {
            positions,
            normals: None,
            origin_index: Some(origin),
        }
    }

    /// Flattens the valid pixels into an unorganized cloud, row-major from the top-left.
    pub fn to_point_cloud(&self) -> Result<PointCloud> {
        let pc = self.collect_points(|_, _| true);
        if pc.is_empty() {
            return Err(Error::EmptyCloud);
        }
        Ok(pc)
    }
}

fn is_valid_sample(p: &[f32; 3]) -> bool {
    p.iter().all(|c| c.is_finite()) && p[2] > 0.0
}

/// An unorganized set of 3D points with optional normals and grid provenance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    /// `(row, col)` of the source pixel in an [`OrganizedCloud`].
    pub origin_index: Option<Vec<(u32, u32)>>,
}

impl PointCloud {
    pub fn from_positions(positions: Vec<Vec3>) -> Self {
        Self {
            positions,
            normals: None,
            origin_index: None,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn with_normals(mut self, normals: Vec<Vec3>) -> Result<Self> {
        if normals.len() != self.positions.len() {
            return Err(Error::DimensionMismatch {
                expected: self.positions.len(),
                found: normals.len(),
            });
        }
        self.normals = Some(normals);
        Ok(self)
    }

    /// Keeps the points at `indices` (in the given order), carrying normals and provenance.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
            origin_index: self
                .origin_index
                .as_ref()
                .map(|o| indices.iter().map(|&i| o[i]).collect()),
        }
    }

    pub fn centroid(&self) -> Vec3 {
        if self.positions.is_empty() {
            return Vec3::zeros();
        }
        let sum: Vec3 = self.positions.iter().sum();
        sum / self.positions.len() as f64
    }

    /// Axis-aligned `(min, max)` corners. `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.positions.first()?;
        Some(self.positions.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }
}
