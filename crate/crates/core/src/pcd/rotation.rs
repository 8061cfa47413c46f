use nalgebra::Matrix3;

use super::PointCloud;
use crate::error::{Error, Result};

/// A proper rotation of 3D space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    matrix: Matrix3<f64>,
}

impl Rotation {
    pub fn identity() -> Self {
        Self {
            matrix: Matrix3::identity(),
        }
    }

    /// Wraps a matrix after checking orthonormality and `det = +1` to 1e-9.
    pub fn from_matrix(matrix: Matrix3<f64>) -> Result<Self> {
        let gram = matrix * matrix.transpose();
        let off = (gram - Matrix3::identity()).abs().max();
        let det = matrix.determinant();
        if !(off <= 1e-9) || !((det - 1.0).abs() <= 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "not a rotation matrix (|R R^T - I| = {off:e}, det = {det})"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Rotation) -> Rotation {
        Rotation {
            matrix: self.matrix * first.matrix,
        }
    }
}

/// `Rx(theta_x) * Ry(theta_y) * Rz(theta_z)` with right-handed axis rotations.
pub fn rotation_from_angles(theta_x: f64, theta_y: f64, theta_z: f64) -> Result<Rotation> {
    if !(theta_x.is_finite() && theta_y.is_finite() && theta_z.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "rotation angles must be finite, got ({theta_x}, {theta_y}, {theta_z})"
        )));
    }
    let (sx, cx) = theta_x.sin_cos();
    let (sy, cy) = theta_y.sin_cos();
    let (sz, cz) = theta_z.sin_cos();
    #[rustfmt::skip]
    let rx = Matrix3::new(
        1.0, 0.0, 0.0,
        0.0, cx, -sx,
        0.0, sx, cx,
    );
    #[rustfmt::skip]
    let ry = Matrix3::new(
        cy, 0.0, sy,
        0.0, 1.0, 0.0,
        -sy, 0.0, cy,
    );
    #[rustfmt::skip]
    let rz = Matrix3::new(
        cz, -sz, 0.0,
        sz, cz, 0.0,
        0.0, 0.0, 1.0,
    );
    Ok(Rotation {
        matrix: rx * ry * rz,
    })
}

/// Rotates positions and normals about the origin; provenance is untouched.
pub fn rotate(pc: &PointCloud, r: &Rotation) -> PointCloud {
    let m = r.matrix;
    PointCloud {
        positions: pc.positions.iter().map(|p| m * p).collect(),
        normals: pc
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|n| m * n).collect()),
        origin_index: pc.origin_index.clone(),
    }
}
