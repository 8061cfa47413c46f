//! Local geometric descriptors: surface normals and Fast Point Feature Histograms.

mod fpfh;
mod normals;

pub use fpfh::{fpfh, pair_features, spfh, Fpfh, FpfhWeighting, FPFH_BINS, FPFH_DIM};
pub use normals::{estimate_normals, Normals};
