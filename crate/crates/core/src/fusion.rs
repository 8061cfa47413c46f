//! Per-row unit normalization and concatenation of the two modalities.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Modality};

/// Rows whose Euclidean norm falls below this are left as zeros.
pub const ZERO_NORM: f64 = 1e-12;

/// Which modalities feed the memory bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
pub enum FeatureMode {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "3d")]
    ThreeD,
    #[default]
    #[serde(rename = "cpmf")]
    Cpmf,
}

impl FeatureMode {
    pub fn uses_2d(self) -> bool {
        matches!(self, FeatureMode::TwoD | FeatureMode::Cpmf)
    }

    pub fn uses_3d(self) -> bool {
        matches!(self, FeatureMode::ThreeD | FeatureMode::Cpmf)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::TwoD => "2d",
            FeatureMode::ThreeD => "3d",
            FeatureMode::Cpmf => "cpmf",
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "2d" => Ok(FeatureMode::TwoD),
            "3d" => Ok(FeatureMode::ThreeD),
            "cpmf" => Ok(FeatureMode::Cpmf),
            other => Err(Error::InvalidArgument(format!(
                "unknown feature mode {other:?}; expected 2d, 3d or cpmf"
            ))),
        }
    }
}

/// A normalized matrix plus the number of rows that were too small to scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub features: FeatureMatrix,
    pub zero_rows: usize,
}

/// Scales every row to unit Euclidean norm.
pub fn normalize_rows(f: &FeatureMatrix) -> Normalized {
    let dim = f.dim();
    let mut data = f.data().to_vec();
    if dim == 0 {
        return Normalized {
            features: f.clone(),
            zero_rows: f.rows(),
        };
    }
    let zero_rows = data
        .par_chunks_mut(dim)
        .map(|row| {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < ZERO_NORM {
                row.fill(0.0);
                1
            } else {
                row.iter_mut().for_each(|v| *v /= norm);
                0
            }
        })
        .sum();
    let features = FeatureMatrix::new(f.rows(), dim, data, f.modality()).expect("finite input stays finite");
    Normalized { features, zero_rows }
}

/// Fused per-point features along with per-half diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Fused {
    pub features: FeatureMatrix,
    pub zero_rows_2d: usize,
    pub zero_rows_3d: usize,
}

/// `[normalize_rows(f2d) | normalize_rows(f3d)]`.
pub fn fuse(f2d: &FeatureMatrix, f3d: &FeatureMatrix) -> Result<Fused> {
    if f2d.rows() != f3d.rows() {
        return Err(Error::DimensionMismatch {
            expected: f2d.rows(),
            found: f3d.rows(),
        });
    }
    let a = normalize_rows(f2d);
    let b = normalize_rows(f3d);
    let (d2, d3) = (f2d.dim(), f3d.dim());
    let dim = d2 + d3;
    let mut data = vec![0.0; f2d.rows() * dim];
    if dim > 0 {
        data.par_chunks_mut(dim).enumerate().for_each(|(i, row)| {
            row[..d2].copy_from_slice(a.features.row(i));
            row[d2..].copy_from_slice(b.features.row(i));
        });
    }
    Ok(Fused {
        features: FeatureMatrix::new(f2d.rows(), dim, data, Modality::Cpmf)?,
        zero_rows_2d: a.zero_rows,
        zero_rows_3d: b.zero_rows,
    })
}

/// Builds the bank features for `mode`; only the modalities it uses are required.
pub fn combine(mode: FeatureMode, f2d: Option<&FeatureMatrix>, f3d: Option<&FeatureMatrix>) -> Result<Fused> {
    let missing = |m: &str| Error::InvalidArgument(format!("feature mode {mode} needs {m} features"));
    match mode {
        FeatureMode::TwoD => {
            let n = normalize_rows(f2d.ok_or_else(|| missing("2d"))?);
            Ok(Fused {
                features: n.features.with_modality(Modality::TwoD),
                zero_rows_2d: n.zero_rows,
                zero_rows_3d: 0,
            })
        }
        FeatureMode::ThreeD => {
            let n = normalize_rows(f3d.ok_or_else(|| missing("3d"))?);
            Ok(Fused {
                features: n.features.with_modality(Modality::ThreeD),
                zero_rows_2d: 0,
                zero_rows_3d: n.zero_rows,
            })
        }
        FeatureMode::Cpmf => fuse(f2d.ok_or_else(|| missing("2d"))?, f3d.ok_or_else(|| missing("3d"))?),
    }
}
