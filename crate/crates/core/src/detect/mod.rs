//! Memory bank of normal features and nearest-neighbor anomaly scoring.

mod coreset;
mod file;

use rayon::prelude::*;

pub use coreset::{coreset_size, greedy_k_center, seeded_start};
pub use file::{decode_bank, encode_bank, load_bank, save_bank, BANK_MAGIC, BANK_VERSION};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::pcd::kdtree::KdTree;

/// Above this dimension the bank is scanned linearly instead of through a kd-tree.
pub const KDTREE_MAX_DIM: usize = 8;

/// Source of one bank row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Provenance {
    pub cloud: u32,
    pub point: u32,
}

/// Storage precision of bank rows. Queries against an `F32` bank are rounded
/// to f32 first, so a feature that was stored scores exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F64,
    F32,
}

#[derive(Debug, Clone)]
enum Index {
    Tree(KdTree),
    Linear,
}

/// Immutable set of normal features.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    dim: usize,
    data: Vec<f64>,
    provenance: Vec<Provenance>,
    coreset_ratio: f64,
    precision: Precision,
    index: Index,
}

impl MemoryBank {
    /// Row union of `train`, optionally thinned by greedy k-center selection.
    pub fn fit(train: &[FeatureMatrix], coreset_ratio: f64, seed: u64) -> Result<Self> {
        let first = train
            .first()
            .ok_or_else(|| Error::InvalidArgument("training set is empty".into()))?;
        if !(coreset_ratio > 0.0 && coreset_ratio <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "coreset ratio {coreset_ratio} is outside (0, 1]"
            )));
        }
        let dim = first.dim();
        if dim == 0 {
            return Err(Error::InvalidArgument("features have zero width".into()));
        }
        let mut data = Vec::with_capacity(train.iter().map(|m| m.data().len()).sum());
        let mut provenance = Vec::new();
        for (c, m) in train.iter().enumerate() {
            if m.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: m.dim(),
                });
            }
            data.extend_from_slice(m.data());
            provenance.extend((0..m.rows()).map(|p| Provenance {
                cloud: c as u32,
                point: p as u32,
            }));
        }
        if provenance.is_empty() {
            return Err(Error::InvalidArgument("training set has no rows".into()));
        }
        if coreset_ratio < 1.0 {
            let rows = provenance.len();
            let keep = greedy_k_center(&data, dim, coreset_size(rows, coreset_ratio), seeded_start(rows, seed));
            data = keep.iter().flat_map(|&i| data[i * dim..(i + 1) * dim].to_vec()).collect();
            provenance = keep.iter().map(|&i| provenance[i]).collect();
        }
        Self::from_parts(dim, data, provenance, coreset_ratio, Precision::F64)
    }

    pub(crate) fn from_parts(
        dim: usize,
        data: Vec<f64>,
        provenance: Vec<Provenance>,
        coreset_ratio: f64,
        precision: Precision,
    ) -> Result<Self> {
        let index = if dim <= KDTREE_MAX_DIM {
            Index::Tree(KdTree::build(data.clone(), dim)?)
        } else {
            Index::Linear
        };
        Ok(Self {
            dim,
            data,
            provenance,
            coreset_ratio,
            precision,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn coreset_ratio(&self) -> f64 {
        self.coreset_ratio
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    /// Minimum squared Euclidean distance from `query` to any bank row.
    pub fn nearest_distance(&self, query: &[f64]) -> Result<f64> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        let rounded: Vec<f64>;
        let q = match self.precision {
            Precision::F64 => query,
            Precision::F32 => {
                rounded = query.iter().map(|&v| v as f32 as f64).collect();
                &rounded
            }
        };
        Ok(match &self.index {
            Index::Tree(t) => t.nearest(q)?.1,
            Index::Linear => self.linear_nearest(q),
        })
    }

    fn linear_nearest(&self, q: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        'rows: for row in self.data.chunks_exact(self.dim) {
            let mut acc = 0.0;
            for (x, y) in row.iter().zip(q) {
                let d = x - y;
                acc += d * d;
                // Partial sums only grow, so a row already past `best` cannot win.
                if acc >= best {
                    continue 'rows;
                }
            }
            best = acc;
        }
        best
    }

    /// Scores every row of `test` against the bank.
    pub fn score(&self, test: &FeatureMatrix) -> Result<Vec<f64>> {
        if test.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: test.dim(),
            });
        }
        (0..test.rows())
            .into_par_iter()
            .map(|i| self.nearest_distance(test.row(i)))
            .collect()
    }
}

/// Reduction from point scores to one score per cloud.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImageScore {
    #[default]
    Max,
    /// Mean of the highest `ceil(q * N)` point scores.
    TopMean { q: f64 },
}

impl ImageScore {
    pub fn reduce(&self, scores: &[f64]) -> f64 {
        if scores.is_empty() {
            return 0.0;
        }
        match *self {
            ImageScore::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ImageScore::TopMean { q } => {
                let mut sorted = scores.to_vec();
                sorted.sort_unstable_by(|a, b| b.total_cmp(a));
                let k = ((q * scores.len() as f64).ceil() as usize).clamp(1, scores.len());
                sorted[..k].iter().sum::<f64>() / k as f64
            }
        }
    }
}

/// Per-point and per-cloud anomaly scores for one test cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyResult {
    pub point_scores: Vec<f64>,
    pub image_score: f64,
    /// Grid pixel `(row, col)` of each scored point.
    pub origin_index: Option<Vec<(u32, u32)>>,
}

/// Scores `test` and reduces to an image score with `reduction`.
pub fn score(
    bank: &MemoryBank,
    test: &FeatureMatrix,
    origin_index: Option<Vec<(u32, u32)>>,
    reduction: ImageScore,
) -> Result<AnomalyResult> {
    if let Some(o) = &origin_index {
        if o.len() != test.rows() {
            return Err(Error::DimensionMismatch {
                expected: test.rows(),
                found: o.len(),
            });
        }
    }
    let point_scores = bank.score(test)?;
    Ok(AnomalyResult {
        image_score: reduction.reduce(&point_scores),
        point_scores,
        origin_index,
    })
}
