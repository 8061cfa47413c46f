use crate::error::{Error, Result};

/// Which modality a [`FeatureMatrix`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    #[serde(rename = "3d")]
    ThreeD,
    #[serde(rename = "2d")]
    TwoD,
    Cpmf,
}

/// Row-major `rows x dim` block of per-point features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
    modality: Modality,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>, modality: Modality) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::DimensionMismatch {
                expected: rows * dim,
                found: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "feature entry ({}, {}) is not finite",
                i / dim.max(1),
                i % dim.max(1)
            )));
        }
        Ok(Self {
            rows,
            dim,
            data,
            modality,
        })
    }

    pub fn zeros(rows: usize, dim: usize, modality: Modality) -> Self {
        Self {
            rows,
            dim,
            data: vec![0.0; rows * dim],
            modality,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], modality: Modality) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(rows.len(), dim, rows.concat(), modality)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics; a zero-width matrix still has `rows` empty rows.
        (0..self.rows).map(move |i| self.row(i))
    }

    pub(crate) fn with_modality(mut self, modality: Modality) -> Self {
        self.modality = modality;
        self
    }
}

/// Gathers rows: output row `i` is `ds[up_map[i]]`.
pub fn propagate_to_full(ds: &FeatureMatrix, up_map: &[usize]) -> Result<FeatureMatrix> {
    let mut data = Vec::with_capacity(up_map.len() * ds.dim);
    for &u in up_map {
        if u >= ds.rows {
            return Err(Error::IndexOutOfRange {
                index: u,
                len: ds.rows,
            });
        }
        data.extend_from_slice(ds.row(u));
    }
    Ok(FeatureMatrix {
        rows: up_map.len(),
        dim: ds.dim,
        data,
        modality: ds.modality,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureMatrix {
        FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]], Modality::ThreeD).unwrap()
    }

    #[test]
    fn identity_map_is_identity() {
        let f = sample();
        assert_eq!(propagate_to_full(&f, &[0, 1, 2]).unwrap(), f);
    }

    #[test]
    fn zero_map_repeats_first_row() {
        let out = propagate_to_full(&sample(), &[0, 0, 0, 0]).unwrap();
        assert_eq!(out.rows(), 4);
        assert!(out.iter_rows().all(|r| r == [1.0, 2.0]));
    }

    #[test]
    fn mixed_map_gathers() {
        let f = sample();
        let map = [2, 0, 2, 1];
        let out = propagate_to_full(&f, &map).unwrap();
        for (i, &m) in map.iter().enumerate() {
            assert_eq!(out.row(i), f.row(m));
        }
    }

    #[test]
    fn out_of_range_index_errors() {
        assert!(matches!(
            propagate_to_full(&sample(), &[3]),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
    }

    #[test]
    fn non_finite_entries_rejected() {
        assert!(FeatureMatrix::new(1, 1, vec![f64::NAN], Modality::TwoD).is_err());
    }
}
