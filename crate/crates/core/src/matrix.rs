//! Row-major sparse feature matrix shared by all classifiers. Dense
//! embeddings are stored with their zero entries omitted, so an absent entry
//! always reads as 0.

use serde::{Deserialize, Serialize};

use crate::error::ClassifyError;
use crate::features::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: Vec<SparseVector>,
    dim: usize,
}

impl FeatureMatrix {
    pub fn from_sparse(rows: Vec<SparseVector>, dim: usize) -> Result<Self, ClassifyError> {
        for (r, row) in rows.iter().enumerate() {
            if row.indices.len() != row.values.len()
                || row.indices.windows(2).any(|w| w[0] >= w[1])
            {
                return Err(ClassifyError::Hyperparameter(format!(
                    "row {r} has unsorted or misaligned sparse indices"
                )));
            }
            if let Some(&c) = row.indices.last() {
                if c >= dim {
                    return Err(ClassifyError::DimensionMismatch {
                        expected: dim,
                        found: c + 1,
                    });
                }
            }
            if let Some(k) = row.values.iter().position(|v| !v.is_finite()) {
                return Err(ClassifyError::NonFinite {
                    row: r,
                    column: row.indices[k],
                });
            }
        }
        Ok(Self { rows, dim })
    }

    pub fn from_dense(rows: &[Vec<f64>], dim: usize) -> Result<Self, ClassifyError> {
        let mut sparse = Vec::with_capacity(rows.len());
        for (r, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(ClassifyError::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            let mut v = SparseVector::default();
            for (c, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    return Err(ClassifyError::NonFinite { row: r, column: c });
                }
                if x != 0.0 {
                    v.indices.push(c);
                    v.values.push(x);
                }
            }
            sparse.push(v);
        }
        Ok(Self { rows: sparse, dim })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &SparseVector {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[SparseVector] {
        &self.rows
    }

    pub fn dot(&self, i: usize, weights: &[f64]) -> f64 {
        self.rows[i].iter().map(|(c, v)| weights[c] * v).sum()
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            dim: self.dim,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut d = vec![0.0; self.dim];
                for (c, v) in r.iter() {
                    d[c] = v;
                }
                d
            })
            .collect()
    }
}
