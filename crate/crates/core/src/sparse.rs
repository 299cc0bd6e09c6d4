//! Sparse feature rows shared by the vectorizers and the SVM solvers.

use crate::error::{Error, Result};

/// A sparse vector with strictly ascending indices and non-zero finite values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a vector from `(index, value)` pairs, validating every invariant.
    pub fn from_entries(dim: usize, entries: Vec<(u32, f64)>) -> Result<Self> {
        let mut indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut prev: Option<u32> = None;
        for (i, v) in entries {
            if (i as usize) >= dim {
                return Err(Error::Domain(format!(
                    "index {i} out of range for dim {dim}"
                )));
            }
            if prev.is_some_and(|p| p >= i) {
                return Err(Error::Domain("indices must be strictly ascending".into()));
            }
            if !v.is_finite() || v == 0.0 {
                return Err(Error::Domain(format!("entry {i} has invalid value {v}")));
            }
            prev = Some(i);
            indices.push(i);
            values.push(v);
        }
        Ok(Self {
            dim,
            indices,
            values,
        })
    }

    /// Drops exact zeros. Panics on non-finite input.
    pub fn from_dense(values: &[f64]) -> Self {
        let mut out = Self::empty(values.len());
        for (i, &v) in values.iter().enumerate() {
            assert!(v.is_finite(), "non-finite dense component at {i}");
            if v != 0.0 {
                out.indices.push(i as u32);
                out.values.push(v);
            }
        }
        out
    }

    pub(crate) fn from_sorted_unchecked(dim: usize, indices: Vec<u32>, values: Vec<f64>) -> Self {
        debug_assert_eq!(indices.len(), values.len());
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        Self {
            dim,
            indices,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn get(&self, index: u32) -> f64 {
        match self.indices.binary_search(&index) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i as usize] = v;
        }
        out
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Merge-join dot product.
    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (a_idx, a_val) = (&self.indices, &self.values);
        let (b_idx, b_val) = (&other.indices, &other.values);
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0;
        while i < a_idx.len() && j < b_idx.len() {
            match a_idx[i].cmp(&b_idx[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a_val[i] * b_val[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Dot product with a dense vector of at least `self.dim()` components.
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i as usize]).sum()
    }

    /// `dense += scale * self`
    pub fn axpy_into(&self, scale: f64, dense: &mut [f64]) {
        for (i, v) in self.iter() {
            dense[i as usize] += scale * v;
        }
    }

    /// Exact squared Euclidean distance computed on the merged support.
    pub fn squared_distance(&self, other: &SparseVector) -> f64 {
        let (a_idx, a_val) = (&self.indices, &self.values);
        let (b_idx, b_val) = (&other.indices, &other.values);
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0;
        while i < a_idx.len() || j < b_idx.len() {
            let d = if j >= b_idx.len() || (i < a_idx.len() && a_idx[i] < b_idx[j]) {
                i += 1;
                a_val[i - 1]
            } else if i >= a_idx.len() || b_idx[j] < a_idx[i] {
                j += 1;
                -b_val[j - 1]
            } else {
                i += 1;
                j += 1;
                a_val[i - 1] - b_val[j - 1]
            };
            acc += d * d;
        }
        acc
    }

    /// Entrywise sum; entries that cancel to zero are dropped.
    pub fn add(&self, other: &SparseVector) -> SparseVector {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        let (mut i, mut j) = (0, 0);
        while i < self.nnz() || j < other.nnz() {
            let (idx, v) =
                if j >= other.nnz() || (i < self.nnz() && self.indices[i] < other.indices[j]) {
                    i += 1;
                    (self.indices[i - 1], self.values[i - 1])
                } else if i >= self.nnz() || other.indices[j] < self.indices[i] {
                    j += 1;
                    (other.indices[j - 1], other.values[j - 1])
                } else {
                    i += 1;
                    j += 1;
                    (
                        self.indices[i - 1],
                        self.values[i - 1] + other.values[j - 1],
                    )
                };
            if v != 0.0 {
                indices.push(idx);
                values.push(v);
            }
        }
        SparseVector::from_sorted_unchecked(self.dim, indices, values)
    }
}
