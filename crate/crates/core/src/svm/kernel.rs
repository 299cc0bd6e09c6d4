use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::SparseVector;

use super::TrainingSet;

pub const DEFAULT_CACHE_BYTES: usize = 256 << 20;

/// Rows shorter than this are computed on the calling thread.
const PARALLEL_ROW_MIN: usize = 2048;

/// `exp(-alpha ‖a - b‖²)`.
pub fn rbf_kernel(a: &SparseVector, b: &SparseVector, alpha: f64) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Domain(format!(
            "kernel dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!(
            "RBF width alpha must be positive, got {alpha}"
        )));
    }
    Ok(rbf_from_parts(
        a.squared_norm(),
        b.squared_norm(),
        a.dot(b),
        alpha,
    ))
}

#[inline]
fn rbf_from_parts(sq_a: f64, sq_b: f64, dot: f64, alpha: f64) -> f64 {
    let d2 = (sq_a + sq_b - 2.0 * dot).max(0.0);
    (-alpha * d2).exp()
}

/// `1 / (d · var)` where `var` is the variance over all `n · d` feature
/// entries, zeros included. Falls back to 1 for constant data.
pub fn scale_alpha(data: &TrainingSet) -> f64 {
    let cells = data.len() as f64 * data.dim() as f64;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for x in data.x() {
        for &v in x.values() {
            sum += v;
            sum_sq += v * v;
        }
    }
    let mean = sum / cells;
    let var = sum_sq / cells - mean * mean;
    if var > 0.0 && var.is_finite() {
        1.0 / (data.dim() as f64 * var)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Kernel {
    Linear,
    Rbf { alpha: f64 },
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Linear => Ok(()),
            Kernel::Rbf { alpha } if alpha > 0.0 && alpha.is_finite() => Ok(()),
            Kernel::Rbf { alpha } => Err(Error::Config(format!(
                "RBF width alpha must be positive, got {alpha}"
            ))),
        }
    }

    /// Kernel value given both rows and their squared norms.
    #[inline]
    pub(crate) fn eval(&self, a: &SparseVector, sq_a: f64, b: &SparseVector, sq_b: f64) -> f64 {
        match *self {
            Kernel::Linear => a.dot(b),
            Kernel::Rbf { alpha } => rbf_from_parts(sq_a, sq_b, a.dot(b), alpha),
        }
    }
}

/// Kernel rows over a fixed training set with an LRU cache.
pub(crate) struct KernelMatrix<'a> {
    x: &'a [SparseVector],
    sq_norms: Vec<f64>,
    kernel: Kernel,
    cache: RowCache,
}

impl<'a> KernelMatrix<'a> {
    pub fn new(x: &'a [SparseVector], kernel: Kernel, cache_bytes: usize) -> Self {
        let sq_norms = x.iter().map(SparseVector::squared_norm).collect();
        let row_bytes = x.len() * std::mem::size_of::<f64>();
        Self {
            x,
            sq_norms,
            kernel,
            cache: RowCache::new(cache_bytes / row_bytes.max(1)),
        }
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        match self.kernel {
            Kernel::Linear => self.sq_norms[i],
            Kernel::Rbf { .. } => 1.0,
        }
    }

    fn fill_row(&self, i: usize, out: &mut [f64]) {
        let (xi, si) = (&self.x[i], self.sq_norms[i]);
        let f =
            |(t, o): (usize, &mut f64)| *o = self.kernel.eval(xi, si, &self.x[t], self.sq_norms[t]);
        if out.len() >= PARALLEL_ROW_MIN {
            out.par_iter_mut().enumerate().for_each(f);
        } else {
            out.iter_mut().enumerate().for_each(f);
        }
    }

    /// Rows `i` and `j`, computed on a cache miss.
    pub fn rows(&mut self, i: usize, j: usize) -> (&[f64], &[f64]) {
        for r in [i, j] {
            if !self.cache.touch(r) {
                let mut row = self.cache.take_buffer(self.x.len());
                self.fill_row(r, &mut row);
                self.cache.insert(r, row, [i, j]);
            }
        }
        (self.cache.peek(i), self.cache.peek(j))
    }
}

/// Least-recently-used cache of kernel rows, bounded by a row count.
pub struct RowCache {
    capacity: usize,
    clock: u64,
    rows: HashMap<usize, (Vec<f64>, u64)>,
    spare: Option<Vec<f64>>,
}

impl RowCache {
    /// Capacity is clamped to at least two rows (one SMO pair).
    pub fn new(capacity_rows: usize) -> Self {
        Self {
            capacity: capacity_rows.max(2),
            clock: 0,
            rows: HashMap::new(),
            spare: None,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Marks `row` as used; returns whether it was cached.
    pub fn touch(&mut self, row: usize) -> bool {
        self.clock += 1;
        match self.rows.get_mut(&row) {
            Some(entry) => {
                entry.1 = self.clock;
                true
            }
            None => false,
        }
    }

    fn take_buffer(&mut self, len: usize) -> Vec<f64> {
        let mut buf = self.spare.take().unwrap_or_default();
        buf.resize(len, 0.0);
        buf
    }

    /// Inserts `row`, evicting the least recently used entry not in `pinned`.
    pub fn insert(&mut self, row: usize, values: Vec<f64>, pinned: [usize; 2]) {
        if self.rows.len() >= self.capacity {
            let victim = self
                .rows
                .iter()
                .filter(|(k, _)| !pinned.contains(k))
                .min_by_key(|(_, (_, stamp))| *stamp)
                .map(|(k, _)| *k);
            if let Some(v) = victim {
                self.spare = self.rows.remove(&v).map(|(buf, _)| buf);
            }
        }
        self.clock += 1;
        self.rows.insert(row, (values, self.clock));
    }

    pub fn peek(&self, row: usize) -> &[f64] {
        &self.rows[&row].0
    }

    pub fn contains(&self, row: usize) -> bool {
        self.rows.contains_key(&row)
    }
}
