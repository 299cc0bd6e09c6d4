//! Binary soft-margin SVMs.
//!
//! Both models minimise
//!
//! ```text
//! ½‖w‖² + R Σ_i max(0, 1 - y_i (w·φ(x_i) + h))
//! ```
//!
//! with an unregularised bias `h`. The linear model keeps `w` explicitly and is
//! trained by dual coordinate descent inside a one-dimensional search over
//! `h` ([`linear`]); the kernel model keeps support vectors and dual
//! coefficients and is trained by SMO ([`smo`]).

mod kernel;
pub mod linear;
pub mod smo;

use crate::error::{Error, Result};
use crate::sparse::SparseVector;

pub use kernel::{rbf_kernel, scale_alpha, Kernel, RowCache, DEFAULT_CACHE_BYTES};
pub use linear::{train_linear, train_linear_with_progress, LinearSvmModel};
pub use smo::{train_kernel, train_kernel_with_progress, train_rbf, KernelSvmModel};

/// Maps class `0` (fake) to `-1` and class `1` (real) to `+1`.
pub fn map_label(class: u8) -> Result<i8> {
    match class {
        0 => Ok(-1),
        1 => Ok(1),
        other => Err(Error::Domain(format!("class must be 0 or 1, got {other}"))),
    }
}

/// Inverse of [`map_label`].
pub fn unmap_label(sign: i8) -> Result<u8> {
    match sign {
        -1 => Ok(0),
        1 => Ok(1),
        other => Err(Error::Domain(format!(
            "sign label must be -1 or +1, got {other}"
        ))),
    }
}

/// Feature rows with `±1` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    x: Vec<SparseVector>,
    y: Vec<f64>,
    dim: usize,
}

impl TrainingSet {
    pub fn new(x: Vec<SparseVector>, y: Vec<i8>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Precondition(format!(
                "{} feature rows but {} labels",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 2 {
            return Err(Error::Precondition(
                "need at least two training examples".into(),
            ));
        }
        if let Some(bad) = y.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::Precondition(format!("label {bad} is not ±1")));
        }
        if !(y.contains(&1) && y.contains(&-1)) {
            return Err(Error::Precondition("both classes must be present".into()));
        }
        let dim = x[0].dim();
        if x.iter().any(|v| v.dim() != dim) {
            return Err(Error::Precondition(
                "feature rows differ in dimension".into(),
            ));
        }
        Ok(Self {
            x,
            y: y.into_iter().map(f64::from).collect(),
            dim,
        })
    }

    /// Builds from dense rows; convenient for small problems and tests.
    pub fn from_dense(rows: &[Vec<f64>], y: Vec<i8>) -> Result<Self> {
        Self::new(
            rows.iter().map(|r| SparseVector::from_dense(r)).collect(),
            y,
        )
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x(&self) -> &[SparseVector] {
        &self.x
    }

    /// Labels as `±1.0`.
    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Bound on the KKT violation at termination.
    pub tolerance: f64,
    /// SMO pair updates, or coordinate-descent epochs per inner solve.
    pub max_iter: usize,
    pub seed: u64,
    /// Report progress every this many iterations (0 disables).
    pub progress_every: usize,
    /// Memory budget for cached kernel rows.
    pub cache_bytes: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            max_iter: 10_000_000,
            seed: 42,
            progress_every: 1000,
            cache_bytes: DEFAULT_CACHE_BYTES,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config("solver tolerance must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Snapshot passed to progress callbacks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub iteration: usize,
    /// Dual objective (SMO) or primal objective (linear solver).
    pub objective: f64,
    pub max_violation: f64,
}

pub(crate) fn check_regularization(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Config(format!(
            "regularization R must be positive, got {r}"
        )));
    }
    Ok(())
}

/// Either trained model.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Linear(LinearSvmModel),
    Kernel(KernelSvmModel),
}

impl Classifier {
    pub fn decision_value(&self, x: &SparseVector) -> Result<f64> {
        match self {
            Classifier::Linear(m) => m.decision_value(x),
            Classifier::Kernel(m) => m.decision_value(x),
        }
    }

    pub fn predict(&self, x: &SparseVector) -> Result<u8> {
        self.decision_value(x).map(class_of)
    }

    pub fn dim(&self) -> usize {
        match self {
            Classifier::Linear(m) => m.dim(),
            Classifier::Kernel(m) => m.dim(),
        }
    }
}

/// Sign rule: non-negative decision values map to class 1 (real), negative to 0.
pub fn class_of(decision: f64) -> u8 {
    if decision >= 0.0 {
        1
    } else {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportMeasure {
    /// `|λ_i|` of a kernel model.
    DualWeight,
    /// `y_i (w·x_i + h)` of a linear model.
    FunctionalMargin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportReport {
    /// Indices into the training set, ascending.
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub measure: SupportMeasure,
}

impl SupportReport {
    pub fn count(&self) -> usize {
        self.indices.len()
    }
}
