//! Sequential minimal optimisation for the soft-margin dual
//!
//! ```text
//! min_λ ½ λᵀQλ − Σλ_i   s.t.  0 ≤ λ_i ≤ R,  Σ y_i λ_i = 0,   Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! Each iteration picks the maximal violating pair, solves the two-variable
//! subproblem in closed form, clips to the box, and updates the gradient with
//! two kernel rows. Termination is when the maximal violation `m(λ) − M(λ)`
//! falls below the configured tolerance.

use crate::error::{Error, Result};
use crate::sparse::SparseVector;

use super::kernel::{Kernel, KernelMatrix};
use super::{
    check_regularization, Progress, SolverConfig, SupportMeasure, SupportReport, TrainingSet,
};

/// Curvature floor for degenerate pairs.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSvmModel {
    pub(crate) kernel: Kernel,
    pub(crate) dim: usize,
    pub(crate) support_x: Vec<SparseVector>,
    pub(crate) support_sq_norms: Vec<f64>,
    /// `λ_i y_i` per support vector.
    pub(crate) dual_coef: Vec<f64>,
    pub(crate) bias: f64,
    pub(crate) r: f64,
    /// Positions of the support vectors in the training set, when known.
    pub(crate) support_indices: Option<Vec<usize>>,
    pub(crate) dual_objective: f64,
    pub(crate) iterations: usize,
}

impl KernelSvmModel {
    /// Assembles a model from stored parts (used when loading model files).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        kernel: Kernel,
        dim: usize,
        support_x: Vec<SparseVector>,
        dual_coef: Vec<f64>,
        bias: f64,
        r: f64,
        support_indices: Option<Vec<usize>>,
        dual_objective: f64,
    ) -> Result<Self> {
        kernel.validate()?;
        check_regularization(r)?;
        if support_x.len() != dual_coef.len() {
            return Err(Error::Domain(
                "support vector and coefficient counts differ".into(),
            ));
        }
        if support_x.iter().any(|x| x.dim() != dim) {
            return Err(Error::Domain("support vector dimension mismatch".into()));
        }
        if let Some(idx) = &support_indices {
            if idx.len() != support_x.len() {
                return Err(Error::Domain("support index count mismatch".into()));
            }
        }
        if !bias.is_finite() || dual_coef.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("non-finite model parameters".into()));
        }
        let support_sq_norms = support_x.iter().map(SparseVector::squared_norm).collect();
        Ok(Self {
            kernel,
            dim,
            support_x,
            support_sq_norms,
            dual_coef,
            bias,
            r,
            support_indices,
            dual_objective,
            iterations: 0,
        })
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support_x(&self) -> &[SparseVector] {
        &self.support_x
    }

    pub fn dual_coef(&self) -> &[f64] {
        &self.dual_coef
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn regularization(&self) -> f64 {
        self.r
    }

    pub fn support_indices(&self) -> Option<&[usize]> {
        self.support_indices.as_deref()
    }

    /// Dual objective `Σλ − ½λᵀQλ` at termination.
    pub fn dual_objective(&self) -> f64 {
        self.dual_objective
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// `Σ_s c_s K(x_s, x) + h`
    pub fn decision_value(&self, x: &SparseVector) -> Result<f64> {
        if x.dim() != self.dim {
            return Err(Error::Domain(format!(
                "input dimension {} does not match model dimension {}",
                x.dim(),
                self.dim
            )));
        }
        let sq = x.squared_norm();
        let sum: f64 = self
            .support_x
            .iter()
            .zip(&self.support_sq_norms)
            .zip(&self.dual_coef)
            .map(|((s, &ss), c)| c * self.kernel.eval(s, ss, x, sq))
            .sum();
        Ok(sum + self.bias)
    }

    pub fn predict(&self, x: &SparseVector) -> Result<u8> {
        self.decision_value(x).map(super::class_of)
    }

    /// Training points with `λ > 0` and their `|λ|`.
    pub fn support_vectors(&self) -> Result<SupportReport> {
        let indices = self.support_indices.clone().ok_or_else(|| {
            Error::Unsupported("support vector provenance was not retained for this model".into())
        })?;
        Ok(SupportReport {
            indices,
            values: self.dual_coef.iter().map(|c| c.abs()).collect(),
            measure: SupportMeasure::DualWeight,
        })
    }
}

/// RBF-kernel SVM, `K(a, b) = exp(-alpha ‖a − b‖²)`.
pub fn train_rbf(
    data: &TrainingSet,
    r: f64,
    alpha: f64,
    cfg: &SolverConfig,
) -> Result<KernelSvmModel> {
    train_kernel(data, r, Kernel::Rbf { alpha }, cfg)
}

pub fn train_kernel(
    data: &TrainingSet,
    r: f64,
    kernel: Kernel,
    cfg: &SolverConfig,
) -> Result<KernelSvmModel> {
    train_kernel_with_progress(data, r, kernel, cfg, &mut |_| {})
}

pub fn train_kernel_with_progress(
    data: &TrainingSet,
    r: f64,
    kernel: Kernel,
    cfg: &SolverConfig,
    progress: &mut dyn FnMut(Progress),
) -> Result<KernelSvmModel> {
    check_regularization(r)?;
    kernel.validate()?;
    cfg.validate()?;
    let mut solver = Solver::new(data, r, kernel, cfg);
    let iterations = solver.run(cfg, progress)?;
    let bias = -solver.rho();
    let dual_objective = solver.dual_objective();

    let mut support_x = Vec::new();
    let mut dual_coef = Vec::new();
    let mut support_indices = Vec::new();
    for (t, &a) in solver.alpha.iter().enumerate() {
        if a > 0.0 {
            support_x.push(data.x()[t].clone());
            dual_coef.push(a * data.y()[t]);
            support_indices.push(t);
        }
    }
    let mut model = KernelSvmModel::from_parts(
        kernel,
        data.dim(),
        support_x,
        dual_coef,
        bias,
        r,
        Some(support_indices),
        dual_objective,
    )?;
    model.iterations = iterations;
    Ok(model)
}

struct Solver<'a> {
    y: &'a [f64],
    r: f64,
    alpha: Vec<f64>,
    /// `Qλ − 1`
    grad: Vec<f64>,
    diag: Vec<f64>,
    km: KernelMatrix<'a>,
}

impl<'a> Solver<'a> {
    fn new(data: &'a TrainingSet, r: f64, kernel: Kernel, cfg: &SolverConfig) -> Self {
        let n = data.len();
        let km = KernelMatrix::new(data.x(), kernel, cfg.cache_bytes);
        let diag = (0..n).map(|i| km.diagonal(i)).collect();
        Self {
            y: data.y(),
            r,
            alpha: vec![0.0; n],
            grad: vec![-1.0; n],
            diag,
            km,
        }
    }

    fn in_up(&self, t: usize) -> bool {
        if self.y[t] > 0.0 {
            self.alpha[t] < self.r
        } else {
            self.alpha[t] > 0.0
        }
    }

    fn in_low(&self, t: usize) -> bool {
        if self.y[t] > 0.0 {
            self.alpha[t] > 0.0
        } else {
            self.alpha[t] < self.r
        }
    }

    /// Maximal violating pair `(i, j)` and the violation `m − M`.
    fn select_pair(&self) -> Option<(usize, usize, f64)> {
        let (mut i, mut gmax) = (None, f64::NEG_INFINITY);
        let (mut j, mut gmin) = (None, f64::INFINITY);
        for t in 0..self.alpha.len() {
            let v = -self.y[t] * self.grad[t];
            if self.in_up(t) && v > gmax {
                gmax = v;
                i = Some(t);
            }
            if self.in_low(t) && v < gmin {
                gmin = v;
                j = Some(t);
            }
        }
        Some((i?, j?, gmax - gmin))
    }

    fn run(&mut self, cfg: &SolverConfig, progress: &mut dyn FnMut(Progress)) -> Result<usize> {
        let mut iter = 0usize;
        loop {
            let Some((i, j, violation)) = self.select_pair() else {
                return Ok(iter);
            };
            let done = violation < cfg.tolerance;
            if cfg.progress_every > 0 && (done || iter.is_multiple_of(cfg.progress_every)) {
                progress(Progress {
                    iteration: iter,
                    objective: self.dual_objective(),
                    max_violation: violation,
                });
            }
            if done {
                return Ok(iter);
            }
            if iter >= cfg.max_iter {
                return Err(Error::NonConvergence {
                    iterations: iter,
                    objective: self.dual_objective(),
                    violation,
                });
            }
            self.update_pair(i, j);
            iter += 1;
        }
    }

    fn update_pair(&mut self, i: usize, j: usize) {
        let (yi, yj, r) = (self.y[i], self.y[j], self.r);
        let (qd_i, qd_j) = (self.diag[i], self.diag[j]);
        let (ki, kj) = self.km.rows(i, j);
        let q_ij = yi * yj * ki[j];
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        let (gi, gj) = (self.grad[i], self.grad[j]);

        if yi != yj {
            let quad = (qd_i + qd_j + 2.0 * q_ij).max(TAU);
            let delta = (-gi - gj) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > r {
                    ai = r;
                    aj = r - diff;
                }
            } else if aj > r {
                aj = r;
                ai = r + diff;
            }
        } else {
            let quad = (qd_i + qd_j - 2.0 * q_ij).max(TAU);
            let delta = (gi - gj) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > r {
                if ai > r {
                    ai = r;
                    aj = sum - r;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > r {
                if aj > r {
                    aj = r;
                    ai = sum - r;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }

        let (di, dj) = (ai - old_i, aj - old_j);
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        // grad_t += Q_ti Δi + Q_tj Δj with Q_ts = y_t y_s K_ts
        let (ci, cj) = (yi * di, yj * dj);
        for (t, g) in self.grad.iter_mut().enumerate() {
            *g += self.y[t] * (ci * ki[t] + cj * kj[t]);
        }
    }

    /// `−(½ λᵀQλ − Σλ) = −½ Σ λ_t (grad_t − 1)`
    fn dual_objective(&self) -> f64 {
        -0.5 * self
            .alpha
            .iter()
            .zip(&self.grad)
            .map(|(a, g)| a * (g - 1.0))
            .sum::<f64>()
    }

    /// Offset `ρ` with `f(x) = Σ λ_t y_t K(x_t, x) − ρ`: mean of `y_t grad_t`
    /// over free vectors, else the midpoint of the feasible interval.
    fn rho(&self) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut sum_free) = (0usize, 0.0);
        for t in 0..self.alpha.len() {
            let yg = self.y[t] * self.grad[t];
            let a = self.alpha[t];
            if a >= self.r {
                if self.y[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if a <= 0.0 {
                if self.y[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum_free += yg;
            }
        }
        if free > 0 {
            sum_free / free as f64
        } else {
            (ub + lb) / 2.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor() -> TrainingSet {
        TrainingSet::from_dense(
            &[
                vec![0.0, 0.0],
                vec![1.0, 1.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
            ],
            vec![1, 1, -1, -1],
        )
        .unwrap()
    }

    fn tight() -> SolverConfig {
        SolverConfig {
            tolerance: 1e-10,
            progress_every: 1,
            ..Default::default()
        }
    }

    #[test]
    fn xor_is_solved_by_rbf() {
        let data = xor();
        let m = train_rbf(&data, 10.0, 1.0, &tight()).unwrap();
        for (x, &y) in data.x().iter().zip(data.y()) {
            let f = m.decision_value(x).unwrap();
            assert!(f * y > 0.0, "misclassified {x:?}: {f}");
        }
        assert!(m.decision_value(&data.x()[0]).unwrap() > 0.0);
        let sv = m.support_vectors().unwrap();
        assert_eq!(sv.indices, vec![0, 1, 2, 3]);
        assert!(sv.values.iter().all(|&l| l > 0.0 && l <= 10.0));
    }

    #[test]
    fn free_support_vectors_sit_on_the_margin() {
        let data = TrainingSet::from_dense(
            &[
                vec![0.0],
                vec![0.4],
                vec![1.0],
                vec![1.3],
                vec![2.2],
                vec![2.9],
            ],
            vec![-1, -1, 1, -1, 1, 1],
        )
        .unwrap();
        let r = 5.0;
        let m = train_rbf(&data, r, 0.8, &tight()).unwrap();
        let sv = m.support_vectors().unwrap();
        let mut free = 0;
        for (k, &t) in sv.indices.iter().enumerate() {
            if sv.values[k] < r - 1e-9 {
                free += 1;
                let f = m.decision_value(&data.x()[t]).unwrap();
                assert!((f - data.y()[t]).abs() < 1e-6, "free SV {t}: f={f}");
            }
        }
        assert!(free > 0);
    }

    #[test]
    fn dual_feasibility_and_monotone_trace() {
        let data = TrainingSet::from_dense(
            &[
                vec![0.1, 0.9],
                vec![0.5, 0.2],
                vec![-0.3, 0.4],
                vec![0.8, -0.6],
                vec![-1.0, -0.2],
                vec![0.0, 0.0],
                vec![0.6, 0.6],
            ],
            vec![1, -1, 1, -1, 1, -1, 1],
        )
        .unwrap();
        let mut trace = Vec::new();
        let m = train_kernel_with_progress(
            &data,
            1.0,
            Kernel::Rbf { alpha: 2.0 },
            &tight(),
            &mut |p| trace.push(p.objective),
        )
        .unwrap();
        assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-15), "{trace:?}");
        let sum: f64 = m.dual_coef().iter().sum();
        let abs: f64 = m.dual_coef().iter().map(|c| c.abs()).sum();
        assert!(sum.abs() <= 1e-8 * abs);
        assert!(m
            .dual_coef()
            .iter()
            .all(|c| c.abs() > 0.0 && c.abs() <= 1.0));
    }

    #[test]
    fn iteration_cap_reports_state() {
        let cfg = SolverConfig {
            max_iter: 1,
            tolerance: 1e-12,
            ..Default::default()
        };
        match train_rbf(&xor(), 10.0, 1.0, &cfg) {
            Err(Error::NonConvergence {
                iterations,
                violation,
                ..
            }) => {
                assert_eq!(iterations, 1);
                assert!(violation > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn self_kernel_decision() {
        let x = SparseVector::from_dense(&[0.5, -1.0]);
        let m = KernelSvmModel::from_parts(
            Kernel::Rbf { alpha: 3.0 },
            2,
            vec![x.clone()],
            vec![1.0],
            0.0,
            1.0,
            None,
            0.0,
        )
        .unwrap();
        assert_eq!(m.decision_value(&x).unwrap(), 1.0);
        assert!(m.decision_value(&SparseVector::from_dense(&[1.0])).is_err());
        assert!(matches!(m.support_vectors(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn prediction_is_order_invariant() {
        let rows = vec![
            vec![0.2, 0.1],
            vec![0.9, 0.8],
            vec![0.1, 0.7],
            vec![0.8, 0.1],
            vec![0.5, 0.5],
            vec![0.3, 0.9],
        ];
        let y = vec![1, 1, -1, -1, 1, -1];
        let a = train_rbf(
            &TrainingSet::from_dense(&rows, y.clone()).unwrap(),
            2.0,
            1.5,
            &tight(),
        )
        .unwrap();
        let perm = [3, 0, 5, 1, 4, 2];
        let prow: Vec<Vec<f64>> = perm.iter().map(|&p| rows[p].clone()).collect();
        let py: Vec<i8> = perm.iter().map(|&p| y[p]).collect();
        let b = train_rbf(
            &TrainingSet::from_dense(&prow, py).unwrap(),
            2.0,
            1.5,
            &tight(),
        )
        .unwrap();
        for gx in 0..=10 {
            for gy in 0..=10 {
                let p = SparseVector::from_dense(&[gx as f64 / 10.0, gy as f64 / 10.0]);
                let (fa, fb) = (a.decision_value(&p).unwrap(), b.decision_value(&p).unwrap());
                assert!((fa - fb).abs() < 1e-6);
            }
        }
    }
}
