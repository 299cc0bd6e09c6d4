//! Linear SVM with an unregularised bias.
//!
//! The dual `min_λ ½‖Σ λ_i y_i x_i‖² − Σ λ_i` over `0 ≤ λ_i ≤ R`, `Σ λ_i y_i = 0`
//! is solved by dual coordinate descent with `w` kept explicitly, so each
//! coordinate step costs one sparse row. The equality constraint is handled
//! by the method of multipliers: inner sweeps minimise the augmented dual
//! `… + μ s + ½ρ s²` with `s = Σ λ_i y_i`, which is a coordinate step against the
//! effective bias `μ + ρ s`; between sweeps `μ ← μ + ρ s`. Once `w` has
//! converged the bias is set to the midpoint of the exact minimiser set of the
//! primal in `h`.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::sparse::SparseVector;

use super::{
    check_regularization, Progress, SolverConfig, SupportMeasure, SupportReport, TrainingSet,
};

/// Multiplier updates before giving up.
const MAX_OUTER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel {
    pub(crate) w: Vec<f64>,
    pub(crate) bias: f64,
    pub(crate) r: f64,
    pub(crate) objective: f64,
}

impl LinearSvmModel {
    /// `objective` is the primal value recorded at training time.
    pub fn from_parts(w: Vec<f64>, bias: f64, r: f64, objective: f64) -> Result<Self> {
        check_regularization(r)?;
        if !bias.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite linear model parameters".into()));
        }
        Ok(Self {
            w,
            bias,
            r,
            objective,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn regularization(&self) -> f64 {
        self.r
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Primal objective reached during training.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    /// `w·x + h`
    pub fn decision_value(&self, x: &SparseVector) -> Result<f64> {
        if x.dim() != self.w.len() {
            return Err(Error::Domain(format!(
                "input dimension {} does not match model dimension {}",
                x.dim(),
                self.w.len()
            )));
        }
        Ok(x.dot_dense(&self.w) + self.bias)
    }

    pub fn predict(&self, x: &SparseVector) -> Result<u8> {
        self.decision_value(x).map(super::class_of)
    }

    /// Primal objective of this model on `data`.
    pub fn primal_objective(&self, data: &TrainingSet) -> Result<f64> {
        primal_objective(&self.w, self.bias, self.r, data)
    }

    /// Training points with functional margin `y_i (w·x_i + h) ≤ 1 + tolerance`.
    pub fn support_vectors(&self, data: &TrainingSet, tolerance: f64) -> Result<SupportReport> {
        if data.dim() != self.dim() {
            return Err(Error::Domain(
                "training set dimension does not match model".into(),
            ));
        }
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (t, (x, &y)) in data.x().iter().zip(data.y()).enumerate() {
            let margin = y * self.decision_value(x)?;
            if margin <= 1.0 + tolerance {
                indices.push(t);
                values.push(margin);
            }
        }
        Ok(SupportReport {
            indices,
            values,
            measure: SupportMeasure::FunctionalMargin,
        })
    }
}

pub fn primal_objective(w: &[f64], bias: f64, r: f64, data: &TrainingSet) -> Result<f64> {
    if w.len() != data.dim() {
        return Err(Error::Domain(
            "weight dimension does not match training set".into(),
        ));
    }
    let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let loss: f64 = data
        .x()
        .iter()
        .zip(data.y())
        .map(|(x, &y)| (1.0 - y * (x.dot_dense(w) + bias)).max(0.0))
        .sum();
    Ok(reg + r * loss)
}

pub fn train_linear(data: &TrainingSet, r: f64, cfg: &SolverConfig) -> Result<LinearSvmModel> {
    train_linear_with_progress(data, r, cfg, &mut |_| {})
}

/// `progress` is called after every multiplier update with the primal
/// objective at the current multiplier.
pub fn train_linear_with_progress(
    data: &TrainingSet,
    r: f64,
    cfg: &SolverConfig,
    progress: &mut dyn FnMut(Progress),
) -> Result<LinearSvmModel> {
    check_regularization(r)?;
    cfg.validate()?;
    let mut dcd = DualCoordinateDescent::new(data, r, cfg);
    let mut outer = 0usize;
    loop {
        dcd.solve()?;
        outer += 1;
        let shift = dcd.rho * dcd.s;
        if cfg.progress_every > 0 {
            progress(Progress {
                iteration: dcd.epochs,
                objective: dcd.primal(dcd.mu),
                max_violation: dcd.last_violation.max(shift.abs()),
            });
        }
        dcd.mu += shift;
        if shift.abs() < cfg.tolerance {
            break;
        }
        if outer >= MAX_OUTER {
            return Err(Error::NonConvergence {
                iterations: dcd.epochs,
                objective: dcd.primal(dcd.mu),
                violation: shift.abs(),
            });
        }
    }
    let margins: Vec<f64> = data.x().iter().map(|x| x.dot_dense(&dcd.w)).collect();
    let bias = optimal_bias(&margins, data.y());
    let objective = dcd.primal(bias);
    Ok(LinearSvmModel {
        w: dcd.w,
        bias,
        r,
        objective,
    })
}

/// Midpoint of `argmin_h Σ max(0, 1 − y_i (g_i + h))`.
///
/// The sum is piecewise linear with a kink at `y_i − g_i` for every point;
/// its right derivative starts at `−#positives` and rises by one at each
/// kink. Requires at least one point of each class.
pub fn optimal_bias(g: &[f64], y: &[f64]) -> f64 {
    let mut kinks: Vec<f64> = g.iter().zip(y).map(|(gi, yi)| yi - gi).collect();
    kinks.sort_unstable_by(f64::total_cmp);
    let mut slope = -(y.iter().filter(|&&v| v > 0.0).count() as i64);
    let mut i = 0;
    while i < kinks.len() {
        let v = kinks[i];
        while i < kinks.len() && kinks[i] == v {
            slope += 1;
            i += 1;
        }
        if slope > 0 {
            return v;
        }
        if slope == 0 {
            return match kinks.get(i) {
                Some(&next) => 0.5 * (v + next),
                None => v,
            };
        }
    }
    kinks.last().copied().unwrap_or(0.0)
}

/// Coordinate descent on the augmented dual. `λ`, `w` and `s` persist
/// between multiplier updates.
struct DualCoordinateDescent<'a> {
    data: &'a TrainingSet,
    r: f64,
    tolerance: f64,
    max_epochs: usize,
    rng: SeededRng,
    q_diag: Vec<f64>,
    lambda: Vec<f64>,
    w: Vec<f64>,
    s: f64,
    mu: f64,
    rho: f64,
    order: Vec<usize>,
    epochs: usize,
    last_violation: f64,
}

impl<'a> DualCoordinateDescent<'a> {
    fn new(data: &'a TrainingSet, r: f64, cfg: &SolverConfig) -> Self {
        let q_diag: Vec<f64> = data.x().iter().map(SparseVector::squared_norm).collect();
        let mean = q_diag.iter().sum::<f64>() / q_diag.len().max(1) as f64;
        Self {
            data,
            r,
            tolerance: cfg.tolerance,
            max_epochs: cfg.max_iter,
            rng: SeededRng::new(cfg.seed),
            q_diag,
            lambda: vec![0.0; data.len()],
            w: vec![0.0; data.dim()],
            s: 0.0,
            mu: 0.0,
            rho: if mean > 0.0 { mean } else { 1.0 },
            order: (0..data.len()).collect(),
            epochs: 0,
            last_violation: f64::INFINITY,
        }
    }

    /// Sweeps until every projected gradient is below tolerance in magnitude.
    fn solve(&mut self) -> Result<()> {
        let (x, y, r, rho) = (self.data.x(), self.data.y(), self.r, self.rho);
        let mut local_epochs = 0usize;
        loop {
            self.rng.shuffle(&mut self.order);
            let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
            for &i in &self.order {
                let h = self.mu + rho * self.s;
                let g = y[i] * (x[i].dot_dense(&self.w) + h) - 1.0;
                let a = self.lambda[i];
                let pg = if a <= 0.0 {
                    g.min(0.0)
                } else if a >= r {
                    g.max(0.0)
                } else {
                    g
                };
                pg_max = pg_max.max(pg);
                pg_min = pg_min.min(pg);
                if pg == 0.0 {
                    continue;
                }
                let new = (a - g / (self.q_diag[i] + rho)).clamp(0.0, r);
                if new != a {
                    let delta = new - a;
                    x[i].axpy_into(delta * y[i], &mut self.w);
                    self.s += delta * y[i];
                    self.lambda[i] = new;
                }
            }
            self.epochs += 1;
            local_epochs += 1;
            self.last_violation = pg_max.max(-pg_min);
            if self.last_violation < self.tolerance {
                // refresh s against drift from incremental updates
                self.s = self.lambda.iter().zip(y).map(|(l, yi)| l * yi).sum();
                return Ok(());
            }
            if local_epochs >= self.max_epochs {
                return Err(Error::NonConvergence {
                    iterations: self.epochs,
                    objective: self.primal(self.mu),
                    violation: self.last_violation,
                });
            }
        }
    }

    fn primal(&self, h: f64) -> f64 {
        primal_objective(&self.w, h, self.r, self.data).unwrap_or(f64::NAN)
    }
}
