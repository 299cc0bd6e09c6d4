//! Exact t-SNE in two or three output dimensions.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{stage, SeededRng};
use crate::sparse::SparseVector;

/// Relative perplexity tolerance of the bandwidth search.
pub const PERPLEXITY_REL_TOL: f64 = 1e-3;
/// Bisection budget of the bandwidth search.
pub const MAX_CALIBRATION_STEPS: usize = 100;
/// KL is recorded every this many iterations, plus the first and last.
pub const KL_TRACE_EVERY: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    pub out_dims: usize,
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub momentum_early: f64,
    pub momentum_late: f64,
    /// Iteration at which momentum switches from early to late.
    pub momentum_switch: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    /// Standard deviation of the Gaussian initialisation.
    pub init_std: f64,
    pub seed: u64,
    pub subsample: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            out_dims: 2,
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            momentum_early: 0.5,
            momentum_late: 0.8,
            momentum_switch: 250,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            init_std: 1e-4,
            seed: 42,
            subsample: 2000,
        }
    }
}

impl TsneConfig {
    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.out_dims != 2 && self.out_dims != 3 {
            return bad(format!(
                "t-SNE output dimension must be 2 or 3, got {}",
                self.out_dims
            ));
        }
        if !(self.perplexity.is_finite() && self.perplexity > 0.0) {
            return bad(format!(
                "perplexity must be positive, got {}",
                self.perplexity
            ));
        }
        if self.iterations == 0 {
            return bad("t-SNE iterations must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        for (name, m) in [
            ("momentum_early", self.momentum_early),
            ("momentum_late", self.momentum_late),
        ] {
            if !(0.0..1.0).contains(&m) {
                return bad(format!("{name} must be in [0, 1), got {m}"));
            }
        }
        if !(self.early_exaggeration.is_finite() && self.early_exaggeration >= 1.0) {
            return bad(format!(
                "early exaggeration must be >= 1, got {}",
                self.early_exaggeration
            ));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return bad(format!(
                "initial spread must be positive, got {}",
                self.init_std
            ));
        }
        if self.subsample < 4 {
            return bad(format!(
                "subsample must be at least 4, got {}",
                self.subsample
            ));
        }
        self.check_feasible(self.subsample)
    }

    /// `perplexity < (n − 1) / 3`
    pub fn check_feasible(&self, n: usize) -> Result<()> {
        let bound = (n as f64 - 1.0) / 3.0;
        if self.perplexity >= bound {
            return Err(Error::Config(format!(
                "perplexity {} is infeasible for {n} points (must be below {bound:.3})",
                self.perplexity
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// Row-major `n × dims`.
    pub coords: Vec<f64>,
    pub dims: usize,
    pub labels: Vec<u8>,
    /// Positions of the embedded points in the input.
    pub source_indices: Vec<usize>,
    pub initial_kl: f64,
    pub final_kl: f64,
    /// `(iteration, KL(P‖Q))`; iteration 0 is the initial layout.
    pub kl_trace: Vec<(usize, f64)>,
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dims..(i + 1) * self.dims]
    }

    /// One line per point: coordinates then label, tab separated, no header.
    pub fn write_tsv(&self, mut w: impl Write) -> std::io::Result<()> {
        for (i, label) in self.labels.iter().enumerate() {
            for c in self.point(i) {
                write!(w, "{c}\t")?;
            }
            writeln!(w, "{label}")?;
        }
        Ok(())
    }
}

/// `p_j ∝ exp(−d_j / (2σ²))` over one row of squared distances.
pub fn conditional_distribution(sq_dists: &[f64], sigma: f64) -> Vec<f64> {
    conditional_with_beta(sq_dists, 1.0 / (2.0 * sigma * sigma)).0
}

/// Returns the distribution and its perplexity `exp(H)` (H in nats).
fn conditional_with_beta(sq_dists: &[f64], beta: f64) -> (Vec<f64>, f64) {
    let d_min = sq_dists.iter().copied().fold(f64::INFINITY, f64::min);
    let mut p: Vec<f64> = sq_dists
        .iter()
        .map(|d| (-beta * (d - d_min)).exp())
        .collect();
    let z: f64 = p.iter().sum();
    let mut entropy = 0.0;
    for v in &mut p {
        *v /= z;
        if *v > 0.0 {
            entropy -= *v * v.ln();
        }
    }
    (p, entropy.exp())
}

fn calibrate_beta(sq_dists: &[f64], target: f64) -> Result<(f64, Vec<f64>)> {
    if sq_dists.len() < 2 {
        return Err(Error::Calibration(
            "bandwidth search needs at least two neighbours".into(),
        ));
    }
    if sq_dists.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::Calibration(
            "squared distances must be finite and non-negative".into(),
        ));
    }
    if sq_dists.iter().all(|&d| d == 0.0) {
        return Err(Error::Calibration(
            "all distances in the row are zero".into(),
        ));
    }
    if !(target.is_finite() && target > 0.0) || target > sq_dists.len() as f64 {
        return Err(Error::Calibration(format!(
            "target perplexity {target} is infeasible for a row of {} neighbours",
            sq_dists.len()
        )));
    }
    let tol = PERPLEXITY_REL_TOL * target;
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut beta = 1.0;
    let (mut p, mut perp) = conditional_with_beta(sq_dists, beta);
    for _ in 0..MAX_CALIBRATION_STEPS {
        if (perp - target).abs() <= tol {
            break;
        }
        if perp > target {
            lo = beta;
            beta = if hi.is_finite() {
                0.5 * (beta + hi)
            } else {
                beta * 2.0
            };
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
        (p, perp) = conditional_with_beta(sq_dists, beta);
    }
    Ok((beta, p))
}

/// Finds σ so the conditional distribution over `sq_dists` has perplexity
/// `target` within [`PERPLEXITY_REL_TOL`], or returns the last bisection
/// point after [`MAX_CALIBRATION_STEPS`].
pub fn calibrate_bandwidth(sq_dists: &[f64], target: f64) -> Result<f64> {
    let (beta, _) = calibrate_beta(sq_dists, target)?;
    Ok((1.0 / (2.0 * beta)).sqrt())
}

/// Row-major `n × n` squared Euclidean distances.
pub fn squared_distances(points: &[SparseVector]) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    d.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        for (j, out) in row.iter_mut().enumerate() {
            if i != j {
                *out = points[i].squared_distance(&points[j]);
            }
        }
    });
    d
}

/// Symmetrised joint affinities `p_ij = (p_{j|i} + p_{i|j}) / 2n`, row-major `n × n`.
pub fn joint_probabilities(points: &[SparseVector], perplexity: f64) -> Result<Vec<f64>> {
    let n = points.len();
    let dist = squared_distances(points);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let others: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| dist[i * n + j])
                .collect();
            calibrate_beta(&others, perplexity).map(|(_, p)| p)
        })
        .collect::<Result<_>>()?;
    let mut cond = vec![0.0; n * n];
    for (i, row) in rows.iter().enumerate() {
        let targets = (0..n).filter(|&j| j != i);
        for (j, v) in targets.zip(row) {
            cond[i * n + j] = *v;
        }
    }
    let scale = 1.0 / (2.0 * n as f64);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) * scale;
        }
    }
    Ok(p)
}

/// Student-t kernel numerators `1 / (1 + ‖y_i − y_j‖²)` (zero diagonal) and their sum.
fn student_t(y: &[f64], n: usize, dims: usize) -> (Vec<f64>, f64) {
    let mut num = vec![0.0; n * n];
    num.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let yi = &y[i * dims..(i + 1) * dims];
        for (j, out) in row.iter_mut().enumerate() {
            if i != j {
                let yj = &y[j * dims..(j + 1) * dims];
                let d2: f64 = yi.iter().zip(yj).map(|(a, b)| (a - b) * (a - b)).sum();
                *out = 1.0 / (1.0 + d2);
            }
        }
    });
    let row_sums: Vec<f64> = num.par_chunks(n).map(|r| r.iter().sum()).collect();
    let z = row_sums.iter().sum();
    (num, z)
}

fn kl_from(p: &[f64], num: &[f64], z: f64) -> f64 {
    p.iter()
        .zip(num)
        .filter(|(&pij, _)| pij > 0.0)
        .map(|(&pij, &nij)| pij * (pij / (nij / z).max(f64::MIN_POSITIVE)).ln())
        .sum()
}

/// `KL(P‖Q)` for the layout `y` (row-major `n × dims`).
pub fn kl_divergence(p: &[f64], y: &[f64], n: usize, dims: usize) -> f64 {
    let (num, z) = student_t(y, n, dims);
    kl_from(p, &num, z)
}

/// `KL(P‖Q)` and its gradient `4 Σ_j (p_ij − q_ij)(y_i − y_j) / (1 + ‖y_i − y_j‖²)`.
pub fn kl_and_gradient(p: &[f64], y: &[f64], n: usize, dims: usize) -> (f64, Vec<f64>) {
    let (num, z) = student_t(y, n, dims);
    let grad = gradient_from(p, y, &num, z, n, dims, 1.0);
    (kl_from(p, &num, z), grad)
}

fn gradient_from(
    p: &[f64],
    y: &[f64],
    num: &[f64],
    z: f64,
    n: usize,
    dims: usize,
    exaggeration: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; n * dims];
    grad.par_chunks_mut(dims).enumerate().for_each(|(i, g)| {
        let yi = &y[i * dims..(i + 1) * dims];
        for j in 0..n {
            if i == j {
                continue;
            }
            let nij = num[i * n + j];
            let coef = 4.0 * (exaggeration * p[i * n + j] - nij / z) * nij;
            let yj = &y[j * dims..(j + 1) * dims];
            for k in 0..dims {
                g[k] += coef * (yi[k] - yj[k]);
            }
        }
    });
    grad
}

/// Label-stratified subsample of at most `max` indices, ascending.
pub fn stratified_subsample(labels: &[u8], max: usize, seed: u64) -> Vec<usize> {
    let n = labels.len();
    if n <= max {
        return (0..n).collect();
    }
    let mut classes: Vec<u8> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let members: Vec<Vec<usize>> = classes
        .iter()
        .map(|&c| (0..n).filter(|&i| labels[i] == c).collect())
        .collect();
    // Largest-remainder apportionment of `max` across classes.
    let exact: Vec<f64> = members
        .iter()
        .map(|m| max as f64 * m.len() as f64 / n as f64)
        .collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let short = max - quota.iter().sum::<usize>();
    for &c in order.iter().take(short) {
        quota[c] += 1;
    }
    let mut rng = SeededRng::for_stage(seed, stage::SUBSAMPLE);
    let mut chosen = Vec::with_capacity(max);
    for (m, q) in members.iter().zip(quota) {
        let perm = rng.permutation(m.len());
        chosen.extend(perm[..q].iter().map(|&k| m[k]));
    }
    chosen.sort_unstable();
    chosen
}

/// Runs t-SNE on a stratified subsample of `points`.
pub fn tsne(points: &[SparseVector], labels: &[u8], cfg: &TsneConfig) -> Result<Embedding> {
    cfg.validate()?;
    if points.len() != labels.len() {
        return Err(Error::Domain(format!(
            "{} points but {} labels",
            points.len(),
            labels.len()
        )));
    }
    let chosen = stratified_subsample(labels, cfg.subsample, cfg.seed);
    let n = chosen.len();
    if n < 4 {
        return Err(Error::Precondition(format!(
            "t-SNE needs at least 4 points, got {n}"
        )));
    }
    cfg.check_feasible(n)?;
    let dim = points[chosen[0]].dim();
    if chosen.iter().any(|&i| points[i].dim() != dim) {
        return Err(Error::Domain("t-SNE inputs have mixed dimensions".into()));
    }
    let subset: Vec<SparseVector> = chosen.iter().map(|&i| points[i].clone()).collect();
    let p = joint_probabilities(&subset, cfg.perplexity)?;

    let dims = cfg.out_dims;
    let mut rng = SeededRng::for_stage(cfg.seed, stage::PROJECTION);
    let mut y: Vec<f64> = (0..n * dims).map(|_| rng.normal() * cfg.init_std).collect();
    let mut update = vec![0.0; n * dims];
    let mut gains = vec![1.0f64; n * dims];

    let initial_kl = kl_divergence(&p, &y, n, dims);
    let mut kl_trace = vec![(0, initial_kl)];
    for iter in 0..cfg.iterations {
        let exaggeration = if iter < cfg.exaggeration_iters {
            cfg.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < cfg.momentum_switch {
            cfg.momentum_early
        } else {
            cfg.momentum_late
        };
        let (num, z) = student_t(&y, n, dims);
        let grad = gradient_from(&p, &y, &num, z, n, dims, exaggeration);
        for k in 0..n * dims {
            gains[k] = if (grad[k] > 0.0) != (update[k] > 0.0) {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(0.01)
            };
            update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * grad[k];
            y[k] += update[k];
        }
        for d in 0..dims {
            let mean = (0..n).map(|i| y[i * dims + d]).sum::<f64>() / n as f64;
            for i in 0..n {
                y[i * dims + d] -= mean;
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training(format!(
                "t-SNE diverged at iteration {}",
                iter + 1
            )));
        }
        let done = iter + 1;
        if done % KL_TRACE_EVERY == 0 || done == cfg.iterations {
            kl_trace.push((done, kl_divergence(&p, &y, n, dims)));
        }
    }
    let final_kl = kl_trace.last().map(|t| t.1).unwrap_or(initial_kl);
    Ok(Embedding {
        coords: y,
        dims,
        labels: chosen.iter().map(|&i| labels[i]).collect(),
        source_indices: chosen,
        initial_kl,
        final_kl,
        kl_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entropy_perplexity(p: &[f64]) -> f64 {
        (-p.iter()
            .filter(|v| **v > 0.0)
            .map(|v| v * v.ln())
            .sum::<f64>())
        .exp()
    }

    #[test]
    fn equidistant_pair_is_uniform() {
        let sigma = calibrate_bandwidth(&[3.0, 3.0], 2.0).unwrap();
        let p = conditional_distribution(&[3.0, 3.0], sigma);
        assert_eq!(p, vec![0.5, 0.5]);
        assert!((entropy_perplexity(&p) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn calibrated_row_hits_target_perplexity() {
        for target in [1.2, 2.0, 2.7] {
            let sigma = calibrate_bandwidth(&[1.0, 4.0, 9.0], target).unwrap();
            let p = conditional_distribution(&[1.0, 4.0, 9.0], sigma);
            assert!(
                (entropy_perplexity(&p) - target).abs() <= 1e-3 * target,
                "target {target}"
            );
        }
    }

    #[test]
    fn calibration_errors() {
        assert!(matches!(
            calibrate_bandwidth(&[0.0, 0.0, 0.0], 2.0),
            Err(Error::Calibration(_))
        ));
        assert!(matches!(
            calibrate_bandwidth(&[1.0, 4.0, 9.0], 3.5),
            Err(Error::Calibration(_))
        ));
        assert!(matches!(
            calibrate_bandwidth(&[1.0], 1.0),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(TsneConfig::default().validate().is_ok());
        let bad = TsneConfig {
            out_dims: 4,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let cfg = TsneConfig {
            perplexity: 10_000.0,
            ..Default::default()
        };
        assert!(matches!(cfg.check_feasible(100), Err(Error::Config(_))));
        assert!(TsneConfig {
            perplexity: 30.0,
            ..Default::default()
        }
        .check_feasible(91)
        .is_err());
        assert!(TsneConfig {
            perplexity: 30.0,
            ..Default::default()
        }
        .check_feasible(92)
        .is_ok());
    }

    #[test]
    fn subsample_is_stratified_and_sorted() {
        let labels: Vec<u8> = (0..300).map(|i| u8::from(i % 3 == 0)).collect();
        let s = stratified_subsample(&labels, 30, 7);
        assert_eq!(s.len(), 30);
        assert_eq!(s.iter().filter(|&&i| labels[i] == 1).count(), 10);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s, stratified_subsample(&labels, 30, 7));
        assert_eq!(
            stratified_subsample(&labels[..10], 30, 7),
            (0..10).collect::<Vec<_>>()
        );
    }

    #[test]
    fn tsv_shape() {
        let e = Embedding {
            coords: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            dims: 3,
            labels: vec![0, 1],
            source_indices: vec![0, 1],
            initial_kl: 1.0,
            final_kl: 0.5,
            kl_trace: vec![],
        };
        let mut out = Vec::new();
        e.write_tsv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "1\t2\t3\t0\n4\t5\t6\t1\n");
    }

    #[test]
    fn small_run_is_reproducible_and_finite() {
        let pts: Vec<SparseVector> = (0..20)
            .map(|i| {
                SparseVector::from_dense(&[
                    (i % 2) as f64 * 5.0 + (i as f64 * 0.3).sin(),
                    (i as f64).cos(),
                ])
            })
            .collect();
        let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let cfg = TsneConfig {
            perplexity: 5.0,
            iterations: 200,
            ..Default::default()
        };
        let a = tsne(&pts, &labels, &cfg).unwrap();
        let b = tsne(&pts, &labels, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.coords.iter().all(|c| c.is_finite()));
        assert!(a.kl_trace.iter().all(|&(_, kl)| kl >= 0.0));
        assert_eq!(a.kl_trace.first().unwrap().0, 0);
        assert_eq!(a.kl_trace.last().unwrap().0, 200);
    }
}
