//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use fnd_core::rng::SeededRng;
use fnd_core::svm::{rbf_kernel, Kernel};
use fnd_core::SparseVector;

pub fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/two_topic_fixture.csv")
}

/// Small soft-margin problem with ±1 labels.
#[derive(Debug, Clone)]
pub struct Instance {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<i8>,
    pub r: f64,
    pub kernel: Kernel,
}

impl Instance {
    pub fn sparse_x(&self) -> Vec<SparseVector> {
        self.x.iter().map(|v| SparseVector::from_dense(v)).collect()
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    pub fn k(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kernel {
            Kernel::Linear => a.iter().zip(b).map(|(u, v)| u * v).sum(),
            Kernel::Rbf { alpha } => rbf_kernel(
                &SparseVector::from_dense(a),
                &SparseVector::from_dense(b),
                alpha,
            )
            .unwrap(),
        }
    }

    /// Evaluation grid covering the data box with a margin.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let lo: Vec<f64> = (0..d)
            .map(|j| self.x.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min) - 0.5)
            .collect();
        let hi: Vec<f64> = (0..d)
            .map(|j| {
                self.x
                    .iter()
                    .map(|p| p[j])
                    .fold(f64::NEG_INFINITY, f64::max)
                    + 0.5
            })
            .collect();
        let mut out = vec![vec![]];
        for j in 0..d {
            let mut next = Vec::new();
            for prefix in &out {
                for s in 0..per_axis {
                    let t = s as f64 / (per_axis - 1) as f64;
                    let mut p = prefix.clone();
                    p.push(lo[j] + t * (hi[j] - lo[j]));
                    next.push(p);
                }
            }
            out = next;
        }
        out
    }
}

/// Random instance with both classes present.
pub fn random_instance(rng: &mut SeededRng, r: f64, rbf: bool) -> Instance {
    let n = 4 + rng.below(9);
    let d = 1 + rng.below(3);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| 2.0 * rng.uniform() - 1.0).collect())
        .collect();
    let mut y: Vec<i8> = (0..n)
        .map(|_| if rng.uniform() < 0.5 { 1 } else { -1 })
        .collect();
    y[0] = 1;
    y[1] = -1;
    let kernel = if rbf {
        Kernel::Rbf {
            alpha: 0.5 + 2.0 * rng.uniform(),
        }
    } else {
        Kernel::Linear
    };
    Instance { x, y, r, kernel }
}

/// High-precision solution of the dual by accelerated projected gradient.
pub struct DualSolution {
    pub lambda: Vec<f64>,
    /// `Σλ − ½λᵀQλ` (maximisation form).
    pub objective: f64,
    pub bias: f64,
    coef: Vec<f64>,
}

impl DualSolution {
    pub fn decision(&self, inst: &Instance, p: &[f64]) -> f64 {
        inst.x
            .iter()
            .zip(&self.coef)
            .map(|(xj, c)| c * inst.k(xj, p))
            .sum::<f64>()
            + self.bias
    }
}

/// Euclidean projection onto `{0 ≤ λ ≤ R, Σ y λ = 0}`: `λ(μ) = clip(v − μy, 0, R)`
/// with `μ` the root of the piecewise-linear, non-increasing `Σ y λ(μ)`,
/// located exactly between adjacent breakpoints.
fn project(v: &[f64], y: &[f64], r: f64) -> Vec<f64> {
    let at = |mu: f64| -> f64 {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| yi * (vi - mu * yi).clamp(0.0, r))
            .sum()
    };
    let mut knots: Vec<f64> = v
        .iter()
        .zip(y)
        .flat_map(|(vi, yi)| [vi * yi, (vi - r) * yi])
        .collect();
    knots.sort_by(f64::total_cmp);
    let vals: Vec<f64> = knots.iter().map(|&m| at(m)).collect();
    let mu = match vals.iter().position(|&s| s <= 0.0) {
        Some(0) => knots[0],
        Some(k) => {
            let (m0, m1, s0, s1) = (knots[k - 1], knots[k], vals[k - 1], vals[k]);
            if s0 == s1 {
                m0
            } else {
                m0 + (m1 - m0) * s0 / (s0 - s1)
            }
        }
        None => knots[knots.len() - 1],
    };
    v.iter()
        .zip(y)
        .map(|(vi, yi)| (vi - mu * yi).clamp(0.0, r))
        .collect()
}

pub fn solve_dual(inst: &Instance) -> DualSolution {
    let n = inst.x.len();
    let y: Vec<f64> = inst.y.iter().map(|&v| v as f64).collect();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            q[i * n + j] = y[i] * y[j] * inst.k(&inst.x[i], &inst.x[j]);
        }
    }
    let qv = |l: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| q[i * n + j] * l[j]).sum())
            .collect()
    };
    let f = |l: &[f64]| -> f64 {
        let ql = qv(l);
        0.5 * l.iter().zip(&ql).map(|(a, b)| a * b).sum::<f64>() - l.iter().sum::<f64>()
    };
    // Gershgorin bound on the largest eigenvalue
    let lip = (0..n)
        .map(|i| (0..n).map(|j| q[i * n + j].abs()).sum::<f64>())
        .fold(1e-12, f64::max);
    // P(w(λ), h*) − D(λ) for feasible λ
    let gap = |l: &[f64], fl: f64| -> f64 {
        let ql = qv(l);
        let g: Vec<f64> = ql.iter().zip(&y).map(|(a, yi)| a * yi).collect();
        let h = optimal_bias(&g, &y, inst.r);
        let half_norm = 0.5 * l.iter().zip(&ql).map(|(a, b)| a * b).sum::<f64>();
        let loss: f64 = g
            .iter()
            .zip(&y)
            .map(|(gi, yi)| (1.0 - yi * (gi + h)).max(0.0))
            .sum();
        half_norm + inst.r * loss + fl
    };
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut fx = f(&x);
    for it in 0..1_000_000 {
        let g = qv(&z);
        let step: Vec<f64> = z
            .iter()
            .zip(&g)
            .map(|(zi, gi)| zi - (gi - 1.0) / lip)
            .collect();
        let nx = project(&step, &y, inst.r);
        let fnx = f(&nx);
        if fnx > fx {
            if t == 1.0 {
                // plain projected step failed to descend: rounding floor
                break;
            }
            // adaptive restart
            t = 1.0;
            z = x.clone();
            continue;
        }
        let nt = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = nx
            .iter()
            .zip(&x)
            .map(|(a, b)| a + (t - 1.0) / nt * (a - b))
            .collect();
        x = nx;
        t = nt;
        fx = fnx;
        if it % 10 == 0 && gap(&x, fx) <= 1e-9 * fx.abs().max(1.0) {
            break;
        }
    }
    let coef: Vec<f64> = x.iter().zip(&y).map(|(l, yi)| l * yi).collect();
    let g: Vec<f64> = inst
        .x
        .iter()
        .map(|p| {
            inst.x
                .iter()
                .zip(&coef)
                .map(|(xj, c)| c * inst.k(xj, p))
                .sum()
        })
        .collect();
    let bias = optimal_bias(&g, &y, inst.r);
    DualSolution {
        objective: -fx,
        lambda: x,
        bias,
        coef,
    }
}

/// Midpoint of the set of `h` minimising `Σ max(0, 1 − y_i (g_i + h))`.
/// The function is convex piecewise linear with kinks at `h = y_i − g_i`.
pub fn optimal_bias(g: &[f64], y: &[f64], r: f64) -> f64 {
    let loss = |h: f64| -> f64 {
        r * g
            .iter()
            .zip(y)
            .map(|(gi, yi)| (1.0 - yi * (gi + h)).max(0.0))
            .sum::<f64>()
    };
    let mut kinks: Vec<f64> = g.iter().zip(y).map(|(gi, yi)| yi - gi).collect();
    kinks.sort_by(f64::total_cmp);
    let best = kinks.iter().map(|&h| loss(h)).fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * best.abs().max(1.0);
    let optimal: Vec<f64> = kinks
        .iter()
        .copied()
        .filter(|&h| loss(h) <= best + tol)
        .collect();
    0.5 * (optimal[0] + optimal[optimal.len() - 1])
}

pub fn mann_whitney(y: &[u8], s: &[f64]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &yi) in y.iter().enumerate() {
        for (j, &yj) in y.iter().enumerate() {
            if yi == 1 && yj == 0 {
                pairs += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / pairs
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference when both are tiny.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `f` at `x` with step `h`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Two Gaussian blobs, `per_class` points each, centred at ±`offset` on every axis.
pub fn blobs(per_class: usize, dim: usize, offset: f64, seed: u64) -> (Vec<SparseVector>, Vec<u8>) {
    let mut rng = SeededRng::new(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for label in [0u8, 1] {
        let c = if label == 1 { offset } else { -offset };
        for _ in 0..per_class {
            let v: Vec<f64> = (0..dim).map(|_| c + rng.normal()).collect();
            x.push(SparseVector::from_dense(&v));
            y.push(label);
        }
    }
    (x, y)
}
