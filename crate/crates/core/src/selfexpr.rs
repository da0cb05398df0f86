//! Sparse self-expression over the expected Gram matrix.
//!
//! Column `j` solves `min_c ℓ_j(c) + λ‖c‖₁` subject to `c_j = 0`, where
//! `ℓ_j(c) = G_jj − 2⟨G_{:,j}, c⟩ + cᵀGc` is the expected squared residual of
//! expressing gradient `j` by the others. The columns decouple, so the global
//! problem is solved column by column.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sorted_eigenvalues;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 20_000;
pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-6;
pub const DEFAULT_KKT_TOL: f64 = 1e-6;
/// Below this smallest Gram eigenvalue the minimiser may not be unique.
pub const UNIQUENESS_EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSolution {
    pub coef: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_violation: f64,
    /// Penalized objective after each full sweep (index 0 is the start point).
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfExpressionSolution {
    pub c: DMatrix<f64>,
    pub lambda: f64,
    pub residuals: Vec<f64>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
    pub kkt_gaps: Vec<f64>,
    pub support_threshold: f64,
    /// False when the Gram matrix is numerically singular.
    pub unique: bool,
}

impl SelfExpressionSolution {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    /// Entries with `|C_kj| > τ · max|C|`.
    pub fn support_size(&self) -> usize {
        support_size(&self.c, self.support_threshold)
    }

    pub fn objective(&self) -> f64 {
        self.residuals.iter().sum::<f64>() + self.lambda * self.c.iter().map(|v| v.abs()).sum::<f64>()
    }
}

pub fn support_size(c: &DMatrix<f64>, tau: f64) -> usize {
    let thr = tau * c.amax();
    if c.amax() == 0.0 {
        return 0;
    }
    c.iter().filter(|v| v.abs() > thr).count()
}

fn validate_gram(g: &DMatrix<f64>, j: usize) -> Result<()> {
    if g.nrows() != g.ncols() {
        return Err(Error::DimensionMismatch(format!("Gram is {}x{}", g.nrows(), g.ncols())));
    }
    if j >= g.nrows() {
        return Err(Error::InvalidArgument(format!("feature {j} out of range")));
    }
    if !g.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("Gram matrix".into()));
    }
    let asym = (g - g.transpose()).amax();
    if asym > 1e-9 * g.amax().max(1.0) {
        return Err(Error::InvalidArgument(format!("Gram matrix not symmetric ({asym:.3e})")));
    }
    Ok(())
}

/// `ℓ_j(c) = G_jj − 2⟨G_{:,j}, c⟩ + cᵀGc`, clamped at zero.
pub fn column_loss(g: &DMatrix<f64>, j: usize, c: &[f64]) -> f64 {
    let cv = DVector::from_column_slice(c);
    let gc = g * &cv;
    (g[(j, j)] - 2.0 * g.column(j).dot(&cv) + cv.dot(&gc)).max(0.0)
}

fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Largest stationarity violation of the Lasso optimality conditions.
pub fn kkt_violation(g: &DMatrix<f64>, j: usize, c: &[f64], lambda: f64) -> f64 {
    let cv = DVector::from_column_slice(c);
    let gc = g * &cv;
    let mut worst: f64 = 0.0;
    for k in 0..g.nrows() {
        if k == j {
            continue;
        }
        let grad = 2.0 * (gc[k] - g[(k, j)]);
        let v = if c[k] != 0.0 {
            (grad + lambda * c[k].signum()).abs()
        } else {
            (grad.abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

fn objective(g: &DMatrix<f64>, j: usize, c: &[f64], lambda: f64) -> f64 {
    column_loss(g, j, c) + lambda * c.iter().map(|v| v.abs()).sum::<f64>()
}

/// Cyclic coordinate descent for one column, optionally warm-started.
pub fn solve_penalized_column_from(
    g: &DMatrix<f64>,
    j: usize,
    lambda: f64,
    tol: f64,
    max_iter: usize,
    init: Option<&[f64]>,
) -> Result<ColumnSolution> {
    validate_gram(g, j)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let n = g.nrows();
    let mut c = match init {
        Some(x) if x.len() == n => x.to_vec(),
        Some(x) => {
            return Err(Error::DimensionMismatch(format!("warm start has {} entries, expected {n}", x.len())))
        }
        None => vec![0.0; n],
    };
    c[j] = 0.0;
    let mut q: Vec<f64> = (g * DVector::from_column_slice(&c)).iter().copied().collect();
    let mut trace = vec![objective(g, j, &c, lambda)];
    let mut converged = false;
    let mut iterations = 0;
    let half = 0.5 * lambda;
    while iterations < max_iter {
        iterations += 1;
        let mut max_delta: f64 = 0.0;
        for k in 0..n {
            if k == j {
                continue;
            }
            let gkk = g[(k, k)];
            let new = if gkk > 0.0 {
                soft(g[(k, j)] - (q[k] - gkk * c[k]), half) / gkk
            } else {
                0.0
            };
            let delta = new - c[k];
            if delta != 0.0 {
                for (qi, gi) in q.iter_mut().zip(g.column(k).iter()) {
                    *qi += delta * gi;
                }
                c[k] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        trace.push(objective(g, j, &c, lambda));
        if max_delta < tol {
            converged = true;
            break;
        }
    }
    Ok(ColumnSolution {
        residual: column_loss(g, j, &c),
        kkt_violation: kkt_violation(g, j, &c, lambda),
        coef: c,
        iterations,
        converged,
        objective_trace: trace,
    })
}

pub fn solve_penalized_column(
    g: &DMatrix<f64>,
    j: usize,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ColumnSolution> {
    solve_penalized_column_from(g, j, lambda, tol, max_iter, None)
}

/// Stacks the independent column solutions into `C` (zero diagonal).
pub fn solve_penalized_global(
    g: &DMatrix<f64>,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SelfExpressionSolution> {
    validate_gram(g, 0)?;
    let n = g.nrows();
    let columns: Vec<ColumnSolution> = (0..n)
        .into_par_iter()
        .map(|j| solve_penalized_column(g, j, lambda, tol, max_iter))
        .collect::<Result<_>>()?;
    Ok(assemble(g, lambda, columns))
}

fn assemble(g: &DMatrix<f64>, lambda: f64, columns: Vec<ColumnSolution>) -> SelfExpressionSolution {
    let n = g.nrows();
    let mut c = DMatrix::zeros(n, n);
    for (j, col) in columns.iter().enumerate() {
        for k in 0..n {
            c[(k, j)] = col.coef[k];
        }
        c[(j, j)] = 0.0;
    }
    let min_eig = sorted_eigenvalues(g).first().copied().unwrap_or(0.0);
    SelfExpressionSolution {
        c,
        lambda,
        residuals: columns.iter().map(|s| s.residual).collect(),
        iterations: columns.iter().map(|s| s.iterations).collect(),
        converged: columns.iter().map(|s| s.converged).collect(),
        kkt_gaps: columns.iter().map(|s| s.kkt_violation).collect(),
        support_threshold: DEFAULT_SUPPORT_THRESHOLD,
        unique: min_eig >= UNIQUENESS_EIGEN_FLOOR,
    }
}

/// Solutions along a λ grid, each warm-started from its predecessor
/// (the grid is visited in the given order).
pub fn solve_lambda_path(
    g: &DMatrix<f64>,
    lambdas: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<SelfExpressionSolution>> {
    validate_gram(g, 0)?;
    let n = g.nrows();
    let per_column: Vec<Vec<ColumnSolution>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut prev: Option<Vec<f64>> = None;
            lambdas
                .iter()
                .map(|&lam| {
                    let s = solve_penalized_column_from(g, j, lam, tol, max_iter, prev.as_deref())?;
                    prev = Some(s.coef.clone());
                    Ok(s)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(lambdas
        .iter()
        .enumerate()
        .map(|(li, &lam)| {
            let cols = per_column.iter().map(|v| v[li].clone()).collect();
            assemble(g, lam, cols)
        })
        .collect())
}

/// Smallest λ at which column `j` is entirely shrunk to zero.
pub fn lambda_max(g: &DMatrix<f64>, j: usize) -> f64 {
    (0..g.nrows())
        .filter(|&k| k != j)
        .map(|k| 2.0 * g[(k, j)].abs())
        .fold(0.0, f64::max)
}

/// Unpenalized residual `min_{c_j = 0} ℓ_j(c)` and a minimiser (minimum norm).
pub fn least_squares_column(g: &DMatrix<f64>, j: usize) -> Result<(Vec<f64>, f64)> {
    validate_gram(g, j)?;
    let n = g.nrows();
    let others: Vec<usize> = (0..n).filter(|&k| k != j).collect();
    let sub = DMatrix::from_fn(others.len(), others.len(), |a, b| g[(others[a], others[b])]);
    let rhs = DVector::from_fn(others.len(), |a, _| g[(others[a], j)]);
    let eps = 1e-12 * sub.amax().max(1e-300);
    let pinv = sub
        .pseudo_inverse(eps)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let sol = pinv * rhs;
    let mut c = vec![0.0; n];
    for (a, &k) in others.iter().enumerate() {
        c[k] = sol[a];
    }
    let r = column_loss(g, j, &c);
    Ok((c, r))
}

/// Residual-constrained column problem `min ‖c‖₁ s.t. ℓ_j(c) ≤ t`, solved by
/// bisection on the penalty: `λ ↦ ℓ_j(c*(λ))` is continuous and increasing,
/// so the returned penalized solution has residual `t` within `bisect_tol`.
/// Returns the solution and `λ(t)`.
pub fn solve_constrained_column(
    g: &DMatrix<f64>,
    j: usize,
    t: f64,
    bisect_tol: f64,
) -> Result<(ColumnSolution, f64)> {
    validate_gram(g, j)?;
    let (ls_coef, lo) = least_squares_column(g, j)?;
    let hi = g[(j, j)];
    if !t.is_finite() || t < lo - bisect_tol || t > hi + bisect_tol {
        return Err(Error::OutOfRange { t, lo, hi });
    }
    let lam_top = lambda_max(g, j);
    let tight = DEFAULT_TOL * 1e-2;
    if t >= hi - bisect_tol || lam_top == 0.0 {
        let n = g.nrows();
        let lam = lam_top.max(f64::MIN_POSITIVE);
        let sol = ColumnSolution {
            coef: vec![0.0; n],
            residual: hi,
            iterations: 0,
            converged: true,
            kkt_violation: kkt_violation(g, j, &vec![0.0; n], lam),
            objective_trace: vec![hi],
        };
        return Ok((sol, lam_top));
    }
    if t <= lo + bisect_tol {
        let sol = ColumnSolution {
            kkt_violation: kkt_violation(g, j, &ls_coef, 0.0),
            coef: ls_coef,
            residual: lo,
            iterations: 0,
            converged: true,
            objective_trace: vec![],
        };
        return Ok((sol, 0.0));
    }
    let (mut a, mut b) = (0.0, lam_top);
    let mut warm: Option<Vec<f64>> = None;
    let mut best: Option<(ColumnSolution, f64)> = None;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let sol = solve_penalized_column_from(g, j, mid, tight, DEFAULT_MAX_ITER * 5, warm.as_deref())?;
        let r = sol.residual;
        warm = Some(sol.coef.clone());
        let done = (r - t).abs() <= bisect_tol;
        if r > t {
            b = mid;
        } else {
            a = mid;
        }
        best = Some((sol, mid));
        if done || (b - a) <= f64::EPSILON * lam_top {
            break;
        }
    }
    Ok(best.expect("at least one bisection step"))
}

/// Per-column verdict of the subspace detection check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnVerdict {
    /// Nonempty support, all within the column's own group.
    Pass,
    /// Some support entry crosses to another group.
    Fail,
    /// No entry above threshold; the property holds vacuously.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub verdicts: Vec<ColumnVerdict>,
    /// Pass + Empty over all columns.
    pub pass_fraction: f64,
    /// Pass only (nonempty, in-group support) over all columns.
    pub strict_pass_fraction: f64,
    /// Offending `(k, j)` entries.
    pub violations: Vec<(usize, usize)>,
}

impl DetectionReport {
    pub fn failed_columns(&self) -> Vec<usize> {
        self.verdicts
            .iter()
            .enumerate()
            .filter(|(_, v)| **v == ColumnVerdict::Fail)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Column `j` passes iff every `|C_kj| > τ · max|C|` has `labels[k] == labels[j]`.
pub fn check_subspace_detection(c: &DMatrix<f64>, labels: &[usize], tau: f64) -> Result<DetectionReport> {
    let n = c.ncols();
    if labels.len() != n || c.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "C is {}x{}, {} labels",
            c.nrows(),
            n,
            labels.len()
        )));
    }
    let cmax = c.amax();
    let thr = tau * cmax;
    let mut verdicts = Vec::with_capacity(n);
    let mut violations = Vec::new();
    for j in 0..n {
        let mut any = false;
        let mut bad = false;
        for k in 0..n {
            if k == j || cmax == 0.0 || c[(k, j)].abs() <= thr {
                continue;
            }
            any = true;
            if labels[k] != labels[j] {
                bad = true;
                violations.push((k, j));
            }
        }
        verdicts.push(if bad {
            ColumnVerdict::Fail
        } else if any {
            ColumnVerdict::Pass
        } else {
            ColumnVerdict::Empty
        });
    }
    let count = |v: ColumnVerdict| verdicts.iter().filter(|&&x| x == v).count() as f64;
    let nf = n.max(1) as f64;
    Ok(DetectionReport {
        pass_fraction: (count(ColumnVerdict::Pass) + count(ColumnVerdict::Empty)) / nf,
        strict_pass_fraction: count(ColumnVerdict::Pass) / nf,
        violations,
        verdicts,
    })
}
