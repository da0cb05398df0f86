//! Empirical checks of the robustness results: stability of the
//! self-expression loss under Jacobian noise, finite-sample generalization,
//! and the bias caused by a mismatched latent distribution.
//!
//! All losses use unit-norm gradient columns, `ℓ(C; J) = ‖J(I − C)‖²_F`.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jacobian::{analytic_jacobian, normalize_columns};
use crate::latentgen::DecoderParams;
use crate::linalg::{frobenius_sq, norm_one_to_one, operator_norm, pairwise_sum, rank};
use crate::rng::{substream, tags, Rng};

pub const DEFAULT_FAMILY_SIZE: usize = 64;
pub const DEFAULT_POOL_SIZE: usize = 100_000;
pub const DEFAULT_POSTERIOR_WIDTH: f64 = 0.1;
pub const DEFAULT_POSTERIOR_DRAWS: usize = 4;
const CHUNK: usize = 512;

fn check_c(c: &DMatrix<f64>, d_x: usize) -> Result<()> {
    if c.nrows() != d_x || c.ncols() != d_x {
        return Err(Error::DimensionMismatch(format!("C is {}x{}, expected {d_x}x{d_x}", c.nrows(), c.ncols())));
    }
    if (0..d_x).any(|i| c[(i, i)] != 0.0) {
        return Err(Error::InvalidArgument("C must have a zero diagonal".into()));
    }
    Ok(())
}

/// Norm relations for a coefficient matrix. `op_le_one_to_one` is the
/// column-sum comparison, which holds for symmetric `C` but not in general;
/// `op_le_interpolation` is the always-valid `‖C‖²_op ≤ ‖C‖_{1→1} ‖C‖_{∞→∞}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormChecks {
    pub op: f64,
    pub one_to_one: f64,
    pub inf_to_inf: f64,
    pub frobenius: f64,
    pub rank: usize,
    pub op_le_one_to_one: bool,
    pub op_le_interpolation: bool,
    pub op_le_rank_frobenius: bool,
}

pub fn norm_checks(c: &DMatrix<f64>) -> NormChecks {
    let op = operator_norm(c);
    let one = norm_one_to_one(c);
    let inf = norm_one_to_one(&c.transpose());
    let fro = c.norm();
    let r = rank(c, 1e-12);
    let slack = 1e-10 * (1.0 + op);
    NormChecks {
        op,
        one_to_one: one,
        inf_to_inf: inf,
        frobenius: fro,
        rank: r,
        op_le_one_to_one: op <= one + slack,
        op_le_interpolation: op <= (one * inf).sqrt() + slack,
        op_le_rank_frobenius: op <= (r as f64).sqrt() * fro + slack,
    }
}

/// `‖(J_true + E)(I − C)‖² − ‖J_true(I − C)‖²`.
pub fn loss_deviation(j_true: &DMatrix<f64>, c: &DMatrix<f64>, e: &DMatrix<f64>) -> f64 {
    let ic = DMatrix::identity(c.nrows(), c.ncols()) - c;
    let base = j_true * &ic;
    let pert = e * &ic;
    2.0 * base.dot(&pert) + frobenius_sq(&pert)
}

/// `B(δ) = Λ√(d_z d_x) + √(2 d_z log(2 d_x/δ))`.
pub fn b_delta(lambda: f64, d_z: usize, d_x: usize, delta: f64) -> f64 {
    let (dz, dx) = (d_z as f64, d_x as f64);
    lambda * (dz * dx).sqrt() + (2.0 * dz * (2.0 * dx / delta).ln()).sqrt()
}

/// `(1 + ‖C‖_op)(2 d_x B ε + (1 + ‖C‖_op) B² ε²)`.
pub fn stability_bound(op: f64, d_x: usize, b: f64, eps: f64) -> f64 {
    (1.0 + op) * (2.0 * d_x as f64 * b * eps + (1.0 + op) * b * b * eps * eps)
}

/// Smallest `Λ ≥ 0` for which the bound covers a deviation of size `dev`.
pub fn required_lambda(dev: f64, op: f64, d_z: usize, d_x: usize, eps: f64, delta: f64) -> f64 {
    if eps == 0.0 {
        return 0.0;
    }
    let dx = d_x as f64;
    let y = ((dx * dx + dev.abs()).sqrt() - dx) / (1.0 + op);
    let b_req = y / eps;
    let base = b_delta(0.0, d_z, d_x, delta);
    ((b_req - base) / ((d_z * d_x) as f64).sqrt()).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub epsilon: f64,
    pub delta: f64,
    pub lambda: f64,
    pub b: f64,
    pub bound: f64,
    pub deviations: Vec<f64>,
    pub violation_rate: f64,
    pub norms: NormChecks,
}

fn noise(shape: (usize, usize), eps: f64, rng: &mut Rng) -> DMatrix<f64> {
    DMatrix::from_fn(shape.0, shape.1, |_, _| {
        let v: f64 = StandardNormal.sample(rng);
        v * eps
    })
}

fn deviations(j_true: &DMatrix<f64>, c: &DMatrix<f64>, eps: f64, trials: usize, seed: u64) -> Vec<f64> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, &[tags::STABILITY, t as u64]);
            let e = noise(j_true.shape(), eps, &mut rng);
            loss_deviation(j_true, c, &e)
        })
        .collect()
}

/// Adds i.i.d. `N(0, ε²)` noise to `J_true` per trial and compares `|Δ|` with
/// the bound at confidence `δ` and the supplied `Λ`.
pub fn perturb_and_check(
    j_true: &DMatrix<f64>,
    c: &DMatrix<f64>,
    epsilon: f64,
    delta: f64,
    trials: usize,
    lambda: f64,
    seed: u64,
) -> Result<StabilityReport> {
    let (d_z, d_x) = j_true.shape();
    check_c(c, d_x)?;
    if !(epsilon >= 0.0) || !(delta > 0.0 && delta < 1.0) || trials == 0 {
        return Err(Error::InvalidArgument("need epsilon >= 0, delta in (0,1), trials >= 1".into()));
    }
    let norms = norm_checks(c);
    let b = b_delta(lambda, d_z, d_x, delta);
    let bound = stability_bound(norms.op, d_x, b, epsilon);
    let deviations = deviations(j_true, c, epsilon, trials, seed);
    let violations = deviations.iter().filter(|d| d.abs() > bound).count();
    Ok(StabilityReport {
        epsilon,
        delta,
        lambda,
        b,
        bound,
        violation_rate: violations as f64 / trials as f64,
        deviations,
        norms,
    })
}

/// Calibrates `Λ` as the largest per-trial requirement over a calibration run.
pub fn calibrate_stability_lambda(
    j_true: &DMatrix<f64>,
    c: &DMatrix<f64>,
    epsilon: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let (d_z, d_x) = j_true.shape();
    check_c(c, d_x)?;
    let op = operator_norm(c);
    Ok(deviations(j_true, c, epsilon, trials, seed)
        .iter()
        .map(|&d| required_lambda(d, op, d_z, d_x, epsilon, delta))
        .fold(0.0, f64::max))
}

/// Posterior-averaged Jacobian: the mean of the Jacobians at `draws` points
/// `z + width·ξ`, optionally with unit columns per draw.
pub fn posterior_jacobian(
    decoder: &DecoderParams,
    z: &[f64],
    post: PosteriorModel,
    rng: &mut Rng,
) -> Result<DMatrix<f64>> {
    let mut acc = DMatrix::zeros(decoder.d_z(), decoder.d_x());
    let draws = post.draws.max(1);
    for _ in 0..draws {
        let zq: Vec<f64> = z
            .iter()
            .map(|&v| {
                let e: f64 = StandardNormal.sample(rng);
                v + post.width * e
            })
            .collect();
        let j = analytic_jacobian(&zq, decoder);
        acc += if post.normalize { normalize_columns(&j)? } else { j };
    }
    Ok(acc / draws as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorModel {
    pub width: f64,
    pub draws: usize,
    /// Unit columns per draw. With a monotone mean network the unit-column
    /// Jacobian is constant in `z`, so every gap would be exactly zero.
    pub normalize: bool,
}

impl Default for PosteriorModel {
    fn default() -> Self {
        Self {
            width: DEFAULT_POSTERIOR_WIDTH,
            draws: DEFAULT_POSTERIOR_DRAWS,
            normalize: false,
        }
    }
}

/// Mean of `J̄ᵀJ̄` over samples `first..first + count` of stream `stream`,
/// together with the largest `‖J̄‖²_F` seen. Samples draw `z ~ N(0, I)`.
fn sample_gram(
    decoder: &DecoderParams,
    post: PosteriorModel,
    seed: u64,
    stream: u64,
    count: usize,
) -> Result<(DMatrix<f64>, f64)> {
    let d_z = decoder.d_z();
    let chunks: Vec<(DMatrix<f64>, f64)> = (0..count.div_ceil(CHUNK))
        .into_par_iter()
        .map(|ci| {
            let mut g = DMatrix::zeros(decoder.d_x(), decoder.d_x());
            let mut m2: f64 = 0.0;
            for i in ci * CHUNK..((ci + 1) * CHUNK).min(count) {
                let mut rng = substream(seed, &[tags::GENERALIZATION, stream, i as u64]);
                let z: Vec<f64> = (0..d_z).map(|_| StandardNormal.sample(&mut rng)).collect();
                let jb = posterior_jacobian(decoder, &z, post, &mut rng)?;
                m2 = m2.max(frobenius_sq(&jb));
                g += jb.transpose() * &jb;
            }
            Ok((g, m2))
        })
        .collect::<Result<_>>()?;
    let m2 = chunks.iter().map(|c| c.1).fold(0.0, f64::max);
    let mats: Vec<DMatrix<f64>> = chunks.into_iter().map(|c| c.0).collect();
    let g = pairwise_sum(&mats).ok_or_else(|| Error::InvalidArgument("no samples".into()))? / count as f64;
    Ok((g, m2))
}

/// `tr((I − C)ᵀ G (I − C))`: the mean loss over the samples behind `G`.
pub fn gram_loss(g: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    let ic = DMatrix::identity(c.nrows(), c.ncols()) - c;
    (ic.transpose() * g * &ic).trace()
}

/// Sign-random sparse zero-diagonal matrices with entrywise `‖C‖₁ = radius`.
pub fn random_family(d_x: usize, size: usize, density: f64, radius: f64, seed: u64) -> Vec<DMatrix<f64>> {
    use rand::Rng as _;
    (0..size)
        .map(|f| {
            let mut rng = substream(seed, &[tags::GENERALIZATION, u64::MAX, f as u64]);
            let mut c = DMatrix::zeros(d_x, d_x);
            for i in 0..d_x {
                for j in 0..d_x {
                    if i != j && rng.random::<f64>() < density {
                        let mag: f64 = rng.random::<f64>() + 0.1;
                        c[(i, j)] = if rng.random::<bool>() { mag } else { -mag };
                    }
                }
            }
            if c.iter().all(|&v| v == 0.0) && d_x > 1 {
                c[(0, 1)] = 1.0;
            }
            let l1: f64 = c.iter().map(|v| v.abs()).sum();
            if l1 > 0.0 {
                c *= radius / l1;
            }
            c
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationReport {
    pub n_grid: Vec<usize>,
    /// Mean over repetitions of the family supremum gap at each `N`.
    pub gaps: Vec<f64>,
    pub gap_reps: Vec<Vec<f64>>,
    pub slope: f64,
    pub bound: Vec<f64>,
    pub m_phi_sq: f64,
    pub radius: f64,
    pub delta: f64,
    pub pool_size: usize,
    pub family_size: usize,
}

impl GeneralizationReport {
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("N,gap,bound\n");
        for i in 0..self.n_grid.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.n_grid[i],
                crate::io::fmt_f64(self.gaps[i]),
                crate::io::fmt_f64(self.bound[i])
            ));
        }
        out
    }

    /// Repetitions (seeds) whose gap stays under the bound at every `N`.
    pub fn bound_hold_fraction(&self) -> f64 {
        let reps = self.gap_reps.first().map_or(0, |r| r.len());
        if reps == 0 {
            return 0.0;
        }
        let ok = (0..reps)
            .filter(|&r| (0..self.n_grid.len()).all(|i| self.gap_reps[i][r] <= self.bound[i]))
            .count();
        ok as f64 / reps as f64
    }
}

/// Ordinary least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationOptions {
    pub family_size: usize,
    pub pool_size: usize,
    pub repetitions: usize,
    pub density: f64,
    pub posterior: PosteriorModel,
    /// Extra members of the family (e.g. a solver minimiser), rescaled into
    /// the ball when they exceed the radius.
    pub extra: Vec<DMatrix<f64>>,
}

impl Default for GeneralizationOptions {
    fn default() -> Self {
        Self {
            family_size: DEFAULT_FAMILY_SIZE,
            pool_size: DEFAULT_POOL_SIZE,
            repetitions: 8,
            density: 0.05,
            posterior: PosteriorModel::default(),
            extra: Vec::new(),
        }
    }
}

/// Supremum over a finite family inside `{‖C‖₁ ≤ radius, diag C = 0}` of the
/// gap between the pool loss and the loss on `N` fresh samples, for each `N`
/// in the grid, averaged over repetitions.
pub fn generalization_sweep(
    decoder: &DecoderParams,
    radius: f64,
    n_grid: &[usize],
    delta: f64,
    seed: u64,
    opts: &GeneralizationOptions,
) -> Result<GeneralizationReport> {
    if n_grid.is_empty() || n_grid.iter().any(|&n| n < 2) {
        return Err(Error::InvalidArgument("sample sizes must be at least 2".into()));
    }
    if !(radius > 0.0) || opts.repetitions == 0 {
        return Err(Error::InvalidArgument("radius must be positive and repetitions >= 1".into()));
    }
    let d_x = decoder.d_x();
    let mut family = random_family(d_x, opts.family_size, opts.density, radius, seed);
    for c in &opts.extra {
        check_c(c, d_x)?;
        let l1: f64 = c.iter().map(|v| v.abs()).sum();
        family.push(if l1 > radius { c * (radius / l1) } else { c.clone() });
    }
    let (pool, m_pool) = sample_gram(decoder, opts.posterior, seed, 0, opts.pool_size)?;
    let pool_losses: Vec<f64> = family.iter().map(|c| gram_loss(&pool, c)).collect();
    let mut m_phi_sq = m_pool;
    let mut gap_reps = Vec::with_capacity(n_grid.len());
    for (ni, &n) in n_grid.iter().enumerate() {
        let mut reps = Vec::with_capacity(opts.repetitions);
        for r in 0..opts.repetitions {
            let stream = 1 + (ni * opts.repetitions + r) as u64;
            let (g, m2) = sample_gram(decoder, opts.posterior, seed, stream, n)?;
            m_phi_sq = m_phi_sq.max(m2);
            let sup = family
                .iter()
                .zip(&pool_losses)
                .map(|(c, &pl)| (pl - gram_loss(&g, c)).abs())
                .fold(0.0, f64::max);
            reps.push(sup);
        }
        gap_reps.push(reps);
    }
    let gaps: Vec<f64> = gap_reps.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    let xs: Vec<f64> = n_grid.iter().map(|&n| n as f64).collect();
    let slope = loglog_slope(&xs, &gaps);
    let d_z = decoder.d_z() as f64;
    let bound: Vec<f64> = xs
        .iter()
        .map(|&n| {
            8.0 * radius * m_phi_sq * (2.0 * d_z * (d_x as f64).ln() / n).sqrt()
                + 0.5 * m_phi_sq * ((1.0 / delta).ln() / n).sqrt()
        })
        .collect();
    Ok(GeneralizationReport {
        n_grid: n_grid.to_vec(),
        gaps,
        gap_reps,
        slope,
        bound,
        m_phi_sq,
        radius,
        delta,
        pool_size: opts.pool_size,
        family_size: family.len(),
    })
}

/// `KL(N(m, diag s²) ‖ N(0, I))`.
pub fn gaussian_kl(mean: &[f64], scale: &[f64]) -> f64 {
    mean.iter()
        .zip(scale)
        .map(|(&m, &s)| 0.5 * (s * s + m * m - 1.0) - s.ln())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub observed: f64,
    pub std_error: f64,
    pub kl: f64,
    pub bound: f64,
    pub op_norm: f64,
    pub samples: usize,
}

/// Difference of mean losses under `q = N(m, diag s²)` and `p = N(0, I)`,
/// estimated with common random numbers (`z_q = m + s ∘ ξ`, `z_p = ξ`), and
/// the bound `√d_x (1 + ‖C‖_op) √(½ KL(q‖p))`.
pub fn posterior_bias_check(
    c: &DMatrix<f64>,
    decoder: &DecoderParams,
    q_mean: &[f64],
    q_scale: &[f64],
    samples: usize,
    seed: u64,
) -> Result<BiasReport> {
    let d_z = decoder.d_z();
    let d_x = decoder.d_x();
    check_c(c, d_x)?;
    if q_mean.len() != d_z || q_scale.len() != d_z {
        return Err(Error::DimensionMismatch(format!("q parameters must have length d_z = {d_z}")));
    }
    if q_scale.iter().any(|&s| !(s > 0.0)) || samples < 2 {
        return Err(Error::InvalidArgument("scales must be positive and samples >= 2".into()));
    }
    let ic = DMatrix::identity(d_x, d_x) - c;
    let loss = |z: &[f64]| -> Result<f64> {
        let j = normalize_columns(&analytic_jacobian(z, decoder))?;
        Ok(frobenius_sq(&(j * &ic)))
    };
    let diffs: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, &[tags::BIAS, i as u64]);
            let xi: Vec<f64> = (0..d_z).map(|_| StandardNormal.sample(&mut rng)).collect();
            let zq: Vec<f64> = (0..d_z).map(|k| q_mean[k] + q_scale[k] * xi[k]).collect();
            Ok(loss(&zq)? - loss(&xi)?)
        })
        .collect::<Result<_>>()?;
    let n = samples as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let kl = gaussian_kl(q_mean, q_scale);
    let op = operator_norm(c);
    Ok(BiasReport {
        observed: mean.abs(),
        std_error: (var / n).sqrt(),
        kl,
        bound: (d_x as f64).sqrt() * (1.0 + op) * (0.5 * kl).sqrt(),
        op_norm: op,
        samples,
    })
}

/// Density of `N(m, s²)` for quadrature checks.
pub fn normal_pdf(x: f64, m: f64, s: f64) -> f64 {
    (-(x - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

/// Gaussian noise matrix with entry scale `eps`, exposed for replay tests.
pub fn noise_matrix(shape: (usize, usize), eps: f64, seed: u64, trial: u64) -> DMatrix<f64> {
    let mut rng = substream(seed, &[tags::STABILITY, trial]);
    noise(shape, eps, &mut rng)
}
