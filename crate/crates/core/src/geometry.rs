//! Subspace geometry: principal angles, affinities, detection conditions,
//! in-radius and the structured-model statistics of a decoder.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jacobian::analytic_jacobian;
use crate::latentgen::DecoderParams;
use crate::linalg::{operator_norm, sorted_eigenvalues};
use crate::rng::{substream, tags};
use crate::selfexpr::{check_subspace_detection, solve_penalized_global, DEFAULT_SUPPORT_THRESHOLD};

pub const ORTHONORMAL_TOL: f64 = 1e-10;
pub const DEFAULT_INRADIUS_DIRS: usize = 4096;
pub const DEFAULT_INRADIUS_REFINE: usize = 50;
pub const MAX_RE_LATENTS: usize = 12;
pub const MAX_RE_SUPPORTS: usize = 1000;

/// Orthonormal basis of a subspace of the latent-gradient space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceBasis {
    pub basis: DMatrix<f64>,
    pub members: Vec<usize>,
}

impl SubspaceBasis {
    pub fn new(basis: DMatrix<f64>, members: Vec<usize>) -> Result<Self> {
        check_orthonormal(&basis)?;
        Ok(Self { basis, members })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

fn check_orthonormal(u: &DMatrix<f64>) -> Result<()> {
    if u.ncols() == 0 {
        return Ok(());
    }
    let dev = (u.transpose() * u - DMatrix::identity(u.ncols(), u.ncols())).amax();
    if dev > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal { deviation: dev });
    }
    Ok(())
}

/// Cosines of the principal angles, descending.
pub fn principal_angles(u1: &DMatrix<f64>, u2: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_orthonormal(u1)?;
    check_orthonormal(u2)?;
    if u1.nrows() != u2.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "bases live in dimensions {} and {}",
            u1.nrows(),
            u2.nrows()
        )));
    }
    if u1.ncols() == 0 || u2.ncols() == 0 {
        return Ok(Vec::new());
    }
    let m = u1.transpose() * u2;
    let mut s: Vec<f64> = m.singular_values().iter().map(|v| v.clamp(0.0, 1.0)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// `√Σ cos² θ_k`, equal to `‖U1ᵀU2‖_F`.
pub fn affinity(u1: &DMatrix<f64>, u2: &DMatrix<f64>) -> Result<f64> {
    Ok(principal_angles(u1, u2)?.iter().map(|c| c * c).sum::<f64>().sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncoherenceReport {
    pub margins: Vec<f64>,
    pub affinities: DMatrix<f64>,
    pub pass: bool,
    pub k: f64,
    pub l: f64,
    pub lambda: f64,
}

/// `margin_m = Λ·K·L·√log n_m − max_{k≠m} aff(S_k, S_m)·√log(n_k + 1)`.
pub fn incoherence_report(bases: &[SubspaceBasis], sizes: &[usize], k: f64, l: f64, lambda: f64) -> Result<IncoherenceReport> {
    if bases.len() != sizes.len() {
        return Err(Error::DimensionMismatch(format!("{} bases, {} sizes", bases.len(), sizes.len())));
    }
    if let Some(m) = sizes.iter().position(|&n| n < 1) {
        return Err(Error::InvalidArgument(format!("group {m} has n_m < 1")));
    }
    let n = bases.len();
    let mut aff = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let v = affinity(&bases[a].basis, &bases[b].basis)?;
            aff[(a, b)] = v;
            aff[(b, a)] = v;
        }
    }
    let margins: Vec<f64> = (0..n)
        .map(|m| {
            let floor = lambda * k * l * (sizes[m] as f64).ln().sqrt();
            let worst = (0..n)
                .filter(|&o| o != m)
                .map(|o| aff[(o, m)] * ((sizes[o] + 1) as f64).ln().sqrt())
                .fold(0.0, f64::max);
            floor - worst
        })
        .collect();
    Ok(IncoherenceReport {
        pass: margins.iter().all(|&v| v >= 0.0),
        margins,
        affinities: aff,
        k,
        l,
        lambda,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexity {
    /// `(2M/ε)^{2d_m/(Λ₂² − 2d_m)}`; `None` past the barrier.
    pub first: Option<f64>,
    /// `16 (M(M − 1)/ε)²`.
    pub second: f64,
    /// Larger of the two; `None` past the barrier.
    pub required: Option<f64>,
    pub barrier: bool,
}

pub fn sample_complexity(epsilon: f64, m: usize, d_m: usize, lambda2: f64) -> Result<SampleComplexity> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let mf = m as f64;
    let dm = d_m as f64;
    let second = 16.0 * (mf * (mf - 1.0) / epsilon).powi(2);
    let denom = lambda2 * lambda2 - 2.0 * dm;
    if denom <= 0.0 {
        return Ok(SampleComplexity {
            first: None,
            second,
            required: None,
            barrier: true,
        });
    }
    let first = (2.0 * mf / epsilon).powf(2.0 * dm / denom);
    Ok(SampleComplexity {
        first: Some(first),
        second,
        required: Some(first.max(second)),
        barrier: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InradiusEstimate {
    pub value: f64,
    pub direction: Vec<f64>,
}

fn polytope_support(j: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    j.column_iter().map(|c| c.dot(u).abs()).fold(0.0, f64::max)
}

fn refine(j: &DMatrix<f64>, start: &DVector<f64>, iters: usize) -> (f64, DVector<f64>) {
    let d = start.len();
    let mut u = start.clone();
    let mut best = polytope_support(j, &u);
    let mut step = 0.5;
    for _ in 0..iters {
        let mut improved = false;
        for k in 0..d {
            for s in [step, -step] {
                let mut cand = u.clone();
                cand[k] += s;
                let n = cand.norm();
                if n == 0.0 {
                    continue;
                }
                cand /= n;
                let v = polytope_support(j, &cand);
                if v < best {
                    best = v;
                    u = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best, u)
}

/// `min_{‖u‖=1} max_i |⟨J_{:,i}, u⟩|` over random sphere directions, with
/// coordinate refinement from every running-best direction. The returned
/// value is attained, so it bounds the true minimum from above, and it is
/// non-increasing in `n_dirs` for a fixed seed.
pub fn inradius(j: &DMatrix<f64>, n_dirs: usize, refine_iters: usize, seed: u64) -> Result<InradiusEstimate> {
    if n_dirs == 0 {
        return Err(Error::InvalidArgument("at least one direction is required".into()));
    }
    let d = j.nrows();
    if d == 0 || j.ncols() == 0 {
        return Err(Error::InvalidArgument("empty Jacobian".into()));
    }
    for (i, c) in j.column_iter().enumerate() {
        if (c.norm() - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument(format!("column {i} is not unit norm")));
        }
    }
    let mut rng = substream(seed, &[tags::THEORY, 1]);
    let mut record = f64::INFINITY;
    let mut starts = Vec::new();
    let mut drawn = 0;
    while drawn < n_dirs {
        let v: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let n = v.norm();
        if n == 0.0 {
            continue;
        }
        drawn += 1;
        let u = v / n;
        let val = polytope_support(j, &u);
        if val < record {
            record = val;
            starts.push(u);
        }
    }
    let (value, dir) = starts
        .par_iter()
        .map(|s| refine(j, s, refine_iters))
        .collect::<Vec<_>>()
        .into_iter()
        .fold((f64::INFINITY, DVector::zeros(d)), |acc, r| if r.0 < acc.0 { r } else { acc });
    Ok(InradiusEstimate {
        value,
        direction: dir.iter().copied().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredModelStats {
    pub m: Vec<f64>,
    pub sigma: DMatrix<f64>,
    /// Largest normalized cross term over non-inert latent pairs.
    pub mu: f64,
    pub delta: Vec<f64>,
    pub gamma_min: usize,
    pub kappa: f64,
    pub s: usize,
    pub inert: Vec<usize>,
    pub max_parents: usize,
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Smallest eigenvalue of `Σ_SS` over all supports with `|S| = s`.
pub fn restricted_eigenvalue(sigma: &DMatrix<f64>, s: usize) -> Result<f64> {
    let d = sigma.nrows();
    if s == 0 || s > d {
        return Err(Error::InvalidArgument(format!("sparsity {s} outside 1..={d}")));
    }
    if d > MAX_RE_LATENTS || binomial(d, s) > MAX_RE_SUPPORTS as f64 {
        return Err(Error::DeskScale(format!(
            "restricted eigenvalue enumeration with d_z = {d}, s = {s}"
        )));
    }
    Ok(combinations(d, s)
        .iter()
        .map(|sup| {
            let sub = DMatrix::from_fn(s, s, |a, b| sigma[(sup[a], sup[b])]);
            sorted_eigenvalues(&sub)[0]
        })
        .fold(f64::INFINITY, f64::min))
}

/// Monte-Carlo statistics from Jacobian samples (`d_z × d_x`, gradient columns).
pub fn structured_model_stats_from(samples: &[DMatrix<f64>], s: usize) -> Result<StructuredModelStats> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("at least one sample is required".into()))?;
    let (d_z, d_x) = first.shape();
    if s == 0 || s > d_z {
        return Err(Error::InvalidArgument(format!("sparsity {s} outside 1..={d_z}")));
    }
    let ns = samples.len() as f64;
    let mut sigma = DMatrix::zeros(d_z, d_z);
    let mut abs_mean = DMatrix::zeros(d_z, d_x);
    let mut grad_sq = vec![0.0; d_x];
    let mut support = DMatrix::from_element(d_z, d_x, false);
    for j in samples {
        if j.shape() != (d_z, d_x) {
            return Err(Error::DimensionMismatch("Jacobian samples differ in shape".into()));
        }
        sigma += j * j.transpose();
        for i in 0..d_x {
            grad_sq[i] += j.column(i).norm_squared();
            for k in 0..d_z {
                abs_mean[(k, i)] += j[(k, i)].abs();
                if j[(k, i)] != 0.0 {
                    support[(k, i)] = true;
                }
            }
        }
    }
    sigma /= ns;
    sigma = (&sigma + sigma.transpose()) * 0.5;
    abs_mean /= ns;
    let m: Vec<f64> = (0..d_z).map(|k| sigma[(k, k)]).collect();
    let inert: Vec<usize> = (0..d_z).filter(|&k| m[k] == 0.0).collect();
    let mut mu: f64 = 0.0;
    for a in 0..d_z {
        for b in 0..d_z {
            if a != b && m[a] > 0.0 && m[b] > 0.0 {
                mu = mu.max(sigma[(a, b)].abs() / (m[a] * m[b]).sqrt());
            }
        }
    }
    let delta: Vec<f64> = (0..d_x)
        .map(|i| {
            let rms = (grad_sq[i] / ns).sqrt();
            if rms == 0.0 {
                return 1.0;
            }
            let best = (0..d_z)
                .filter(|&k| support[(k, i)])
                .map(|k| abs_mean[(k, i)])
                .fold(0.0, f64::max);
            (1.0 - best / rms).max(0.0)
        })
        .collect();
    let gamma_min = (0..d_z)
        .map(|k| (0..d_x).filter(|&i| support[(k, i)]).count())
        .min()
        .unwrap_or(0);
    let max_parents = (0..d_x)
        .map(|i| (0..d_z).filter(|&k| support[(k, i)]).count())
        .max()
        .unwrap_or(0);
    let kappa = restricted_eigenvalue(&sigma, s)?;
    Ok(StructuredModelStats {
        m,
        sigma,
        mu,
        delta,
        gamma_min,
        kappa,
        s,
        inert,
        max_parents,
    })
}

pub fn structured_model_stats(decoder: &DecoderParams, latents: &[Vec<f64>], s: usize) -> Result<StructuredModelStats> {
    let samples: Vec<DMatrix<f64>> = latents.par_iter().map(|z| analytic_jacobian(z, decoder)).collect();
    structured_model_stats_from(&samples, s)
}

/// Per-group orthonormal bases from the left singular vectors of the group's
/// columns, truncated at `σ > 1e-8 · σ_max`.
pub fn estimate_bases(j: &DMatrix<f64>, labels: &[usize]) -> Result<Vec<SubspaceBasis>> {
    if labels.len() != j.ncols() {
        return Err(Error::DimensionMismatch(format!("{} labels for {} columns", labels.len(), j.ncols())));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    (0..k)
        .map(|g| {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == g).collect();
            if members.is_empty() {
                return Err(Error::EmptyGroup { label: g });
            }
            let sub = j.select_columns(&members);
            let svd = sub.clone().svd(true, false);
            let u = svd.u.expect("left singular vectors requested");
            let smax = svd.singular_values.max();
            let keep: Vec<usize> = (0..svd.singular_values.len())
                .filter(|&i| smax > 0.0 && svd.singular_values[i] > 1e-8 * smax)
                .collect();
            let basis = u.select_columns(&keep);
            let basis = orthonormalize(basis);
            SubspaceBasis::new(basis, members)
        })
        .collect()
}

fn orthonormalize(b: DMatrix<f64>) -> DMatrix<f64> {
    if b.ncols() == 0 {
        return b;
    }
    b.qr().q()
}

/// Sub-Gaussian norm proxy: max over coordinates and tail levels of
/// `t_q / √ln(2/(1 − q))`, with `t_q` the `q`-quantile of `|x − mean|`.
pub fn estimate_subgaussian_k(samples: &[Vec<f64>]) -> Result<f64> {
    let d = samples
        .first()
        .map(|s| s.len())
        .ok_or_else(|| Error::InvalidArgument("no samples".into()))?;
    let n = samples.len() as f64;
    let mut best: f64 = 0.0;
    for k in 0..d {
        let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n;
        let mut dev: Vec<f64> = samples.iter().map(|s| (s[k] - mean).abs()).collect();
        dev.sort_by(f64::total_cmp);
        for q in [0.9, 0.95, 0.99] {
            let idx = ((q * n).ceil() as usize).clamp(1, dev.len()) - 1;
            best = best.max(dev[idx] / (2.0f64 / (1.0 - q)).ln().sqrt());
        }
    }
    Ok(best)
}

/// Largest central-difference Hessian operator norm over outputs and points.
pub fn estimate_hessian_bound(decoder: &DecoderParams, points: &[Vec<f64>], step: f64) -> f64 {
    let d_z = decoder.d_z();
    points
        .par_iter()
        .map(|z| {
            let cols: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..d_z)
                .map(|k| {
                    let mut zp = z.clone();
                    let mut zm = z.clone();
                    zp[k] += step;
                    zm[k] -= step;
                    (analytic_jacobian(&zp, decoder), analytic_jacobian(&zm, decoder))
                })
                .collect();
            (0..decoder.d_x())
                .map(|i| {
                    let h = DMatrix::from_fn(d_z, d_z, |r, k| {
                        (cols[k].0[(r, i)] - cols[k].1[(r, i)]) / (2.0 * step)
                    });
                    operator_norm(&((&h + h.transpose()) * 0.5))
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Two `dim`-dimensional subspaces of `R^{2·dim}` at a common principal angle
/// `θ` (affinity `√dim · cos θ`), with `n_per_group` unit columns drawn from
/// each using fixed coefficient vectors `coeffs` (common across `θ`).
pub fn two_subspace_family(theta: f64, dim: usize, coeffs: &[DVector<f64>], n_per_group: usize) -> (DMatrix<f64>, Vec<usize>) {
    let amb = 2 * dim;
    let u1 = DMatrix::from_fn(amb, dim, |r, c| if r == c { 1.0 } else { 0.0 });
    let u2 = DMatrix::from_fn(amb, dim, |r, c| {
        if r == c {
            theta.cos()
        } else if r == c + dim {
            theta.sin()
        } else {
            0.0
        }
    });
    let mut j = DMatrix::zeros(amb, 2 * n_per_group);
    let mut labels = Vec::with_capacity(2 * n_per_group);
    for g in 0..2 {
        let u = if g == 0 { &u1 } else { &u2 };
        for i in 0..n_per_group {
            let col = u * &coeffs[g * n_per_group + i];
            let n = col.norm();
            j.set_column(g * n_per_group + i, &(col / n));
            labels.push(g);
        }
    }
    (j, labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub theta: f64,
    pub affinity: f64,
    pub pass_rate: f64,
}

/// Subspace-detection pass rate along a principal-angle sweep, averaged over
/// `reps` coefficient draws (shared across angles).
pub fn detection_vs_affinity(
    thetas: &[f64],
    dim: usize,
    n_per_group: usize,
    lambda: f64,
    reps: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    let draws: Vec<Vec<DVector<f64>>> = (0..reps)
        .map(|r| {
            let mut rng = substream(seed, &[tags::THEORY, 2, r as u64]);
            (0..2 * n_per_group)
                .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0)))
                .collect()
        })
        .collect();
    thetas
        .iter()
        .map(|&theta| {
            let rates = draws
                .iter()
                .map(|coeffs| {
                    let (j, labels) = two_subspace_family(theta, dim, coeffs, n_per_group);
                    let g = j.transpose() * &j;
                    let sol = solve_penalized_global(&g, lambda, 1e-12, 100_000)?;
                    Ok(check_subspace_detection(&sol.c, &labels, DEFAULT_SUPPORT_THRESHOLD)?.pass_fraction)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(SweepPoint {
                theta,
                affinity: (dim as f64).sqrt() * theta.cos().abs(),
                pass_rate: rates.iter().sum::<f64>() / reps.max(1) as f64,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{generate_structure, StructureParams};
    use proptest::prelude::*;

    fn coord(d: usize, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(d, idx.len(), |r, c| if r == idx[c] { 1.0 } else { 0.0 })
    }

    fn random_basis(d: usize, k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = substream(seed, &[]);
        let a = DMatrix::from_fn(d, k, |_, _| StandardNormal.sample(&mut rng));
        a.qr().q()
    }

    #[test]
    fn principal_angle_cases() {
        let a = coord(4, &[0, 1]);
        let b = coord(4, &[2, 3]);
        assert_eq!(principal_angles(&a, &b).unwrap(), vec![0.0, 0.0]);
        let same = principal_angles(&a, &a).unwrap();
        assert!(same.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let th = std::f64::consts::FRAC_PI_4;
        let l1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let l2 = DMatrix::from_column_slice(2, 1, &[th.cos(), th.sin()]);
        let c = principal_angles(&l1, &l2).unwrap();
        assert!((c[0] - l1.column(0).dot(&l2.column(0))).abs() < 1e-12);
        let bad = DMatrix::from_column_slice(2, 1, &[2.0, 0.0]);
        assert!(matches!(principal_angles(&bad, &l1), Err(Error::NotOrthonormal { .. })));
    }

    #[test]
    fn affinity_cases() {
        let a = coord(4, &[0, 1]);
        assert_eq!(affinity(&a, &coord(4, &[2, 3])).unwrap(), 0.0);
        assert!((affinity(&a, &a).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        for seed in 0..20 {
            let u = random_basis(7, 3, seed);
            let v = random_basis(7, 2, seed + 1000);
            let frob = (u.transpose() * &v).norm();
            assert!((affinity(&u, &v).unwrap() - frob).abs() < 1e-10);
        }
    }

    #[test]
    fn incoherence_cases() {
        let bases: Vec<SubspaceBasis> = (0..3)
            .map(|m| SubspaceBasis::new(coord(6, &[2 * m, 2 * m + 1]), vec![]).unwrap())
            .collect();
        let r = incoherence_report(&bases, &[5, 6, 7], 0.1, 0.1, 0.1).unwrap();
        assert!(r.pass);
        assert!(r.margins.iter().all(|&m| m > 0.0));

        let b = SubspaceBasis::new(coord(4, &[0, 1]), vec![]).unwrap();
        let r = incoherence_report(&[b.clone(), b], &[10, 10], 0.5, 0.5, 0.5).unwrap();
        let expect = 0.125 * 10f64.ln().sqrt() - 2f64.sqrt() * 11f64.ln().sqrt();
        assert!((r.margins[0] - expect).abs() < 1e-12);
        assert!(!r.pass);
        assert!(incoherence_report(&bases, &[0, 1, 1], 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn sample_complexity_cases() {
        let one = sample_complexity(0.1, 1, 2, 3.0).unwrap();
        assert_eq!(one.second, 0.0);
        assert_eq!(one.required, one.first);

        let b = sample_complexity(0.1, 5, 5, 3.0).unwrap();
        assert!(b.barrier);
        assert!(b.required.is_none());

        let r = sample_complexity(0.1, 5, 2, 3.0).unwrap();
        let first = (2.0f64 * 5.0 / 0.1).powf(4.0 / (9.0 - 4.0));
        let second = 16.0 * (20.0f64 / 0.1).powi(2);
        assert!((r.first.unwrap() - first).abs() < 1e-9 * first);
        assert_eq!(r.second, second);
        assert_eq!(r.required.unwrap(), first.max(second));
        assert!(sample_complexity(1.0, 5, 2, 3.0).is_err());
    }

    #[test]
    fn inradius_cases() {
        let cross = DMatrix::from_row_slice(2, 4, &[1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0]);
        let r = inradius(&cross, 512, 50, 1).unwrap();
        assert!((r.value - 0.5f64.sqrt()).abs() < 1e-6);
        assert!((r.direction[0].abs() - r.direction[1].abs()).abs() < 1e-5);

        let single = DMatrix::from_column_slice(2, 1, &[0.6, 0.8]);
        assert!(inradius(&single, 256, 50, 2).unwrap().value < 1e-6);

        // Dense-grid oracle in three dimensions.
        let eye = DMatrix::<f64>::identity(3, 3);
        let est = inradius(&eye, 4096, 50, 3).unwrap().value;
        let mut grid = f64::INFINITY;
        let steps = 60;
        for a in 0..=steps {
            for b in 0..=steps {
                for c in 0..=steps {
                    let v = [a, b, c].map(|x| -1.0 + 2.0 * x as f64 / steps as f64);
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if n > 0.0 {
                        grid = grid.min(v.iter().map(|x| x.abs()).fold(0.0, f64::max) / n);
                    }
                }
            }
        }
        assert!((grid - 1.0 / 3f64.sqrt()).abs() < 1e-3);
        assert!(est >= 1.0 / 3f64.sqrt() - 1e-12);
        assert!((est - 1.0 / 3f64.sqrt()).abs() < 1e-5);
    }

    #[test]
    fn inradius_monotone_in_directions() {
        let mut rng = substream(4, &[]);
        let mut j = DMatrix::from_fn(4, 9, |_, _| StandardNormal.sample(&mut rng));
        for mut c in j.column_iter_mut() {
            let n = c.norm();
            c /= n;
        }
        let mut prev = f64::INFINITY;
        for n in [8, 32, 128, 512, 2048] {
            let v = inradius(&j, n, 10, 77).unwrap().value;
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn model_stats_cases() {
        // Linear single-parent decoder with orthogonal rows.
        let mut j = DMatrix::zeros(3, 6);
        for i in 0..6 {
            j[(i % 3, i)] = 0.5 + i as f64;
        }
        let s = structured_model_stats_from(&[j.clone(), j.clone()], 1).unwrap();
        assert_eq!(s.mu, 0.0);
        assert!(s.delta.iter().all(|&d| d.abs() < 1e-15));
        assert_eq!(s.gamma_min, 2);
        assert_eq!(s.max_parents, 1);

        let mut rng = substream(5, &[]);
        let samples: Vec<DMatrix<f64>> = (0..10)
            .map(|_| DMatrix::from_fn(3, 7, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        let s3 = structured_model_stats_from(&samples, 3).unwrap();
        assert!((s3.kappa - sorted_eigenvalues(&s3.sigma)[0]).abs() < 1e-12);
        let s1 = structured_model_stats_from(&samples, 1).unwrap();
        let s2 = structured_model_stats_from(&samples, 2).unwrap();
        assert!(s1.kappa >= s2.kappa && s2.kappa >= s3.kappa);
        assert!(s3.mu >= 0.0 && s3.mu <= 1.0);

        // Scaling one latent row leaves μ unchanged.
        let scaled: Vec<DMatrix<f64>> = samples
            .iter()
            .map(|m| {
                let mut m = m.clone();
                m.row_mut(1).scale_mut(7.5);
                m
            })
            .collect();
        let ss = structured_model_stats_from(&scaled, 1).unwrap();
        assert!((ss.mu - s1.mu).abs() < 1e-12);

        let mut inert = samples[0].clone();
        inert.row_mut(2).fill(0.0);
        let si = structured_model_stats_from(&[inert], 1).unwrap();
        assert_eq!(si.inert, vec![2]);

        let big = DMatrix::zeros(13, 2);
        assert!(matches!(structured_model_stats_from(&[big], 2), Err(Error::DeskScale(_))));
    }

    #[test]
    fn decoder_stats_run() {
        let g = generate_structure(&StructureParams::new(20, 4, 3)).unwrap();
        let d = DecoderParams::random(&g, 3);
        let mut rng = substream(3, &[9]);
        let zs: Vec<Vec<f64>> = (0..64)
            .map(|_| (0..4).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let s = structured_model_stats(&d, &zs, 2).unwrap();
        assert_eq!(s.max_parents, 1);
        assert!(s.m.iter().all(|&v| v >= 0.0));
        assert!(estimate_subgaussian_k(&zs).unwrap() > 0.0);
        assert!(estimate_hessian_bound(&d, &zs[..4], 1e-4).is_finite());
    }

    #[test]
    fn basis_estimation_cases() {
        let v = DVector::from_column_slice(&[1.0, 2.0, 0.5]);
        let j = DMatrix::from_columns(&[v.clone(), v.clone() * -3.0, v * 0.1]);
        let b = estimate_bases(&j, &[0, 0, 0]).unwrap();
        assert_eq!(b[0].dim(), 1);

        let plane = coord(5, &[1, 3]);
        let mut rng = substream(6, &[]);
        let cols = DMatrix::from_fn(2, 6, |_, _| StandardNormal.sample(&mut rng));
        let j = &plane * cols;
        let b = estimate_bases(&j, &[0; 6]).unwrap();
        assert!((affinity(&b[0].basis, &plane).unwrap() - 2f64.sqrt()).abs() < 1e-8);

        let all = DMatrix::from_fn(3, 10, |_, _| StandardNormal.sample(&mut rng));
        assert!(estimate_bases(&all, &[0; 10]).unwrap()[0].dim() <= 3);
        assert!(matches!(estimate_bases(&all, &[0, 0, 0, 0, 0, 2, 2, 2, 2, 2]), Err(Error::EmptyGroup { label: 1 })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn affinity_symmetric_and_bounded(seed in 0u64..100_000, da in 1usize..4, db in 1usize..4) {
            let u = random_basis(6, da, seed);
            let v = random_basis(6, db, seed ^ 0xabcdef);
            let a = affinity(&u, &v).unwrap();
            let b = affinity(&v, &u).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a >= 0.0 && a <= (da.min(db) as f64).sqrt() + 1e-12);
        }
    }
}
