//! Decoder Jacobians, expected Gram matrices and the probe-based
//! self-expression penalty.
//!
//! A Jacobian is `d_z × d_x`; column `i` is ∇_z f_i.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::latentgen::DecoderParams;
use crate::linalg::{frobenius_sq, pairwise_sum};
use crate::rng::{substream, tags};

pub const DEFAULT_PROBES: usize = 4;
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Closed-form Jacobian of the decoder mean: column `i` is `μ′(u_i) · W_iᵀ`.
pub fn analytic_jacobian(z: &[f64], d: &DecoderParams) -> DMatrix<f64> {
    let u = d.mixing(z);
    let mut j = d.weights.transpose();
    for (i, mut col) in j.column_iter_mut().enumerate() {
        col *= d.mean_net.derivative(u[i]);
    }
    j
}

/// Central finite-difference Jacobian of a black-box map `R^{d_z} → R^{d_x}`.
pub fn finite_difference_jacobian<F>(f: F, z: &[f64], step: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let d_z = z.len();
    let d_x = f(z).len();
    let mut j = DMatrix::zeros(d_z, d_x);
    let mut zp = z.to_vec();
    for k in 0..d_z {
        zp[k] = z[k] + step;
        let fp = f(&zp);
        zp[k] = z[k] - step;
        let fm = f(&zp);
        zp[k] = z[k];
        for i in 0..d_x {
            j[(k, i)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    j
}

/// Rescales every column to unit Euclidean norm.
pub fn normalize_columns(j: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = j.clone();
    for (i, mut col) in out.column_iter_mut().enumerate() {
        let n = col.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroColumn { feature: i });
        }
        col /= n;
    }
    Ok(out)
}

/// Gram `(1/S′) Σ_s J_sᵀ J_s` with pairwise accumulation over samples.
pub fn gram_of(samples: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("at least one Jacobian sample is required".into()));
    }
    let grams: Vec<DMatrix<f64>> = samples.par_iter().map(|j| j.transpose() * j).collect();
    let mut g = pairwise_sum(&grams).expect("non-empty");
    g /= samples.len() as f64;
    Ok((&g + g.transpose()) * 0.5)
}

/// Per-sample Jacobians with their expected Gram matrix.
#[derive(Debug, Clone)]
pub struct JacobianEnsemble {
    pub samples: Vec<DMatrix<f64>>,
    pub normalized: bool,
    pub gram: DMatrix<f64>,
}

impl JacobianEnsemble {
    pub fn from_latents(latents: &[Vec<f64>], d: &DecoderParams, normalize: bool) -> Result<Self> {
        if latents.is_empty() {
            return Err(Error::InvalidArgument("at least one latent sample is required".into()));
        }
        let samples: Vec<DMatrix<f64>> = latents
            .par_iter()
            .map(|z| {
                let j = analytic_jacobian(z, d);
                if normalize {
                    normalize_columns(&j)
                } else {
                    Ok(j)
                }
            })
            .collect::<Result<_>>()?;
        let gram = gram_of(&samples)?;
        Ok(Self {
            samples,
            normalized: normalize,
            gram,
        })
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn mean_jacobian(&self) -> DMatrix<f64> {
        let mut m = pairwise_sum(&self.samples).expect("non-empty ensemble");
        m /= self.samples.len() as f64;
        m
    }
}

/// Expected Gram matrix of the (optionally column-normalized) Jacobian.
pub fn expected_gram(latents: &[Vec<f64>], d: &DecoderParams, normalize: bool) -> Result<DMatrix<f64>> {
    Ok(JacobianEnsemble::from_latents(latents, d, normalize)?.gram)
}

/// Exact penalty `‖J (I − C)‖²_F`.
pub fn exact_penalty(j: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    frobenius_sq(&(j - j * c))
}

/// Anything that can apply a (mean) Jacobian to a feature-space vector.
pub trait JacobianOperator {
    fn d_x(&self) -> usize;
    /// Returns `J v` (length `d_z`).
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;
}

impl JacobianOperator for DMatrix<f64> {
    fn d_x(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self * v
    }
}

/// Mean decoder Jacobian over a set of latent samples, applied matrix-free:
/// `J(z) v = Σ_i v_i μ′(u_i) W_iᵀ` never forms per-feature gradients.
pub struct DecoderJacobian<'a> {
    pub decoder: &'a DecoderParams,
    pub latents: &'a [Vec<f64>],
    pub normalize: bool,
}

impl JacobianOperator for DecoderJacobian<'_> {
    fn d_x(&self) -> usize {
        self.decoder.d_x()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let d = self.decoder;
        let row_norms: Vec<f64> = d.weights.row_iter().map(|r| r.norm()).collect();
        let mut acc = DVector::zeros(d.d_z());
        for z in self.latents {
            let u = d.mixing(z);
            for i in 0..d.d_x() {
                let g = d.mean_net.derivative(u[i]);
                let w = if self.normalize {
                    if g == 0.0 {
                        0.0
                    } else {
                        g.signum() / row_norms[i]
                    }
                } else {
                    g
                };
                let coef = v[i] * w;
                if coef != 0.0 {
                    acc += d.weights.row(i).transpose() * coef;
                }
            }
        }
        acc / self.latents.len().max(1) as f64
    }
}

fn probe_residuals(c: &DMatrix<f64>, probes: usize, seed: u64) -> Vec<DVector<f64>> {
    let d_x = c.nrows();
    let mut rng = substream(seed, &[tags::PROBES]);
    (0..probes)
        .map(|_| {
            let eps = DVector::from_fn(d_x, |_, _| StandardNormal.sample(&mut rng));
            &eps - c * &eps
        })
        .collect()
}

/// `(1/S) Σ_i ‖J̄ (ε_i − C ε_i)‖²` with standard normal probes: an unbiased
/// estimate of `‖J̄ (I − C)‖²_F`.
pub fn hutchinson_penalty(j_bar: &DMatrix<f64>, c: &DMatrix<f64>, probes: usize, seed: u64) -> Result<f64> {
    hutchinson_penalty_op(j_bar, c, probes, seed)
}

/// Probe estimator over any Jacobian operator; performs exactly `probes`
/// operator applications.
pub fn hutchinson_penalty_op<J: JacobianOperator + ?Sized>(
    j: &J,
    c: &DMatrix<f64>,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    if probes == 0 {
        return Err(Error::InvalidArgument("probe count must be at least 1".into()));
    }
    if c.nrows() != j.d_x() || c.ncols() != j.d_x() {
        return Err(Error::DimensionMismatch(format!(
            "C is {}x{}, Jacobian has {} columns",
            c.nrows(),
            c.ncols(),
            j.d_x()
        )));
    }
    let total: f64 = probe_residuals(c, probes, seed)
        .iter()
        .map(|v| j.apply(v).norm_squared())
        .sum();
    Ok(total / probes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latentgen::decode;
    use crate::rng::Rng;
    use crate::structure::{generate_structure, StructureParams};
    use rand::Rng as _;
    use std::cell::Cell;

    fn setup(seed: u64) -> (crate::structure::StructuralGraph, DecoderParams) {
        let g = generate_structure(&StructureParams::new(15, 4, seed).with_overlap(0.6)).unwrap();
        let d = DecoderParams::random(&g, seed + 100);
        (g, d)
    }

    fn latents(n: usize, d_z: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d_z).map(|_| StandardNormal.sample(rng)).collect())
            .collect()
    }

    #[test]
    fn constant_mean_network_gives_zero_jacobian() {
        let (_, mut d) = setup(1);
        d.mean_net.w2.fill(0.0);
        let j = analytic_jacobian(&[0.1, 0.2, 0.3, 0.4], &d);
        assert!(j.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn agrees_with_central_differences() {
        let (g, d) = setup(2);
        let mut rng = substream(3, &[]);
        for _ in 0..20 {
            let z: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
            let a = analytic_jacobian(&z, &d);
            let f = finite_difference_jacobian(|zz| decode(zz, &d).0, &z, DEFAULT_FD_STEP);
            assert!((&a - &f).amax() <= 1e-5);
            for i in 0..15 {
                for k in 0..4 {
                    if !g.get(i, k) {
                        assert_eq!(a[(k, i)], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn normalization() {
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(normalize_columns(&j).unwrap(), j);
        let mut scaled = DMatrix::from_row_slice(2, 2, &[0.6, 3.0, 0.8, -4.0]);
        let once = normalize_columns(&scaled).unwrap();
        scaled.column_mut(0).scale_mut(7.0);
        assert!((normalize_columns(&scaled).unwrap() - &once).amax() < 1e-15);
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(normalize_columns(&z), Err(Error::ZeroColumn { feature: 1 })));

        let mut rng = substream(5, &[]);
        let r = DMatrix::from_fn(6, 30, |_, _| rng.random_range(-2.0..2.0));
        let n = normalize_columns(&r).unwrap();
        for c in n.column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_sample_gram_is_jtj() {
        let (_, d) = setup(4);
        let z = vec![vec![0.3, -0.2, 0.9, 1.2]];
        let ens = JacobianEnsemble::from_latents(&z, &d, true).unwrap();
        let j = &ens.samples[0];
        assert!((&ens.gram - j.transpose() * j).amax() < 1e-15);
        for i in 0..15 {
            assert!((ens.gram[(i, i)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_zero_for_disjoint_parents_and_naive_consistency() {
        let (g, d) = setup(6);
        let mut rng = substream(6, &[]);
        let z = latents(200, 4, &mut rng);
        let ens = JacobianEnsemble::from_latents(&z, &d, false).unwrap();
        for i in 0..15 {
            for k in 0..15 {
                let shared = (0..4).any(|l| g.get(i, l) && g.get(k, l));
                if !shared {
                    assert_eq!(ens.gram[(i, k)], 0.0);
                }
            }
        }
        let mut naive = DMatrix::zeros(15, 15);
        for j in &ens.samples {
            naive += j.transpose() * j;
        }
        naive /= 200.0;
        assert!((&naive - &ens.gram).amax() < 1e-12);
        let eig = crate::linalg::sorted_eigenvalues(&ens.gram);
        assert!(eig[0] > -1e-10);
    }

    #[test]
    fn monte_carlo_gram_converges() {
        let (_, d) = setup(8);
        let mut rng = substream(8, &[]);
        let z_small = latents(10_000, 4, &mut rng);
        let z_large = latents(100_000, 4, &mut rng);
        let small = JacobianEnsemble::from_latents(&z_small, &d, true).unwrap();
        let large = expected_gram(&z_large, &d, true).unwrap();
        // standard error of each entry from the small ensemble
        for i in 0..15 {
            for k in 0..15 {
                let vals: Vec<f64> = small
                    .samples
                    .iter()
                    .map(|j| j.column(i).dot(&j.column(k)))
                    .collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt();
                let se = sd / (vals.len() as f64).sqrt();
                let diff = (small.gram[(i, k)] - large[(i, k)]).abs();
                assert!(diff <= 3.0 * se + 1e-12, "({i},{k}) diff {diff} se {se}");
            }
        }
    }

    #[test]
    fn penalty_identities() {
        let mut rng = substream(10, &[]);
        let j = DMatrix::from_fn(3, 7, |_, _| rng.random_range(-1.0..1.0));
        let eye = DMatrix::identity(7, 7);
        assert_eq!(hutchinson_penalty(&j, &eye, 5, 1).unwrap(), 0.0);
        let zero = DMatrix::zeros(7, 7);
        let est = hutchinson_penalty(&j, &zero, 200_000, 2).unwrap();
        assert!((est - frobenius_sq(&j)).abs() / frobenius_sq(&j) < 0.01);
        assert!(hutchinson_penalty(&j, &zero, 0, 1).is_err());
    }

    #[test]
    fn hutchinson_close_to_exact_on_fixed_instance() {
        let mut rng = substream(11, &[]);
        let j = DMatrix::from_fn(8, 20, |_, _| StandardNormal.sample(&mut rng));
        let mut c = DMatrix::from_fn(20, 20, |_, _| 0.1 * rng.random_range(-1.0..1.0));
        c.fill_diagonal(0.0);
        let exact = exact_penalty(&j, &c);
        let est = hutchinson_penalty(&j, &c, 10_000, 3).unwrap();
        assert!((est - exact).abs() / exact < 0.03);
    }

    #[test]
    fn averaging_over_seeds_converges() {
        let mut rng = substream(12, &[]);
        let j = DMatrix::from_fn(4, 9, |_, _| rng.random_range(-1.0..1.0));
        let c = DMatrix::from_fn(9, 9, |r, s| if r == s { 0.0 } else { 0.05 * ((r + 2 * s) % 5) as f64 });
        let exact = exact_penalty(&j, &c);
        let mean: f64 = (0..400)
            .map(|s| hutchinson_penalty(&j, &c, 50, s).unwrap())
            .sum::<f64>()
            / 400.0;
        assert!((mean - exact).abs() / exact < 0.02);
    }

    struct Counting<'a> {
        inner: &'a DMatrix<f64>,
        calls: Cell<usize>,
    }

    impl JacobianOperator for Counting<'_> {
        fn d_x(&self) -> usize {
            self.inner.ncols()
        }
        fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
            self.calls.set(self.calls.get() + 1);
            self.inner * v
        }
    }

    #[test]
    fn probe_cost_contract() {
        let j = DMatrix::from_element(2, 5, 0.5);
        let c = DMatrix::zeros(5, 5);
        let op = Counting {
            inner: &j,
            calls: Cell::new(0),
        };
        hutchinson_penalty_op(&op, &c, 4, 0).unwrap();
        assert_eq!(op.calls.get(), 4);
    }

    #[test]
    fn matrix_free_operator_matches_materialized_mean() {
        let (_, d) = setup(13);
        let mut rng = substream(13, &[]);
        let z = latents(7, 4, &mut rng);
        let ens = JacobianEnsemble::from_latents(&z, &d, true).unwrap();
        let j_bar = ens.mean_jacobian();
        let op = DecoderJacobian {
            decoder: &d,
            latents: &z,
            normalize: true,
        };
        let v = DVector::from_fn(15, |i, _| (i as f64 * 0.37).sin());
        assert!((op.apply(&v) - &j_bar * &v).amax() < 1e-12);
    }
}
