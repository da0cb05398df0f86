//! Nonlinear non-Gaussian latent process and sparsity-respecting decoder.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, tags, Rng};
use crate::structure::StructuralGraph;

pub const HIDDEN_WIDTH: usize = 16;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

/// Parameters of `z_t = LeakyReLU(Σ_h sin(z_lag[h] · B_h) + ε_t)`, with
/// `ε_t ~ Laplace(0, noise_scale)`.
///
/// The lag window is kept oldest first: `transitions[h]` multiplies the
/// `h`-th oldest latent in the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentProcessParams {
    pub lag: usize,
    pub d_z: usize,
    pub transitions: Vec<DMatrix<f64>>,
    pub leaky_slope: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl LatentProcessParams {
    /// Transition entries uniform on [-1, 1].
    pub fn random(d_z: usize, lag: usize, noise_scale: f64, seed: u64) -> Self {
        let mut rng = substream(seed, &[tags::TRANSITIONS]);
        let transitions = (0..lag)
            .map(|_| DMatrix::from_fn(d_z, d_z, |_, _| rng.random_range(-1.0..=1.0)))
            .collect();
        Self {
            lag,
            d_z,
            transitions,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            noise_scale,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lag == 0 {
            return Err(Error::InvalidArgument("lag order must be at least 1".into()));
        }
        if self.transitions.len() != self.lag {
            return Err(Error::DimensionMismatch(format!(
                "{} transition matrices for lag {}",
                self.transitions.len(),
                self.lag
            )));
        }
        for b in &self.transitions {
            if b.nrows() != self.d_z || b.ncols() != self.d_z {
                return Err(Error::DimensionMismatch("transition matrix must be d_z × d_z".into()));
            }
            if !b.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("transition matrix".into()));
            }
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "leaky slope must lie in (0, 1), got {}",
                self.leaky_slope
            )));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::NonFinite("noise scale".into()));
        }
        Ok(())
    }
}

/// Dense row-major `n × steps × dim` tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    pub shape: [usize; 3],
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(shape: [usize; 3]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape[0] * shape[1] * shape[2]],
        }
    }

    pub fn vector(&self, n: usize, t: usize) -> &[f64] {
        let d = self.shape[2];
        let off = (n * self.shape[1] + t) * d;
        &self.data[off..off + d]
    }

    fn vector_mut(&mut self, n: usize, t: usize) -> &mut [f64] {
        let d = self.shape[2];
        let off = (n * self.shape[1] + t) * d;
        &mut self.data[off..off + d]
    }

    /// All `(n, t)` vectors in row-major order.
    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.shape[2].max(1))
    }

    /// Vectors at a single time index across the batch.
    pub fn slice_at(&self, t: usize) -> Vec<Vec<f64>> {
        (0..self.shape[0]).map(|n| self.vector(n, t).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A scalar network `u ↦ b2 + Σ_k w2_k · LeakyReLU(w1_k · u + b1_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarNet {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub slope: f64,
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

impl ScalarNet {
    /// Uniform fan-in initialisation: first layer on [-1, 1], second on
    /// [-1/√width, 1/√width].
    pub fn random(width: usize, slope: f64, rng: &mut Rng) -> Self {
        let bound2 = 1.0 / (width as f64).sqrt();
        let w1 = (0..width).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let b1 = (0..width).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let w2 = (0..width).map(|_| rng.random_range(-bound2..=bound2)).collect();
        let b2 = rng.random_range(-bound2..=bound2);
        Self {
            w1,
            b1,
            w2,
            b2,
            slope,
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.b2
            + self
                .w1
                .iter()
                .zip(&self.b1)
                .zip(&self.w2)
                .map(|((a, b), v)| v * leaky(a * u + b, self.slope))
                .sum::<f64>()
    }

    /// d eval / du (right derivative at kinks).
    pub fn derivative(&self, u: f64) -> f64 {
        self.w1
            .iter()
            .zip(&self.b1)
            .zip(&self.w2)
            .map(|((a, b), v)| {
                let s = if a * u + b >= 0.0 { 1.0 } else { self.slope };
                v * a * s
            })
            .sum()
    }
}

/// Decoder `x_i ~ N(μ(u_i), σ(u_i)²)` with `u = W z` and `W = Γ ⊙ U[0.1, 1]`.
///
/// Both networks are scalar and shared across coordinates, so feature `i`
/// depends on `z` only through `u_i = ⟨W_i, z⟩` and its parents are exactly
/// the support of row `i` of Γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderParams {
    pub weights: DMatrix<f64>,
    pub mean_net: ScalarNet,
    pub scale_net: ScalarNet,
    pub seed: u64,
}

impl DecoderParams {
    pub fn random(g: &StructuralGraph, seed: u64) -> Self {
        let mut rng = substream(seed, &[tags::DECODER]);
        let weights = DMatrix::from_fn(g.d_x(), g.d_z(), |i, k| {
            let b: f64 = rng.random_range(0.1..=1.0);
            if g.get(i, k) {
                b
            } else {
                0.0
            }
        });
        let mean_net = ScalarNet::random(HIDDEN_WIDTH, DEFAULT_LEAKY_SLOPE, &mut rng);
        let scale_net = ScalarNet::random(HIDDEN_WIDTH, DEFAULT_LEAKY_SLOPE, &mut rng);
        Self {
            weights,
            mean_net,
            scale_net,
            seed,
        }
    }

    pub fn d_x(&self) -> usize {
        self.weights.nrows()
    }

    pub fn d_z(&self) -> usize {
        self.weights.ncols()
    }

    /// u = W z.
    pub fn mixing(&self, z: &[f64]) -> DVector<f64> {
        &self.weights * DVector::from_column_slice(z)
    }

    pub fn decode(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        decode(z, self)
    }
}

pub fn decode(z: &[f64], d: &DecoderParams) -> (Vec<f64>, Vec<f64>) {
    let u = d.mixing(z);
    let mean = u.iter().map(|&v| d.mean_net.eval(v)).collect();
    let scale = u.iter().map(|&v| softplus(d.scale_net.eval(v))).collect();
    (mean, scale)
}

pub fn sample_observed(z: &[f64], d: &DecoderParams, rng: &mut Rng) -> Vec<f64> {
    let (mean, scale) = decode(z, d);
    mean.iter()
        .zip(&scale)
        .map(|(m, s)| {
            let e: f64 = StandardNormal.sample(rng);
            m + s * e
        })
        .collect()
}

fn laplace(scale: f64, rng: &mut Rng) -> f64 {
    let e: f64 = Exp1.sample(rng);
    if rng.random::<bool>() {
        scale * e
    } else {
        -scale * e
    }
}

/// Simulates `n` trajectories of `lag + t` steps (lag block first).
///
/// The lag block is drawn standard normal and standardised across the batch
/// for every (lag, coordinate) pair; later steps are not re-normalised.
pub fn simulate_latent(p: &LatentProcessParams, n: usize, t: usize) -> Result<Tensor3> {
    p.validate()?;
    if n == 0 || t == 0 {
        return Err(Error::InvalidArgument("N and T must be at least 1".into()));
    }
    let (h, d) = (p.lag, p.d_z);
    let mut lags: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let mut rng = substream(p.seed, &[tags::LATENT, r as u64, 0]);
            (0..h * d).map(|_| StandardNormal.sample(&mut rng)).collect()
        })
        .collect();
    if n > 1 {
        for idx in 0..h * d {
            let mean = lags.iter().map(|l| l[idx]).sum::<f64>() / n as f64;
            let var = lags.iter().map(|l| (l[idx] - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            for l in lags.iter_mut() {
                l[idx] -= mean;
                if sd > 0.0 {
                    l[idx] /= sd;
                }
            }
        }
    }

    let trajectories: Vec<Vec<f64>> = lags
        .into_par_iter()
        .enumerate()
        .map(|(r, lag_block)| {
            let mut rng = substream(p.seed, &[tags::LATENT, r as u64, 1]);
            let mut out = Vec::with_capacity((h + t) * d);
            out.extend_from_slice(&lag_block);
            let mut window: VecDeque<Vec<f64>> = lag_block.chunks(d).map(|c| c.to_vec()).collect();
            for _ in 0..t {
                let mut z: Vec<f64> = (0..d).map(|_| laplace(p.noise_scale, &mut rng)).collect();
                for (past, b) in window.iter().zip(&p.transitions) {
                    for (k, zk) in z.iter_mut().enumerate() {
                        let proj: f64 = (0..d).map(|l| past[l] * b[(l, k)]).sum();
                        *zk += proj.sin();
                    }
                }
                for zk in z.iter_mut() {
                    *zk = leaky(*zk, p.leaky_slope);
                }
                out.extend_from_slice(&z);
                window.pop_front();
                window.push_back(z);
            }
            out
        })
        .collect();

    let mut tensor = Tensor3::zeros([n, h + t, d]);
    for (r, traj) in trajectories.iter().enumerate() {
        for step in 0..h + t {
            tensor
                .vector_mut(r, step)
                .copy_from_slice(&traj[step * d..(step + 1) * d]);
        }
    }
    if !tensor.is_finite() {
        return Err(Error::NonFinite("simulated latent trajectories".into()));
    }
    Ok(tensor)
}

/// Latent and observed trajectories from one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub z: Tensor3,
    pub x: Tensor3,
    pub lag: usize,
    pub seed: u64,
}

impl TrajectorySet {
    pub fn steps(&self) -> usize {
        self.z.shape[1] - self.lag
    }
}

/// Simulates latents and decodes every step (lag block included) into observations.
pub fn generate_trajectories(
    p: &LatentProcessParams,
    d: &DecoderParams,
    n: usize,
    t: usize,
) -> Result<TrajectorySet> {
    if d.d_z() != p.d_z {
        return Err(Error::DimensionMismatch(format!(
            "decoder expects d_z = {}, process has {}",
            d.d_z(),
            p.d_z
        )));
    }
    let z = simulate_latent(p, n, t)?;
    let steps = z.shape[1];
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(p.seed, &[tags::OBSERVED, r as u64]);
            (0..steps)
                .flat_map(|s| sample_observed(z.vector(r, s), d, &mut rng))
                .collect()
        })
        .collect();
    let x = Tensor3 {
        shape: [n, steps, d.d_x()],
        data: rows.concat(),
    };
    if !x.is_finite() {
        return Err(Error::NonFinite("decoded observations".into()));
    }
    Ok(TrajectorySet {
        z,
        x,
        lag: p.lag,
        seed: p.seed,
    })
}
