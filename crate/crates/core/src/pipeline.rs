//! End-to-end experiments: generate → decode → Jacobians → self-expression →
//! cluster → score, for disjoint and overlapping structures, plus the
//! consolidated verification suite.
//!
//! Every stage is a pure function of the configuration, the seed and the
//! previous stage's outputs, so a staged run reproduces a monolithic one.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    affinity_from_c, component_labels, eigengap_k_bounded, laplacian, round_memberships, saac_with,
    spectral_cluster, symnmf, zero_eigen_multiplicity, ClusterMode, ClusterResult, Eigengap,
    LaplacianVariant, SaacRule, DEFAULT_TIE_TOL, ZERO_EIGEN_TOL,
};
use crate::error::{Error, Result};
use crate::geometry::{detection_vs_affinity, sample_complexity};
use crate::io::{fmt_f64, write_json};
use crate::jacobian::{
    analytic_jacobian, exact_penalty, expected_gram, finite_difference_jacobian, hutchinson_penalty,
    DEFAULT_FD_STEP,
};
use crate::latentgen::{generate_trajectories, DecoderParams, LatentProcessParams, Tensor3, TrajectorySet};
use crate::metrics::{
    evaluate_cover, evaluate_partition, random_baseline, random_cover_baseline, MetricReport, Stat,
};
use crate::rng::{substream, tags};
use crate::selfexpr::{
    check_subspace_detection, solve_constrained_column, solve_lambda_path, solve_penalized_column,
    support_size, ColumnVerdict, DetectionReport,
};
use crate::stability::{
    calibrate_stability_lambda, generalization_sweep, norm_checks, perturb_and_check, posterior_bias_check,
    GeneralizationOptions,
};
use crate::structure::{
    generate_structure, GroundTruth, StructuralGraph,
    StructureParams,
};

pub const METRIC_NAMES: [&str; 5] = ["vmeasure", "onmi", "f1", "omega", "misclassification"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructureConfig {
    pub d_x: usize,
    pub m: usize,
    pub min_per_subspace: usize,
    pub alpha: f64,
    pub max_extra_parents: usize,
    /// Explicit Γ rows; overrides the random draw when present.
    pub rows: Option<Vec<Vec<u8>>>,
}

impl Default for StructureConfig {
    fn default() -> Self {
        Self {
            d_x: 60,
            m: 5,
            min_per_subspace: crate::structure::DEFAULT_MIN_PER_SUBSPACE,
            alpha: 0.0,
            max_extra_parents: crate::structure::DEFAULT_MAX_EXTRA_PARENTS,
            rows: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentConfig {
    /// Lag `H`.
    pub lag: usize,
    /// Steps per trajectory `T`.
    pub steps: usize,
    /// Trajectories `N`.
    pub trajectories: usize,
    pub noise: f64,
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self {
            lag: 2,
            steps: 50,
            trajectories: 200,
            noise: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JacobianConfig {
    /// Latent samples `S′` behind the Gram matrix.
    pub samples: usize,
    pub normalize: bool,
}

impl Default for JacobianConfig {
    fn default() -> Self {
        Self {
            samples: 256,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaPolicy {
    /// Highest strict detection pass rate against ground truth, ties to the
    /// sparsest `C`.
    #[default]
    Detection,
    /// Largest Laplacian eigengap; needs no ground truth.
    Eigengap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub lambdas: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub support_threshold: f64,
    pub policy: LambdaPolicy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
            tol: crate::selfexpr::DEFAULT_TOL,
            max_iter: crate::selfexpr::DEFAULT_MAX_ITER,
            support_threshold: crate::selfexpr::DEFAULT_SUPPORT_THRESHOLD,
            policy: LambdaPolicy::Detection,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KPolicy {
    #[default]
    Eigengap,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub mode: ClusterMode,
    pub k_policy: KPolicy,
    /// Cluster count for the fixed policy; defaults to `m`.
    pub k: Option<usize>,
    /// Largest `k` the eigengap may select; defaults to `d_x / 2`.
    pub max_k: Option<usize>,
    pub laplacian: LaplacianVariant,
    pub nmf_max_iter: usize,
    pub nmf_tol: f64,
    pub tie_tol: f64,
    pub saac_rule: SaacRule,
    pub saac_max_iter: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            mode: ClusterMode::Disjoint,
            k_policy: KPolicy::Eigengap,
            k: None,
            max_k: None,
            laplacian: LaplacianVariant::Unnormalized,
            nmf_max_iter: 2000,
            nmf_tol: 1e-9,
            tie_tol: DEFAULT_TIE_TOL,
            saac_rule: SaacRule::Nearest,
            saac_max_iter: 300,
        }
    }
}

/// Scales of the verification suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub round_trip_instances: usize,
    pub hutchinson_probes: usize,
    pub hutchinson_reps: usize,
    pub epsilons: Vec<f64>,
    pub delta: f64,
    pub stability_trials: usize,
    pub generalization_n: Vec<usize>,
    pub generalization_pool: usize,
    pub generalization_reps: usize,
    pub generalization_radius: f64,
    pub bias_trials: usize,
    pub bias_samples: usize,
    pub fd_points: usize,
    pub affinity_thetas: Vec<f64>,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            round_trip_instances: 20,
            hutchinson_probes: 10_000,
            hutchinson_reps: 20,
            epsilons: vec![0.005, 0.01, 0.02],
            delta: 0.05,
            stability_trials: 1000,
            generalization_n: vec![250, 1000, 4000, 16000],
            generalization_pool: 100_000,
            generalization_reps: 8,
            generalization_radius: 2.0,
            bias_trials: 100,
            bias_samples: 200,
            fd_points: 20,
            affinity_thetas: vec![1.5, 1.2, 0.9, 0.6, 0.3, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub structure: StructureConfig,
    pub latent: LatentConfig,
    pub jacobian: JacobianConfig,
    pub solver: SolverConfig,
    pub cluster: ClusterConfig,
    pub theory: TheoryConfig,
    pub metrics: Vec<String>,
    pub seeds: Vec<u64>,
    /// Decoder seed; each run seed is used when absent.
    pub decoder_seed: Option<u64>,
    pub baseline_trials: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            structure: StructureConfig::default(),
            latent: LatentConfig::default(),
            jacobian: JacobianConfig::default(),
            solver: SolverConfig::default(),
            cluster: ClusterConfig::default(),
            theory: TheoryConfig::default(),
            metrics: METRIC_NAMES.iter().map(|s| s.to_string()).collect(),
            seeds: (0..10).collect(),
            decoder_seed: None,
            baseline_trials: 200,
        }
    }
}

fn cfg_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_toml_str(&s).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Field-level checks beyond what deserialization enforces.
    pub fn validate(&self) -> Result<()> {
        let s = &self.structure;
        if s.m == 0 {
            return Err(cfg_err("structure.m", "must be at least 1"));
        }
        if s.rows.is_none() && s.d_x < s.m * s.min_per_subspace {
            return Err(cfg_err(
                "structure.d_x",
                format!(
                    "d_x = {} < M * min_per_subspace = {} * {}",
                    s.d_x, s.m, s.min_per_subspace
                ),
            ));
        }
        if !(s.alpha >= 0.0 && s.alpha.is_finite()) {
            return Err(cfg_err("structure.alpha", "must be finite and nonnegative"));
        }
        let l = &self.latent;
        if l.steps == 0 || l.trajectories == 0 {
            return Err(cfg_err("latent", "steps and trajectories must be at least 1"));
        }
        if !(l.noise >= 0.0 && l.noise.is_finite()) {
            return Err(cfg_err("latent.noise", "must be finite and nonnegative"));
        }
        if self.jacobian.samples == 0 {
            return Err(cfg_err("jacobian.samples", "must be at least 1"));
        }
        if self.jacobian.samples > l.steps * l.trajectories {
            return Err(cfg_err(
                "jacobian.samples",
                format!("exceeds the {} simulated latent vectors", l.steps * l.trajectories),
            ));
        }
        if self.solver.lambdas.is_empty() {
            return Err(cfg_err("solver.lambdas", "grid must be nonempty"));
        }
        if self.solver.lambdas.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(cfg_err("solver.lambdas", "entries must be positive and finite"));
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(cfg_err("solver", "tol must be positive and max_iter at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(cfg_err("seeds", "list must be nonempty"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(cfg_err("seeds", "must be distinct"));
        }
        if self.metrics.is_empty() {
            return Err(cfg_err("metrics", "set must be nonempty"));
        }
        if let Some(m) = self.metrics.iter().find(|m| !METRIC_NAMES.contains(&m.as_str())) {
            return Err(cfg_err("metrics", format!("unknown metric {m:?}; known: {METRIC_NAMES:?}")));
        }
        if self.cluster.k == Some(0) {
            return Err(cfg_err("cluster.k", "must be at least 1"));
        }
        if self.cluster.tie_tol < 0.0 {
            return Err(cfg_err("cluster.tie_tol", "must be nonnegative"));
        }
        if self.baseline_trials == 0 {
            return Err(cfg_err("baseline_trials", "must be at least 1"));
        }
        let t = &self.theory;
        if t.epsilons.is_empty() || t.generalization_n.is_empty() || t.affinity_thetas.is_empty() {
            return Err(cfg_err("theory", "grids must be nonempty"));
        }
        if !(t.delta > 0.0 && t.delta < 1.0) {
            return Err(cfg_err("theory.delta", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Uniform Γ-less copy: `rows` takes `d_x` and `m` from the explicit matrix.
    fn structure_params(&self, seed: u64) -> StructureParams {
        StructureParams {
            d_x: self.structure.d_x,
            m: self.structure.m,
            min_per_subspace: self.structure.min_per_subspace,
            overlap_alpha: self.structure.alpha,
            max_extra_parents: self.structure.max_extra_parents,
            seed,
        }
    }
}

/// Commented template with every default.
pub fn config_template() -> String {
    let body = ExperimentConfig::default()
        .to_toml_string()
        .expect("default config serializes");
    format!(
        "# Experiment configuration. Every field is optional; shown values are the defaults.\n\
         # cluster.mode: \"disjoint\" | \"overlapping\"; cluster.k_policy: \"eigengap\" | \"fixed\"\n\
         # solver.policy: \"detection\" | \"eigengap\"; metrics: {METRIC_NAMES:?}\n\n{body}"
    )
}

/// Structure, ground truth and simulated trajectories for one seed.
#[derive(Debug, Clone)]
pub struct Generated {
    pub graph: StructuralGraph,
    pub truth: GroundTruth,
    pub process: LatentProcessParams,
    pub trajectories: TrajectorySet,
}

pub fn generate_graph(cfg: &ExperimentConfig, seed: u64) -> Result<StructuralGraph> {
    match &cfg.structure.rows {
        Some(rows) => StructuralGraph::from_rows(rows),
        None => generate_structure(&cfg.structure_params(seed)),
    }
    .map_err(|e| e.at_stage("structure"))
}

pub fn decoder_for(cfg: &ExperimentConfig, graph: &StructuralGraph, seed: u64) -> DecoderParams {
    DecoderParams::random(graph, cfg.decoder_seed.unwrap_or(seed))
}

pub fn process_for(cfg: &ExperimentConfig, graph: &StructuralGraph, seed: u64) -> LatentProcessParams {
    LatentProcessParams::random(graph.d_z(), cfg.latent.lag, cfg.latent.noise, seed)
}

pub fn generate(cfg: &ExperimentConfig, seed: u64) -> Result<Generated> {
    let graph = generate_graph(cfg, seed)?;
    let truth = graph.ground_truth();
    let decoder = decoder_for(cfg, &graph, seed);
    let process = process_for(cfg, &graph, seed);
    let trajectories = generate_trajectories(&process, &decoder, cfg.latent.trajectories, cfg.latent.steps)
        .map_err(|e| e.at_stage("simulate"))?;
    Ok(Generated {
        graph,
        truth,
        process,
        trajectories,
    })
}

/// `S′` post-lag latent vectors drawn without replacement from all
/// trajectories and time steps of `z` (shape `N × (H + T) × d_z`).
pub fn gram_latents(cfg: &ExperimentConfig, z: &Tensor3, lag: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let [n, total, _] = z.shape;
    let steps = total.saturating_sub(lag);
    let pool = n * steps;
    if cfg.jacobian.samples > pool {
        return Err(Error::InvalidArgument(format!(
            "{} Jacobian samples requested from {pool} latent vectors",
            cfg.jacobian.samples
        ))
        .at_stage("jacobian"));
    }
    let mut rng = substream(seed, &[tags::GRAM_SAMPLES]);
    let mut idx = sample(&mut rng, pool, cfg.jacobian.samples).into_vec();
    idx.sort_unstable();
    Ok(idx
        .into_iter()
        .map(|i| z.vector(i / steps, lag + i % steps).to_vec())
        .collect())
}

pub fn gram_for(cfg: &ExperimentConfig, decoder: &DecoderParams, z: &Tensor3, lag: usize, seed: u64) -> Result<DMatrix<f64>> {
    let latents = gram_latents(cfg, z, lag, seed)?;
    expected_gram(&latents, decoder, cfg.jacobian.normalize).map_err(|e| e.at_stage("jacobian"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub strict_pass: f64,
    pub pass: f64,
    pub support: usize,
    pub objective: f64,
    pub converged: bool,
    pub eigengap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub path: Vec<PathPoint>,
    pub selected: usize,
    pub lambda: f64,
    pub detection: DetectionReport,
    #[serde(skip)]
    pub c: DMatrix<f64>,
}

fn max_k_for(cfg: &ExperimentConfig, n: usize) -> usize {
    cfg.cluster.max_k.unwrap_or((n / 2).max(1))
}

/// Solves the λ path and applies the selection policy. With the detection
/// policy, `labels` are the ground-truth groups used for scoring.
pub fn solve_stage(cfg: &ExperimentConfig, gram: &DMatrix<f64>, labels: &[usize]) -> Result<SolveReport> {
    let sc = &cfg.solver;
    let sols = solve_lambda_path(gram, &sc.lambdas, sc.tol, sc.max_iter).map_err(|e| e.at_stage("solve"))?;
    let n = gram.nrows();
    let mut path = Vec::with_capacity(sols.len());
    let mut detections = Vec::with_capacity(sols.len());
    for s in &sols {
        let det = check_subspace_detection(&s.c, labels, sc.support_threshold).map_err(|e| e.at_stage("solve"))?;
        let graph = affinity_from_c(&s.c).map_err(|e| e.at_stage("solve"))?;
        let gap = eigengap_k_bounded(&laplacian(&graph, cfg.cluster.laplacian), max_k_for(cfg, n))
            .map_err(|e| e.at_stage("solve"))?;
        path.push(PathPoint {
            lambda: s.lambda,
            strict_pass: det.strict_pass_fraction,
            pass: det.pass_fraction,
            support: support_size(&s.c, sc.support_threshold),
            objective: s.objective(),
            converged: s.all_converged(),
            eigengap: gap.selected_gap(),
        });
        detections.push(det);
    }
    let better = |a: &PathPoint, b: &PathPoint| -> bool {
        match cfg.solver.policy {
            LambdaPolicy::Detection => {
                a.strict_pass > b.strict_pass || (a.strict_pass == b.strict_pass && a.support < b.support)
            }
            LambdaPolicy::Eigengap => a.eigengap > b.eigengap || (a.eigengap == b.eigengap && a.support < b.support),
        }
    };
    let mut selected = 0;
    for i in 1..path.len() {
        if better(&path[i], &path[selected]) {
            selected = i;
        }
    }
    let mut sols = sols;
    Ok(SolveReport {
        lambda: path[selected].lambda,
        selected,
        detection: detections.swap_remove(selected),
        c: sols.swap_remove(selected).c,
        path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOutcome {
    pub mode: ClusterMode,
    pub eigengap: Option<Eigengap>,
    pub spectral: Option<ClusterResult>,
    pub symnmf: Option<ClusterResult>,
    pub saac: Option<ClusterResult>,
}

/// Disjoint mode: eigengap (or fixed) `k` and spectral clustering.
/// Overlapping mode: SymNMF with rounding and SAAC, both with `k = d_z`.
pub fn cluster_stage(cfg: &ExperimentConfig, c: &DMatrix<f64>, d_z: usize, seed: u64) -> Result<ClusterOutcome> {
    let stage = |e: Error| e.at_stage("cluster");
    let graph = affinity_from_c(c).map_err(stage)?;
    let n = graph.n();
    let cc = &cfg.cluster;
    match cc.mode {
        ClusterMode::Disjoint => {
            let gap = eigengap_k_bounded(&laplacian(&graph, cc.laplacian), max_k_for(cfg, n)).map_err(stage)?;
            let k = match cc.k_policy {
                KPolicy::Eigengap => gap.k,
                KPolicy::Fixed => cc.k.unwrap_or(d_z),
            };
            let res = spectral_cluster(&graph, k.min(n), cc.laplacian, seed).map_err(stage)?;
            Ok(ClusterOutcome {
                mode: ClusterMode::Disjoint,
                eigengap: Some(gap),
                spectral: Some(res),
                symnmf: None,
                saac: None,
            })
        }
        ClusterMode::Overlapping => {
            let k = cc.k.unwrap_or(d_z).min(n);
            let nmf = symnmf(&graph.a, k, cc.nmf_max_iter, cc.nmf_tol, seed).map_err(stage)?;
            let mut rounded = round_memberships(&nmf.y, cc.tie_tol).map_err(stage)?;
            rounded.diagnostics.objective = nmf.objective.clone();
            rounded.diagnostics.iterations = nmf.iterations;
            rounded.diagnostics.converged = nmf.converged;
            let s = saac_with(&graph, k, cc.saac_max_iter, cc.tie_tol, cc.saac_rule, seed).map_err(stage)?;
            Ok(ClusterOutcome {
                mode: ClusterMode::Overlapping,
                eigengap: None,
                spectral: None,
                symnmf: Some(rounded),
                saac: Some(s),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: String,
    pub metrics: MetricReport,
}

/// Baseline rows carry trial means.
fn baseline_score(method: &str, b: &crate::metrics::BaselineReport) -> MethodScore {
    let m = |s: Option<Stat>| s.map(|s| s.mean);
    MethodScore {
        method: method.to_string(),
        metrics: MetricReport {
            homogeneity: m(b.homogeneity),
            completeness: m(b.completeness),
            nmi: m(b.nmi),
            onmi: b.onmi.mean,
            f1: b.f1.mean,
            omega: b.omega.mean,
            misclass_min: f64::NAN,
            misclass_max: f64::NAN,
        },
    }
}

pub const METHOD_SPECTRAL: &str = "SSC";
pub const METHOD_SYMNMF: &str = "SymNMF";
pub const METHOD_SAAC: &str = "SAAC";
pub const METHOD_RANDOM: &str = "Random";

pub fn evaluate_stage(cfg: &ExperimentConfig, outcome: &ClusterOutcome, truth: &GroundTruth, seed: u64) -> Result<Vec<MethodScore>> {
    let stage = |e: Error| e.at_stage("evaluate");
    let n = truth.disjoint.len();
    let mut out = Vec::new();
    match outcome.mode {
        ClusterMode::Disjoint => {
            let res = outcome
                .spectral
                .as_ref()
                .ok_or_else(|| Error::Mode("disjoint outcome without a partition".into()))
                .map_err(stage)?;
            let labels = res
                .labels()
                .ok_or_else(|| Error::Mode("spectral result is not a partition".into()))
                .map_err(stage)?;
            out.push(MethodScore {
                method: METHOD_SPECTRAL.into(),
                metrics: evaluate_partition(&labels, &truth.disjoint).map_err(stage)?,
            });
            let b = random_baseline(&truth.disjoint, cfg.baseline_trials, seed).map_err(stage)?;
            out.push(baseline_score(METHOD_RANDOM, &b));
        }
        ClusterMode::Overlapping => {
            let true_sets: Vec<Vec<usize>> = truth.overlap.iter().filter(|s| !s.is_empty()).cloned().collect();
            for (name, res) in [(METHOD_SYMNMF, &outcome.symnmf), (METHOD_SAAC, &outcome.saac)] {
                let res = res
                    .as_ref()
                    .ok_or_else(|| Error::Mode(format!("overlapping outcome without {name}")))
                    .map_err(stage)?;
                out.push(MethodScore {
                    method: name.into(),
                    metrics: evaluate_cover(&res.sets(), &true_sets, n).map_err(stage)?,
                });
            }
            let b = random_cover_baseline(&true_sets, n, cfg.baseline_trials, seed).map_err(stage)?;
            out.push(baseline_score(METHOD_RANDOM, &b));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub lambda: f64,
    pub k: usize,
    pub strict_pass: f64,
    pub support: usize,
    pub path: Vec<PathPoint>,
    pub methods: Vec<MethodScore>,
}

/// Everything a seed run produces, kept together for staged output.
#[derive(Debug, Clone)]
pub struct SeedArtifacts {
    pub generated: Generated,
    pub gram: DMatrix<f64>,
    pub solve: SolveReport,
    pub cluster: ClusterOutcome,
    pub report: SeedReport,
}

pub fn seed_report(seed: u64, solve: &SolveReport, cluster: &ClusterOutcome, methods: Vec<MethodScore>) -> SeedReport {
    let k = cluster
        .spectral
        .as_ref()
        .or(cluster.symnmf.as_ref())
        .map_or(0, |r| r.k);
    SeedReport {
        seed,
        lambda: solve.lambda,
        k,
        strict_pass: solve.detection.strict_pass_fraction,
        support: solve.path[solve.selected].support,
        path: solve.path.clone(),
        methods,
    }
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedArtifacts> {
    let generated = generate(cfg, seed)?;
    let decoder = decoder_for(cfg, &generated.graph, seed);
    let gram = gram_for(cfg, &decoder, &generated.trajectories.z, generated.trajectories.lag, seed)?;
    let solve = solve_stage(cfg, &gram, &generated.truth.disjoint)?;
    let cluster = cluster_stage(cfg, &solve.c, generated.graph.d_z(), seed)?;
    let methods = evaluate_stage(cfg, &cluster, &generated.truth, seed)?;
    let report = seed_report(seed, &solve, &cluster, methods);
    Ok(SeedArtifacts {
        generated,
        gram,
        solve,
        cluster,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub homogeneity: Option<Stat>,
    pub completeness: Option<Stat>,
    pub nmi: Option<Stat>,
    pub onmi: Stat,
    pub f1: Stat,
    pub omega: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub mode: ClusterMode,
    pub alpha: f64,
    pub seeds: Vec<SeedReport>,
    pub summary: Vec<MethodSummary>,
}

/// Report assembly from per-seed results in configuration order.
pub fn experiment_report(cfg: &ExperimentConfig, seeds: Vec<SeedReport>) -> ExperimentReport {
    ExperimentReport {
        mode: cfg.cluster.mode,
        alpha: cfg.structure.alpha,
        summary: summarize(&seeds),
        seeds,
    }
}

pub fn summarize(seeds: &[SeedReport]) -> Vec<MethodSummary> {
    let mut names: Vec<String> = Vec::new();
    for s in seeds {
        for m in &s.methods {
            if !names.contains(&m.method) {
                names.push(m.method.clone());
            }
        }
    }
    names
        .into_iter()
        .map(|name| {
            let rows: Vec<&MetricReport> = seeds
                .iter()
                .flat_map(|s| s.methods.iter().filter(|m| m.method == name).map(|m| &m.metrics))
                .collect();
            let opt = |f: &dyn Fn(&MetricReport) -> Option<f64>| -> Option<Stat> {
                rows.iter().map(|r| f(r)).collect::<Option<Vec<f64>>>().map(|v| Stat::of(&v))
            };
            let all = |f: &dyn Fn(&MetricReport) -> f64| Stat::of(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            MethodSummary {
                method: name,
                homogeneity: opt(&|r| r.homogeneity),
                completeness: opt(&|r| r.completeness),
                nmi: opt(&|r| r.nmi),
                onmi: all(&|r| r.onmi),
                f1: all(&|r| r.f1),
                omega: all(&|r| r.omega),
            }
        })
        .collect()
}

fn run_mode(cfg: &ExperimentConfig, mode: ClusterMode) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    cfg.cluster.mode = mode;
    let seeds: Vec<SeedReport> = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(&cfg, s).map(|a| a.report))
        .collect::<Result<_>>()?;
    Ok(experiment_report(&cfg, seeds))
}

/// Disjoint runs need `α = 0`, overlapping runs `α > 0`.
pub fn check_mode(alpha: f64, mode: ClusterMode) -> Result<()> {
    match mode {
        ClusterMode::Disjoint if alpha != 0.0 => Err(Error::Mode(format!(
            "disjoint runs need structure.alpha = 0, got {alpha}"
        ))),
        ClusterMode::Overlapping if !(alpha > 0.0) => Err(Error::Mode(format!(
            "overlapping runs need structure.alpha > 0, got {alpha}"
        ))),
        _ => Ok(()),
    }
}

/// Disjoint regime: requires `α = 0`.
pub fn run_disjoint(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    check_mode(cfg.structure.alpha, ClusterMode::Disjoint)?;
    run_mode(cfg, ClusterMode::Disjoint)
}

/// Overlapping regime: requires `α > 0`.
pub fn run_overlap(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    check_mode(cfg.structure.alpha, ClusterMode::Overlapping)?;
    run_mode(cfg, ClusterMode::Overlapping)
}

/// Dispatches on `cluster.mode`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match cfg.cluster.mode {
        ClusterMode::Disjoint => run_disjoint(cfg),
        ClusterMode::Overlapping => run_overlap(cfg),
    }
}

impl ExperimentReport {
    /// One row per method: mean scores followed by their standard deviations.
    pub fn aggregate_csv(&self) -> String {
        let f = |s: Option<Stat>, g: fn(Stat) -> f64| s.map(|s| fmt_f64(g(s))).unwrap_or_default();
        let mut out = String::new();
        match self.mode {
            ClusterMode::Disjoint => {
                out.push_str("method,H,C,NMI,H_std,C_std,NMI_std\n");
                for m in &self.summary {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        m.method,
                        f(m.homogeneity, |s| s.mean),
                        f(m.completeness, |s| s.mean),
                        f(m.nmi, |s| s.mean),
                        f(m.homogeneity, |s| s.std),
                        f(m.completeness, |s| s.std),
                        f(m.nmi, |s| s.std),
                    ));
                }
            }
            ClusterMode::Overlapping => {
                out.push_str("method,alpha,oNMI,F1,Omega,oNMI_std,F1_std,Omega_std\n");
                for m in &self.summary {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{}\n",
                        m.method,
                        fmt_f64(self.alpha),
                        fmt_f64(m.onmi.mean),
                        fmt_f64(m.f1.mean),
                        fmt_f64(m.omega.mean),
                        fmt_f64(m.onmi.std),
                        fmt_f64(m.f1.std),
                        fmt_f64(m.omega.std),
                    ));
                }
            }
        }
        out
    }

    /// Per-seed scores for every method.
    pub fn seeds_csv(&self) -> String {
        let mut out = format!("seed,method,lambda,k,{}\n", MetricReport::CSV_HEADER);
        for s in &self.seeds {
            for m in &s.methods {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    s.seed,
                    m.method,
                    fmt_f64(s.lambda),
                    s.k,
                    m.metrics.csv_row()
                ));
            }
        }
        out
    }

    /// Human-readable table, three decimals.
    pub fn summary_table(&self) -> String {
        let pm = |s: Option<Stat>| s.map(|s| format!("{:.3} ± {:.3}", s.mean, s.std)).unwrap_or("-".into());
        let mut out = String::new();
        match self.mode {
            ClusterMode::Disjoint => {
                out.push_str(&format!("{:<8} {:>15} {:>15} {:>15}\n", "method", "H", "C", "NMI"));
                for m in &self.summary {
                    out.push_str(&format!(
                        "{:<8} {:>15} {:>15} {:>15}\n",
                        m.method,
                        pm(m.homogeneity),
                        pm(m.completeness),
                        pm(m.nmi)
                    ));
                }
            }
            ClusterMode::Overlapping => {
                out.push_str(&format!("alpha = {:.3}\n", self.alpha));
                out.push_str(&format!("{:<8} {:>15} {:>15} {:>15}\n", "method", "oNMI", "F1", "Omega"));
                for m in &self.summary {
                    out.push_str(&format!(
                        "{:<8} {:>15} {:>15} {:>15}\n",
                        m.method,
                        pm(Some(m.onmi)),
                        pm(Some(m.f1)),
                        pm(Some(m.omega))
                    ));
                }
            }
        }
        out
    }

    /// Writes `report.json`, `aggregate.csv`, `seeds.csv` and `summary.txt`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("report.json"), self)?;
        std::fs::write(dir.join("aggregate.csv"), self.aggregate_csv())?;
        std::fs::write(dir.join("seeds.csv"), self.seeds_csv())?;
        std::fs::write(dir.join("summary.txt"), self.summary_table())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Monte-Carlo checks pass at a stated confidence rather than always.
    pub stochastic: bool,
    /// Measured value and the threshold it was compared with.
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
    pub error: Option<String>,
}

impl CheckOutcome {
    fn new(name: &str, stochastic: bool, passed: bool, measured: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            stochastic,
            measured,
            threshold,
            detail,
            error: None,
        }
    }

    fn failed(name: &str, stochastic: bool, e: &Error) -> Self {
        Self {
            name: name.into(),
            passed: false,
            stochastic,
            measured: f64::NAN,
            threshold: f64::NAN,
            detail: String::new(),
            error: Some(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
}

impl TheoryReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            match &c.error {
                Some(e) => out.push_str(&format!("{status} {:<28} error: {e}\n", c.name)),
                None => out.push_str(&format!(
                    "{status} {:<28} measured {:.3e} vs {:.3e}  {}\n",
                    c.name, c.measured, c.threshold, c.detail
                )),
            }
        }
        out
    }

    pub fn checks_csv(&self) -> String {
        let mut out = String::from("check,passed,stochastic,measured,threshold\n");
        for c in &self.checks {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.name,
                c.passed,
                c.stochastic,
                fmt_f64(c.measured),
                fmt_f64(c.threshold)
            ));
        }
        out
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("verify.json"), self)?;
        std::fs::write(dir.join("verify.csv"), self.checks_csv())?;
        std::fs::write(dir.join("verify.txt"), self.summary_table())?;
        Ok(())
    }
}

/// Random strictly positive definite Gram with unit diagonal.
pub fn random_spd_gram(n: usize, seed: u64) -> DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = substream(seed, &[tags::THEORY, 3]);
    let rows = n + 3;
    let mut j: DMatrix<f64> = DMatrix::from_fn(rows, n, |_, _| StandardNormal.sample(&mut rng));
    for mut c in j.column_iter_mut() {
        let nc = c.norm();
        c /= nc;
    }
    j.transpose() * j
}

/// Fixed-size probing instance: an `8 × 20` Gaussian Jacobian with unit
/// columns and its self-expression solution at `λ = 0.5`.
pub fn hutchinson_instance(seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = substream(seed, &[tags::THEORY, 4]);
    let raw: DMatrix<f64> = DMatrix::from_fn(8, 20, |_, _| StandardNormal.sample(&mut rng));
    let j = crate::jacobian::normalize_columns(&raw)?;
    let g = j.transpose() * &j;
    let c = crate::selfexpr::solve_penalized_global(&g, 0.5, 1e-12, 100_000)?.c;
    Ok((j, c))
}

/// Constrained-at-`t` versus penalized-at-`λ(t)` agreement on one column;
/// returns the largest coordinate difference.
pub fn round_trip_gap(g: &DMatrix<f64>, j: usize, t: f64) -> Result<f64> {
    let (cons, lam) = solve_constrained_column(g, j, t, 1e-14)?;
    let pen = solve_penalized_column(g, j, lam, 1e-13, 200_000)?;
    Ok(cons
        .coef
        .iter()
        .zip(&pen.coef)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

struct SuiteInstance {
    graph: StructuralGraph,
    truth: GroundTruth,
    decoder: DecoderParams,
    traj: TrajectorySet,
    solve: SolveReport,
}

fn suite_instance(cfg: &ExperimentConfig, seed: u64) -> Result<SuiteInstance> {
    let mut cfg = cfg.clone();
    cfg.cluster.mode = ClusterMode::Disjoint;
    let generated = generate(&cfg, seed)?;
    let decoder = decoder_for(&cfg, &generated.graph, seed);
    let gram = gram_for(&cfg, &decoder, &generated.trajectories.z, generated.trajectories.lag, seed)?;
    let solve = solve_stage(&cfg, &gram, &generated.truth.disjoint)?;
    Ok(SuiteInstance {
        graph: generated.graph,
        truth: generated.truth,
        decoder,
        traj: generated.trajectories,
        solve,
    })
}

fn unit_jacobian(inst: &SuiteInstance, cfg: &ExperimentConfig, seed: u64) -> Result<DMatrix<f64>> {
    let latents = gram_latents(cfg, &inst.traj.z, inst.traj.lag, seed)?;
    let ens = crate::jacobian::JacobianEnsemble::from_latents(&latents, &inst.decoder, true)?;
    Ok(ens.samples[0].clone())
}

/// Runs every verification on the instance of the first configured seed.
/// A failing stage is recorded and the suite continues.
pub fn run_theory_suite(cfg: &ExperimentConfig) -> Result<TheoryReport> {
    cfg.validate()?;
    let seed = cfg.seeds[0];
    let th = &cfg.theory;
    let mut checks = Vec::new();
    let inst = match suite_instance(cfg, seed) {
        Ok(i) => Some(i),
        Err(e) => {
            checks.push(CheckOutcome::failed("instance", false, &e));
            None
        }
    };

    let mut record = |name: &str, stochastic: bool, f: &mut dyn FnMut() -> Result<CheckOutcome>| {
        checks.push(f().unwrap_or_else(|e| CheckOutcome::failed(name, stochastic, &e)));
    };

    record("round_trip", false, &mut || {
        let mut worst: f64 = 0.0;
        for r in 0..th.round_trip_instances {
            let n = 4 + r % 12;
            let g = random_spd_gram(n, seed.wrapping_add(r as u64));
            for j in 0..n {
                let (_, res_ls) = crate::selfexpr::least_squares_column(&g, j)?;
                let t = res_ls + 0.5 * (g[(j, j)] - res_ls);
                worst = worst.max(round_trip_gap(&g, j, t)?);
            }
        }
        Ok(CheckOutcome::new(
            "round_trip",
            false,
            worst <= 1e-6,
            worst,
            1e-6,
            format!("{} instances", th.round_trip_instances),
        ))
    });

    record("detection_vs_affinity", false, &mut || {
        let pts = detection_vs_affinity(&th.affinity_thetas, 3, 8, 0.05, 5, seed)?;
        let mut sorted = pts.clone();
        sorted.sort_by(|a, b| a.affinity.total_cmp(&b.affinity));
        let worst_rise = sorted
            .windows(2)
            .map(|w| w[1].pass_rate - w[0].pass_rate)
            .fold(0.0, f64::max);
        Ok(CheckOutcome::new(
            "detection_vs_affinity",
            false,
            worst_rise <= 1e-12,
            worst_rise,
            0.0,
            format!(
                "pass rates {:?}",
                sorted.iter().map(|p| (p.pass_rate * 1000.0).round() / 1000.0).collect::<Vec<_>>()
            ),
        ))
    });

    if let Some(inst) = &inst {
        record("subspace_detection", false, &mut || {
            let d = &inst.solve.detection;
            let fails = d.verdicts.iter().filter(|v| **v == ColumnVerdict::Fail).count();
            Ok(CheckOutcome::new(
                "subspace_detection",
                false,
                fails == 0,
                fails as f64,
                0.0,
                format!("lambda {} strict pass {:.3}", inst.solve.lambda, d.strict_pass_fraction),
            ))
        });

        record("laplacian_components", false, &mut || {
            let graph = affinity_from_c(&inst.solve.c)?;
            let l = laplacian(&graph, LaplacianVariant::Unnormalized);
            let mult = zero_eigen_multiplicity(&l, ZERO_EIGEN_TOL);
            let comps = component_labels(&graph.a).iter().max().map_or(0, |m| m + 1);
            Ok(CheckOutcome::new(
                "laplacian_components",
                false,
                mult == comps,
                mult as f64,
                comps as f64,
                "zero eigenvalues vs connected components".into(),
            ))
        });

        record("time_slice_equivalence", false, &mut || {
            let lag = inst.traj.lag;
            let last = inst.traj.z.shape[1] - 1;
            let slice = |t: usize| -> Result<DetectionReport> {
                let latents: Vec<Vec<f64>> = inst.traj.z.slice_at(t);
                let g = expected_gram(&latents, &inst.decoder, cfg.jacobian.normalize)?;
                let sol = crate::selfexpr::solve_penalized_global(&g, inst.solve.lambda, cfg.solver.tol, cfg.solver.max_iter)?;
                check_subspace_detection(&sol.c, &inst.truth.disjoint, cfg.solver.support_threshold)
            };
            let a = slice(lag)?;
            let b = slice(last)?;
            let differ = a
                .verdicts
                .iter()
                .zip(&b.verdicts)
                .filter(|(x, y)| (**x == ColumnVerdict::Fail) != (**y == ColumnVerdict::Fail))
                .count();
            Ok(CheckOutcome::new(
                "time_slice_equivalence",
                false,
                differ == 0,
                differ as f64,
                0.0,
                format!("slices {lag} and {last}"),
            ))
        });

        record("jacobian_finite_difference", false, &mut || {
            let mut worst: f64 = 0.0;
            let mut zero_violations = 0usize;
            let latents = gram_latents(cfg, &inst.traj.z, inst.traj.lag, seed)?;
            for z in latents.iter().take(th.fd_points) {
                let a = analytic_jacobian(z, &inst.decoder);
                let fd = finite_difference_jacobian(|v| inst.decoder.decode(v).0, z, DEFAULT_FD_STEP);
                worst = worst.max((&a - fd).abs().max());
                for i in 0..inst.graph.d_x() {
                    for k in 0..inst.graph.d_z() {
                        if !inst.graph.get(i, k) && a[(k, i)] != 0.0 {
                            zero_violations += 1;
                        }
                    }
                }
            }
            Ok(CheckOutcome::new(
                "jacobian_finite_difference",
                false,
                worst <= 1e-5 && zero_violations == 0,
                worst,
                1e-5,
                format!("{zero_violations} nonzero entries outside the support"),
            ))
        });

        record("hutchinson_unbiased", true, &mut || {
            let (j, c) = hutchinson_instance(seed)?;
            let exact = exact_penalty(&j, &c);
            let within = (0..th.hutchinson_reps)
                .map(|r| {
                    let est = hutchinson_penalty(&j, &c, th.hutchinson_probes, seed.wrapping_add(r as u64))?;
                    Ok(((est - exact) / exact).abs() <= 0.01)
                })
                .collect::<Result<Vec<bool>>>()?;
            let rate = within.iter().filter(|&&b| b).count() as f64 / within.len().max(1) as f64;
            Ok(CheckOutcome::new(
                "hutchinson_unbiased",
                true,
                rate >= 0.95,
                rate,
                0.95,
                format!("8x20 instance, {} probes, exact {:.4e}", th.hutchinson_probes, exact),
            ))
        });

        record("operator_norm_bounds", false, &mut || {
            let n = norm_checks(&inst.solve.c);
            Ok(CheckOutcome::new(
                "operator_norm_bounds",
                false,
                n.op_le_interpolation && n.op_le_rank_frobenius,
                n.op,
                (n.one_to_one * n.inf_to_inf).sqrt(),
                format!(
                    "op {:.4} one-to-one {:.4} (column-sum comparison holds: {}) sqrt(rank) fro {:.4}",
                    n.op,
                    n.one_to_one,
                    n.op_le_one_to_one,
                    (n.rank as f64).sqrt() * n.frobenius
                ),
            ))
        });

        record("stability_bound", true, &mut || {
            let j = unit_jacobian(inst, cfg, seed)?;
            let mut worst: f64 = 0.0;
            let mut parts = Vec::new();
            for (ei, &eps) in th.epsilons.iter().enumerate() {
                let lam = calibrate_stability_lambda(&j, &inst.solve.c, eps, th.delta, th.stability_trials, seed ^ (2 * ei as u64 + 1))?;
                let rep = perturb_and_check(&j, &inst.solve.c, eps, th.delta, th.stability_trials, lam, seed ^ ((2 * ei as u64 + 2) << 20))?;
                worst = worst.max(rep.violation_rate);
                parts.push(format!("eps {eps}: Lambda {lam:.3e} rate {:.3}", rep.violation_rate));
            }
            Ok(CheckOutcome::new(
                "stability_bound",
                true,
                worst <= th.delta,
                worst,
                th.delta,
                parts.join("; "),
            ))
        });

        record("generalization_rate", true, &mut || {
            let opts = GeneralizationOptions {
                pool_size: th.generalization_pool,
                repetitions: th.generalization_reps,
                extra: vec![inst.solve.c.clone()],
                ..Default::default()
            };
            let r = generalization_sweep(&inst.decoder, th.generalization_radius, &th.generalization_n, th.delta, seed, &opts)?;
            Ok(CheckOutcome::new(
                "generalization_rate",
                true,
                (-0.7..=-0.3).contains(&r.slope),
                r.slope,
                -0.5,
                format!("bound holds in {:.3} of repetitions", r.bound_hold_fraction()),
            ))
        });

        record("bias_bound", true, &mut || {
            let d_z = inst.graph.d_z();
            let settings: [(f64, f64); 3] = [(0.0, 1.0), (0.5, 1.0), (0.3, 1.5)];
            let mut ok = 0usize;
            let mut total = 0usize;
            for (si, &(m, s)) in settings.iter().enumerate() {
                for t in 0..th.bias_trials {
                    let r = posterior_bias_check(
                        &inst.solve.c,
                        &inst.decoder,
                        &vec![m; d_z],
                        &vec![s; d_z],
                        th.bias_samples,
                        seed.wrapping_add(((si * th.bias_trials + t) as u64) << 8),
                    )?;
                    total += 1;
                    if r.observed <= r.bound {
                        ok += 1;
                    }
                }
            }
            let rate = ok as f64 / total.max(1) as f64;
            Ok(CheckOutcome::new(
                "bias_bound",
                true,
                rate >= 0.95,
                rate,
                0.95,
                format!("{total} trials over 3 settings"),
            ))
        });

        record("sample_complexity", false, &mut || {
            // Each latent spans a one-dimensional gradient subspace under
            // single-parent structure; the universal constant is taken as 3.
            let d_m = (0..inst.graph.d_x()).map(|i| inst.graph.parents(i).len()).max().unwrap_or(1);
            let sc = sample_complexity(0.1, inst.graph.d_z(), d_m, 3.0)?;
            let smallest = inst.graph.subspace_sizes.iter().copied().min().unwrap_or(0) as f64;
            Ok(CheckOutcome::new(
                "sample_complexity",
                false,
                sc.required.is_some_and(|r| r.is_finite() && r >= sc.second),
                sc.required.unwrap_or(f64::INFINITY),
                sc.second,
                format!("barrier {} smallest planted group {smallest}", sc.barrier),
            ))
        });
    }

    Ok(TheoryReport { seed, checks })
}
