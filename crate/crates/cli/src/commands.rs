//! Subcommand implementations. Every stage reads its inputs from and writes
//! its outputs to the run directory, so staged and end-to-end runs produce
//! the same files.

use std::path::Path;

use modsc::io::{matrix_from_csv, matrix_to_csv, read_tensor, write_tensor, TensorSidecar};
use modsc::pipeline::{
    check_mode, cluster_stage, config_template as template, decoder_for, evaluate_stage, experiment_report,
    generate as generate_seed, gram_for, run_seed, run_theory_suite, seed_report, solve_stage, ClusterOutcome, ExperimentConfig,
    ExperimentReport, Generated, SeedReport, SolveReport,
};
use modsc::structure::{GroundTruth, StructuralGraph};
use rayon::prelude::*;

use crate::error::CliError;
use crate::rundir::{read, require, update_manifest, write, Staging, CONFIG};
use crate::Common;

fn seed_dir(seed: u64) -> String {
    format!("seed_{seed}")
}

fn core<T>(r: modsc::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::Core)
}

fn log(common: &Common, msg: &str) {
    if common.verbose {
        eprintln!("[modsc] {msg}");
    }
}

/// Flag > config file > run-directory snapshot > defaults.
fn load_config(common: &Common, run_dir: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&common.config, run_dir) {
        (Some(p), _) => {
            if !p.exists() {
                return Err(CliError::MissingArtifact(p.clone()));
            }
            core(ExperimentConfig::from_path(p))?
        }
        (None, Some(dir)) => {
            let p = require(dir, CONFIG)?;
            core(ExperimentConfig::from_path(&p))?
        }
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seeds = vec![s];
    }
    core(cfg.validate())?;
    Ok(cfg)
}

fn existing_run(common: &Common) -> Result<&Path, CliError> {
    let dir = common.out.as_path();
    if !dir.is_dir() {
        return Err(CliError::MissingArtifact(dir.join(CONFIG)));
    }
    Ok(dir)
}

pub fn config_template(out: Option<&Path>) -> Result<(), CliError> {
    let t = template();
    match out {
        Some(p) => std::fs::write(p, t).map_err(|e| CliError::io(p, e)),
        None => {
            print!("{t}");
            Ok(())
        }
    }
}

fn write_config(root: &Path, cfg: &ExperimentConfig) -> Result<(), CliError> {
    write(root, CONFIG, core(cfg.to_toml_string())?)?;
    Ok(())
}

fn sidecar(g: &Generated, seed: u64, dim: usize) -> TensorSidecar {
    let shape = g.trajectories.z.shape;
    TensorSidecar {
        n: shape[0],
        t: shape[1] - g.trajectories.lag,
        h: g.trajectories.lag,
        d_z: g.graph.d_z(),
        d_x: g.graph.d_x(),
        seed,
        dim,
        dtype: "f64-le".into(),
    }
}

fn write_generated(root: &Path, seed: u64, g: &Generated) -> Result<Vec<String>, CliError> {
    let d = seed_dir(seed);
    let mut out = vec![
        write(root, &format!("{d}/graph.json"), core(g.graph.to_json())? + "\n")?,
        write(root, &format!("{d}/ground_truth.json"), core(g.truth.to_json())? + "\n")?,
    ];
    for (name, t, dim) in [
        ("latents.f64", &g.trajectories.z, g.graph.d_z()),
        ("observations.f64", &g.trajectories.x, g.graph.d_x()),
    ] {
        let rel = format!("{d}/{name}");
        core(write_tensor(&root.join(&rel), t, &sidecar(g, seed, dim)))?;
        out.push(rel);
    }
    Ok(out)
}

fn write_solve(root: &Path, seed: u64, s: &SolveReport) -> Result<Vec<String>, CliError> {
    let d = seed_dir(seed);
    Ok(vec![
        write(root, &format!("{d}/solve.json"), json(s)?)?,
        write(root, &format!("{d}/coefficients.csv"), matrix_to_csv(&s.c))?,
    ])
}

fn write_cluster(root: &Path, seed: u64, c: &ClusterOutcome) -> Result<Vec<String>, CliError> {
    let d = seed_dir(seed);
    let mut out = vec![write(root, &format!("{d}/cluster.json"), json(c)?)?];
    if let Some(g) = &c.eigengap {
        out.push(write(root, &format!("{d}/spectrum.csv"), g.spectrum_csv())?);
    }
    Ok(out)
}

fn write_scores(root: &Path, seed: u64, r: &SeedReport) -> Result<Vec<String>, CliError> {
    Ok(vec![write(root, &format!("{}/scores.json", seed_dir(seed)), json(r)?)?])
}

fn write_report(root: &Path, r: &ExperimentReport) -> Result<Vec<String>, CliError> {
    core(r.write_to(root))?;
    Ok(["report.json", "aggregate.csv", "seeds.csv", "summary.txt"]
        .iter()
        .map(|s| s.to_string())
        .collect())
}

fn json<T: serde::Serialize>(v: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(v).map_err(|e| CliError::Core(e.into()))? + "\n")
}

fn parse_json<T: for<'de> serde::Deserialize<'de>>(root: &Path, rel: &str) -> Result<T, CliError> {
    let text = read(root, rel)?;
    serde_json::from_str(&text).map_err(|e| CliError::Core(modsc::Error::Config(format!("{rel}: {e}"))))
}

fn read_graph(root: &Path, seed: u64) -> Result<StructuralGraph, CliError> {
    core(StructuralGraph::from_json(&read(root, &format!("{}/graph.json", seed_dir(seed)))?))
}

pub fn generate(common: &Common) -> Result<(), CliError> {
    let cfg = load_config(common, None)?;
    core(check_mode(cfg.structure.alpha, cfg.cluster.mode))?;
    let staging = Staging::create(&common.out, common.force)?;
    write_config(&staging.path, &cfg)?;
    let generated: Vec<Generated> = core(cfg.seeds.par_iter().map(|&s| generate_seed(&cfg, s)).collect())?;
    let mut rels = Vec::new();
    for (g, &s) in generated.iter().zip(&cfg.seeds) {
        log(common, &format!("seed {s}: generated d_x = {} d_z = {}", g.graph.d_x(), g.graph.d_z()));
        rels.extend(write_generated(&staging.path, s, g)?);
    }
    let m = update_manifest(&staging.path, &rels)?;
    let dest = staging.commit()?;
    println!("generated {} artifacts in {}", m.artifacts.len(), dest.display());
    Ok(())
}

pub fn solve(common: &Common) -> Result<(), CliError> {
    let root = existing_run(common)?;
    let cfg = load_config(common, Some(root))?;
    let mut rels = Vec::new();
    for &s in &cfg.seeds {
        let graph = read_graph(root, s)?;
        let truth: GroundTruth = parse_json(root, &format!("{}/ground_truth.json", seed_dir(s)))?;
        let (z, side) = core(read_tensor(&require(root, &format!("{}/latents.f64", seed_dir(s)))?))?;
        let decoder = decoder_for(&cfg, &graph, s);
        let gram = core(gram_for(&cfg, &decoder, &z, side.h, s))?;
        let rep = core(solve_stage(&cfg, &gram, &truth.disjoint))?;
        log(common, &format!("seed {s}: selected lambda {}", rep.lambda));
        rels.extend(write_solve(root, s, &rep)?);
    }
    update_manifest(root, &rels)?;
    println!("solved {} seed(s) in {}", cfg.seeds.len(), root.display());
    Ok(())
}

fn read_solve(root: &Path, seed: u64) -> Result<SolveReport, CliError> {
    let mut rep: SolveReport = parse_json(root, &format!("{}/solve.json", seed_dir(seed)))?;
    rep.c = core(matrix_from_csv(&read(root, &format!("{}/coefficients.csv", seed_dir(seed)))?))?;
    Ok(rep)
}

pub fn cluster(common: &Common) -> Result<(), CliError> {
    let root = existing_run(common)?;
    let cfg = load_config(common, Some(root))?;
    let mut rels = Vec::new();
    for &s in &cfg.seeds {
        let graph = read_graph(root, s)?;
        let rep = read_solve(root, s)?;
        let out = core(cluster_stage(&cfg, &rep.c, graph.d_z(), s))?;
        rels.extend(write_cluster(root, s, &out)?);
    }
    update_manifest(root, &rels)?;
    println!("clustered {} seed(s) in {}", cfg.seeds.len(), root.display());
    Ok(())
}

pub fn evaluate(common: &Common) -> Result<(), CliError> {
    let root = existing_run(common)?;
    let cfg = load_config(common, Some(root))?;
    let mut rels = Vec::new();
    let mut seeds = Vec::new();
    for &s in &cfg.seeds {
        let truth: GroundTruth = parse_json(root, &format!("{}/ground_truth.json", seed_dir(s)))?;
        let solve: SolveReport = parse_json(root, &format!("{}/solve.json", seed_dir(s)))?;
        let outcome: ClusterOutcome = parse_json(root, &format!("{}/cluster.json", seed_dir(s)))?;
        let methods = core(evaluate_stage(&cfg, &outcome, &truth, s))?;
        let r = seed_report(s, &solve, &outcome, methods);
        rels.extend(write_scores(root, s, &r)?);
        seeds.push(r);
    }
    let report = experiment_report(&cfg, seeds);
    rels.extend(write_report(root, &report)?);
    update_manifest(root, &rels)?;
    print!("{}", report.summary_table());
    Ok(())
}

pub fn full(common: &Common) -> Result<(), CliError> {
    let cfg = load_config(common, None)?;
    core(check_mode(cfg.structure.alpha, cfg.cluster.mode))?;
    let staging = Staging::create(&common.out, common.force)?;
    write_config(&staging.path, &cfg)?;
    let runs = core(cfg.seeds.par_iter().map(|&s| run_seed(&cfg, s)).collect::<modsc::Result<Vec<_>>>())?;
    let mut rels = Vec::new();
    let mut seeds = Vec::new();
    for (a, &s) in runs.into_iter().zip(&cfg.seeds) {
        log(common, &format!("seed {s}: lambda {} k {}", a.report.lambda, a.report.k));
        rels.extend(write_generated(&staging.path, s, &a.generated)?);
        rels.extend(write_solve(&staging.path, s, &a.solve)?);
        rels.extend(write_cluster(&staging.path, s, &a.cluster)?);
        rels.extend(write_scores(&staging.path, s, &a.report)?);
        seeds.push(a.report);
    }
    let report = experiment_report(&cfg, seeds);
    rels.extend(write_report(&staging.path, &report)?);
    update_manifest(&staging.path, &rels)?;
    staging.commit()?;
    print!("{}", report.summary_table());
    Ok(())
}

pub fn verify(common: &Common) -> Result<(), CliError> {
    let cfg = load_config(common, None)?;
    let staging = Staging::create(&common.out, common.force)?;
    write_config(&staging.path, &cfg)?;
    let report = core(run_theory_suite(&cfg))?;
    core(report.write_to(&staging.path))?;
    let rels: Vec<String> = ["verify.json", "verify.csv", "verify.txt"].iter().map(|s| s.to_string()).collect();
    update_manifest(&staging.path, &rels)?;
    staging.commit()?;
    print!("{}", report.summary_table());
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::ChecksFailed { failed });
    }
    Ok(())
}
