use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SMALL: &str = r#"
seeds = [0, 1]
baseline_trials = 10

[structure]
d_x = 16
m = 3

[latent]
steps = 8
trajectories = 12

[jacobian]
samples = 48
"#;

fn modsc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modsc"))
        .args(args)
        .env_remove("MODSC_THREADS")
        .output()
        .expect("spawn modsc")
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        o.status,
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

fn check_entry(root: &Path, e: &Value) {
    let rel = e["path"].as_str().unwrap();
    let bytes = fs::read(root.join(rel)).unwrap();
    assert_eq!(e["sha256"].as_str().unwrap(), sha256_hex(&bytes), "{rel}");
    assert_eq!(e["bytes"].as_u64().unwrap(), bytes.len() as u64, "{rel}");
    if let Some(side) = e.get("sidecar") {
        check_entry(root, side);
    }
}

#[test]
fn config_template_parses_back() {
    let o = modsc(&["config-template"]);
    ok(&o);
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg = modsc::pipeline::ExperimentConfig::from_toml_str(&text).unwrap();
    assert_eq!(cfg, modsc::pipeline::ExperimentConfig::default());
}

#[test]
fn generate_manifest_lists_four_hashed_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let out = tmp.path().join("run");
    ok(&modsc(&["generate", "--config", &cfg, "--out", s(&out), "--seed", "3"]));
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let arts = m["artifacts"].as_array().unwrap();
    assert_eq!(arts.len(), 4);
    for e in arts {
        check_entry(&out, e);
    }
    check_entry(&out, &m["config"]);
    let names: Vec<&str> = arts.iter().map(|e| e["path"].as_str().unwrap()).collect();
    assert_eq!(
        names,
        [
            "seed_3/graph.json",
            "seed_3/ground_truth.json",
            "seed_3/latents.f64",
            "seed_3/observations.f64"
        ]
    );
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&modsc(&["generate", "--config", &cfg, "--out", s(&a)]));
    ok(&modsc(&["generate", "--config", &cfg, "--out", s(&b), "--threads", "1"]));
    for rel in [
        "manifest.json",
        "config.toml",
        "seed_0/graph.json",
        "seed_1/latents.f64",
        "seed_1/latents.f64.json",
        "seed_0/observations.f64",
    ] {
        assert_eq!(fs::read(a.join(rel)).unwrap(), fs::read(b.join(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn infeasible_sizes_fail_validation_naming_constraint() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &SMALL.replace("d_x = 16", "d_x = 5"));
    let out = tmp.path().join("run");
    let o = modsc(&["generate", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert!(msg.contains("d_x") && msg.contains("min_per_subspace"), "{msg}");
    assert!(!out.exists());
}

#[test]
fn unknown_field_is_named() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &format!("{SMALL}\nbogus_knob = 1\n"));
    let o = modsc(&["generate", "--config", &cfg, "--out", s(&tmp.path().join("run"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus_knob"), "{}", stderr(&o));
}

#[test]
fn non_empty_output_is_refused_without_force() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let out = tmp.path().join("run");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("keep.txt"), "x").unwrap();
    let o = modsc(&["generate", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--force"));
    assert!(out.join("keep.txt").exists());
    ok(&modsc(&["generate", "--config", &cfg, "--out", s(&out), "--force"]));
    assert!(!out.join("keep.txt").exists());
    assert!(out.join("manifest.json").exists());
    let leftovers: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().contains(".tmp-"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn staged_commands_name_missing_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let out = tmp.path().join("run");
    let o = modsc(&["solve", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("config.toml"), "{}", stderr(&o));

    ok(&modsc(&["generate", "--config", &cfg, "--out", s(&out)]));
    let o = modsc(&["cluster", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seed_0/solve.json"), "{}", stderr(&o));

    ok(&modsc(&["solve", "--out", s(&out)]));
    let o = modsc(&["evaluate", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cluster.json"), "{}", stderr(&o));
}

#[test]
fn staged_run_matches_full() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let staged = tmp.path().join("staged");
    let full = tmp.path().join("full");
    ok(&modsc(&["generate", "--config", &cfg, "--out", s(&staged)]));
    for cmd in ["solve", "cluster", "evaluate"] {
        ok(&modsc(&[cmd, "--out", s(&staged)]));
    }
    ok(&modsc(&["full", "--config", &cfg, "--out", s(&full)]));
    for rel in [
        "report.json",
        "aggregate.csv",
        "seeds.csv",
        "summary.txt",
        "manifest.json",
        "seed_0/solve.json",
        "seed_1/coefficients.csv",
        "seed_1/cluster.json",
        "seed_0/scores.json",
    ] {
        assert_eq!(
            fs::read_to_string(staged.join(rel)).unwrap(),
            fs::read_to_string(full.join(rel)).unwrap(),
            "{rel}"
        );
    }
    let m: Value = serde_json::from_str(&fs::read_to_string(full.join("manifest.json")).unwrap()).unwrap();
    for e in m["artifacts"].as_array().unwrap() {
        check_entry(&full, e);
    }
}

#[test]
fn full_aggregate_has_method_h_c_nmi_columns() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let out = tmp.path().join("run");
    let o = modsc(&["full", "--config", &cfg, "--out", s(&out)]);
    ok(&o);
    let csv = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&header[..4], ["method", "H", "C", "NMI"]);
    let methods: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["SSC", "Random"]);
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("SSC") && table.contains("NMI"));
}

#[test]
fn overlap_run_reports_cover_metrics() {
    let tmp = TempDir::new().unwrap();
    let text = SMALL.replace("m = 3", "m = 3\nalpha = 0.3") + "\n[cluster]\nmode = \"overlapping\"\n";
    let cfg = write_config(tmp.path(), "c.toml", &text);
    let out = tmp.path().join("run");
    ok(&modsc(&["full", "--config", &cfg, "--out", s(&out)]));
    let csv = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert!(csv.starts_with("method,alpha,oNMI,F1,Omega"), "{csv}");
    for m in ["SymNMF", "SAAC", "Random"] {
        assert!(csv.lines().any(|l| l.starts_with(m)), "{m}");
    }
}

#[test]
fn mode_mismatch_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &SMALL.replace("m = 3", "m = 3\nalpha = 0.3"));
    let o = modsc(&["full", "--config", &cfg, "--out", s(&tmp.path().join("run"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn full_twice_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&modsc(&["full", "--config", &cfg, "--out", s(&a)]));
    ok(&modsc(&["full", "--config", &cfg, "--out", s(&b), "--threads", "2"]));
    let ma = fs::read(a.join("manifest.json")).unwrap();
    assert_eq!(ma, fs::read(b.join("manifest.json")).unwrap());
    let m: Value = serde_json::from_slice(&ma).unwrap();
    for e in m["artifacts"].as_array().unwrap() {
        let rel = e["path"].as_str().unwrap();
        assert_eq!(fs::read(a.join(rel)).unwrap(), fs::read(b.join(rel)).unwrap(), "{rel}");
    }
}

const QUICK_THEORY: &str = r#"
[structure]
d_x = 12
m = 3

[latent]
steps = 6
trajectories = 10

[jacobian]
samples = 32

[theory]
round_trip_instances = 3
hutchinson_probes = 2000
hutchinson_reps = 5
epsilons = [0.01]
stability_trials = 60
generalization_n = [100, 400, 1600]
generalization_pool = 4000
generalization_reps = 2
bias_trials = 10
bias_samples = 50
fd_points = 3
affinity_thetas = [1.2, 0.6, 0.1]
"#;

#[test]
fn verify_writes_machine_and_human_reports() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", QUICK_THEORY);
    let out = tmp.path().join("v");
    let o = modsc(&["verify", "--config", &cfg, "--out", s(&out)]);
    let code = o.status.code().unwrap();
    assert!(code == 0 || code == 3, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    let checks = v["checks"].as_array().unwrap();
    assert!(checks.len() >= 10);
    let failed = checks.iter().filter(|c| !c["passed"].as_bool().unwrap()).count();
    assert_eq!(code == 3, failed > 0);
    let csv = fs::read_to_string(out.join("verify.csv")).unwrap();
    assert_eq!(csv.lines().count(), checks.len() + 1);
    for c in checks {
        let name = c["name"].as_str().unwrap();
        assert!(String::from_utf8_lossy(&o.stdout).contains(name), "{name}");
    }
}
