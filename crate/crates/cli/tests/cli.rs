//! CLI behavior: flags, exit codes, simulate determinism, degenerate
//! analyze inputs, and convergence warnings.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_connectome-predict"))
}

fn run(args: &[&str], cwd: &Path) -> std::process::Output {
    bin().args(args).current_dir(cwd).output().expect("spawn")
}

fn run_ok(args: &[&str], cwd: &Path) {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn help_enumerates_flags_and_unknown_flag_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["cv", "--help"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--manifest",
        "--conditions",
        "--categories",
        "--methods",
        "--train-fraction",
        "--repeats",
        "--kfold",
        "--burn-in",
        "--samples",
        "--thin",
        "--chains",
        "--inits",
        "--seed",
        "--select-by",
        "--latent-mean",
        "--threads",
        "--out",
    ] {
        assert!(text.contains(flag), "help missing {flag}");
    }

    let out = run(&["cv", "--no-such-flag"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr).to_lowercase();
    assert!(err.contains("usage") || err.contains("unexpected"), "{err}");
}

#[test]
fn simulate_is_deterministic_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let args = [
        "simulate", "--out", "d1", "--V", "8", "--subjects", "14", "--P", "2", "--seed", "7",
    ];
    run_ok(&args, root);
    let args2 = [
        "simulate", "--out", "d2", "--V", "8", "--subjects", "14", "--P", "2", "--seed", "7",
    ];
    run_ok(&args2, root);
    for entry in std::fs::read_dir(root.join("d1")).unwrap() {
        let name = entry.unwrap().file_name();
        let a = std::fs::read(root.join("d1").join(&name)).unwrap();
        let b = std::fs::read(root.join("d2").join(&name)).unwrap();
        assert_eq!(a, b, "{name:?} differs between identical simulate calls");
    }
    // loadable by the library
    let loaded = connectome_core::ingest::load_dataset(&root.join("d1/manifest.json")).unwrap();
    assert_eq!(loaded.v, 8);
    assert_eq!(loaded.connectomes.len(), 14);
}

#[test]
fn simulate_rejects_non_pd_cross_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "simulate", "--out", "bad", "--V", "4", "--subjects", "12", "--P", "1", "--cross",
            "0.9,0.9,0.9,0.9",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(!dir.path().join("bad/manifest.json").exists());
}

#[test]
fn cp_seed_env_var_is_used_and_overridden() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    // env seed
    let out = bin()
        .args(["simulate", "--out", "e1", "--V", "6", "--subjects", "12", "--P", "1"])
        .env("CP_SEED", "99")
        .current_dir(root)
        .output()
        .unwrap();
    assert!(out.status.success());
    // explicit --seed overrides env
    let out = bin()
        .args([
            "simulate", "--out", "e2", "--V", "6", "--subjects", "12", "--P", "1", "--seed", "99",
        ])
        .env("CP_SEED", "12345")
        .current_dir(root)
        .output()
        .unwrap();
    assert!(out.status.success());
    let a = std::fs::read(root.join("e1/conn_sub00_Rest1.csv")).unwrap();
    let b = std::fs::read(root.join("e2/conn_sub00_Rest1.csv")).unwrap();
    assert_eq!(a, b, "--seed should reproduce the CP_SEED=99 dataset");
}

#[test]
fn analyze_single_condition_skips_regression_but_emits_biomarkers() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    run_ok(
        &[
            "simulate", "--out", "data", "--V", "10", "--subjects", "20", "--P", "2", "--seed",
            "3", "--cross", "0.5",
        ],
        root,
    );
    run_ok(
        &[
            "cv", "--manifest", "data/manifest.json", "--methods", "latentsna", "--burn-in", "50",
            "--samples", "100", "--inits", "1", "--repeats", "2", "--train-fraction", "0.8",
            "--seed", "5", "--out", "run",
        ],
        root,
    );
    run_ok(&["analyze", "--run", "run", "--k", "2", "--out", "analysis"], root);
    assert!(root.join("analysis/biomarkers.csv").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("analysis/run_manifest.json")).unwrap())
            .unwrap();
    let warnings = manifest["warnings"].as_array().unwrap();
    assert!(
        warnings.iter().any(|w| w.as_str().unwrap().contains("condition regression skipped")),
        "expected a skip warning, got {warnings:?}"
    );
}

#[test]
fn analyze_flags_poor_convergence_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    run_ok(
        &[
            "simulate", "--out", "data", "--V", "10", "--subjects", "20", "--P", "2", "--seed",
            "8", "--cross", "0.6,-0.6",
        ],
        root,
    );
    // deliberately too-short chains
    run_ok(
        &[
            "fit", "--manifest", "data/manifest.json", "--condition", "Rest1", "--category",
            "synthetic", "--burn-in", "3", "--samples", "24", "--chains", "3", "--inits", "1",
            "--seed", "2", "--out", "run",
        ],
        root,
    );
    run_ok(
        &["analyze", "--run", "run", "--k", "2", "--rhat-warn", "1.05", "--out", "analysis"],
        root,
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("analysis/run_manifest.json")).unwrap())
            .unwrap();
    let warnings = manifest["warnings"].as_array().unwrap();
    assert!(
        warnings.iter().any(|w| w.as_str().unwrap().contains("split-Rhat")),
        "expected convergence warnings, got {warnings:?}"
    );
}

#[test]
fn analyze_on_seven_conditions_builds_condition_regression() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    run_ok(
        &[
            "simulate", "--out", "data", "--V", "8", "--subjects", "16", "--P", "2", "--seed",
            "41", "--cross", "0.5,-0.5", "--conditions",
            "Rest1,Rest2,Average,EN-back,SST,Eyes,gradCPT",
        ],
        root,
    );
    run_ok(
        &[
            "cv", "--manifest", "data/manifest.json", "--methods", "latentsna", "--burn-in",
            "30", "--samples", "60", "--inits", "1", "--repeats", "2", "--train-fraction",
            "0.8", "--seed", "43", "--out", "run",
        ],
        root,
    );
    run_ok(&["analyze", "--run", "run", "--k", "2", "--out", "analysis"], root);
    let model: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(root.join("analysis/condition_effects_synthetic.json")).unwrap(),
    )
    .unwrap();
    let coefs = model["result"]["coefficients"].as_array().unwrap();
    // intercept plus six condition dummies
    assert_eq!(coefs.len(), 7);
    assert_eq!(model["reference_condition"], "Rest1");
    let text =
        std::fs::read_to_string(root.join("analysis/condition_effects_synthetic.txt")).unwrap();
    assert!(text.contains("Signif. codes: 0 '***' 0.001 '**' 0.01 '*' 0.05 '.' 0.1 ' ' 1"));
    // spider data for rest/task averages exists alongside per-condition rows
    let spider = std::fs::read_to_string(root.join("analysis/spider.csv")).unwrap();
    assert!(spider.lines().any(|l| l.starts_with("Rest,")));
    assert!(spider.lines().any(|l| l.starts_with("Task,")));
}

#[test]
fn cv_exit_zero_with_warnings_and_manifest_echo() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    run_ok(
        &[
            "simulate", "--out", "data", "--V", "8", "--subjects", "16", "--P", "1", "--seed",
            "6", "--cross", "0.4",
        ],
        root,
    );
    // test-fit selection is echoed into the manifest
    run_ok(
        &[
            "cv", "--manifest", "data/manifest.json", "--methods", "latentsna", "--burn-in",
            "40", "--samples", "80", "--inits", "2", "--repeats", "2", "--train-fraction",
            "0.8", "--select-by", "test-fit", "--seed", "11", "--out", "run",
        ],
        root,
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("run/run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["sampler"]["select_by"], "TestFit");
    assert!(manifest["split_hash"].as_str().unwrap().len() >= 16);
}
