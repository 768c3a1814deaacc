use std::fs;
use std::process::Command;

use chlab::harness::{self, ExperimentConfig, HarnessError};

fn config(text: &str, dir: &std::path::Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::from_toml(text).unwrap();
    c.output_dir = Some(dir.to_path_buf());
    c
}

#[test]
fn registry_has_seventeen_entries() {
    let names: Vec<_> = harness::list_experiments()
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    assert_eq!(names.len(), 17);
    for n in [
        "profile-identities",
        "invariant-closed-forms",
        "evolve-soliton",
        "scattering-unitarity",
        "discrete-spectrum",
        "completeness",
        "operator-algebra",
        "spectrum-weighted",
        "semigroup-decay",
        "liouville-potential",
        "modulation-track",
        "monotonicity",
        "asymptotic-single",
        "train-stability",
        "exact-two-soliton",
        "kdv-toolkit",
        "mkdv-toolkit",
    ] {
        assert_eq!(harness::find_experiment(n).unwrap().name, n);
    }
}

#[test]
fn profile_identities_pass_and_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        "experiment = \"profile-identities\"\n[params]\nc = 4.0\nomega = 1.0\n",
        dir.path(),
    );
    let rep = harness::run(&cfg).unwrap();
    assert!(rep.passed, "{:?}", rep.assertions);
    assert_eq!(rep.exit_code(), 0);
    assert!(rep.assertions.iter().all(|a| a.id.starts_with("soliton.")));
    for f in &rep.files {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let echo = ExperimentConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(echo, rep.config);
    assert_eq!(harness::resolve(&echo).unwrap(), rep.config);
    assert_eq!(echo.grid.n, Some(1024));
    let csv = fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "x,phi,dphi,m");
    let first: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(first[0], -40.0);
}

#[test]
fn speed_below_threshold_is_a_config_error() {
    let cfg = ExperimentConfig::from_toml(
        "experiment = \"profile-identities\"\n[params]\nc = 1.0\nomega = 1.0\n",
    )
    .unwrap();
    let err = harness::run(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("c ≤ 2ω"), "{err}");
    assert_eq!(err.to_json()["error"]["kind"], "config");
}

#[test]
fn schema_rejects_foreign_and_misspelled_keys() {
    let foreign =
        ExperimentConfig::from_toml("experiment = \"liouville-potential\"\n[params]\nc = 6.0\n")
            .unwrap();
    assert!(matches!(
        harness::resolve(&foreign),
        Err(HarnessError::Config(_))
    ));
    assert!(
        ExperimentConfig::from_toml("experiment = \"completeness\"\n[params]\nomgea = 1.0\n")
            .is_err()
    );
    let bad_grid =
        ExperimentConfig::from_toml("experiment = \"completeness\"\n[grid]\nn = 1000\n").unwrap();
    assert!(matches!(
        harness::resolve(&bad_grid),
        Err(HarnessError::Config(_))
    ));
}

#[test]
fn unknown_experiment_lists_nearest_matches() {
    match harness::find_experiment("semigroup_decay") {
        Err(HarnessError::UnknownExperiment { suggestions, .. }) => {
            assert_eq!(suggestions[0], "semigroup-decay")
        }
        other => panic!("{other:?}"),
    }
    let err = harness::run(&ExperimentConfig::new("kdv")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let json = err.to_json();
    assert!(json["error"]["suggestions"]
        .as_array()
        .unwrap()
        .iter()
        .any(|s| s == "kdv-toolkit"));
}

#[test]
fn same_seed_gives_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let text = "experiment = \"semigroup-decay\"\nseed = 11\n[grid]\nn = 256\nlength = 60.0\n[params]\nmax_mode = 16\n";
    let ra = harness::run(&config(text, a.path())).unwrap();
    let rb = harness::run(&config(text, b.path())).unwrap();
    assert!(ra.passed && rb.passed, "{:?}", ra.assertions);
    assert_eq!(ra.assertions, rb.assertions);
    for f in ra.files.iter().filter(|f| f.ends_with(".csv")) {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let c = tempfile::tempdir().unwrap();
    let other = text.replace("seed = 11", "seed = 12");
    harness::run(&config(&other, c.path())).unwrap();
    assert_ne!(
        fs::read(a.path().join("norms.csv")).unwrap(),
        fs::read(c.path().join("norms.csv")).unwrap()
    );
}

#[test]
fn failing_assertion_is_reported_not_raised() {
    let dir = tempfile::tempdir().unwrap();
    let rep = harness::run(&config(
        "experiment = \"liouville-potential\"\n",
        dir.path(),
    ))
    .unwrap();
    assert_eq!(rep.exit_code(), 1);
    let failed: Vec<_> = rep
        .assertions
        .iter()
        .filter(|a| !a.passed)
        .map(|a| a.id.as_str())
        .collect();
    assert_eq!(failed, ["linops.liouville_reference_form"]);
    let written = harness::export(dir.path()).unwrap();
    let table = fs::read_to_string(&written[0]).unwrap();
    assert!(table.starts_with("id,check,measured,tolerance,passed\n"));
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn module_errors_exit_with_runtime_code() {
    let cfg = ExperimentConfig::from_toml(
        "experiment = \"evolve-soliton\"\n[evolution]\ndt = 0.05\nt_end = 0.1\n",
    )
    .unwrap();
    let err = harness::run(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert_eq!(err.to_json()["error"]["kind"], "runtime");
}

#[test]
fn cli_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_chlab");
    let list = Command::new(exe).arg("list").output().unwrap();
    assert!(list.status.success());
    assert_eq!(String::from_utf8(list.stdout).unwrap().lines().count(), 17);

    let root = tempfile::tempdir().unwrap();
    let good = root.path().join("good.toml");
    fs::write(&good, "experiment = \"invariant-closed-forms\"\nseed = 3\n").unwrap();
    let out = Command::new(exe)
        .args(["run", good.to_str().unwrap()])
        .env(harness::OUTPUT_ROOT_ENV, root.path())
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run_dir = root.path().join("invariant-closed-forms-seed3");
    assert!(run_dir.join("report.json").exists());
    let exp = Command::new(exe)
        .args(["export", run_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(exp.status.success());

    let bad = root.path().join("bad.toml");
    fs::write(
        &bad,
        "experiment = \"profile-identities\"\n[params]\nc = 1.0\n",
    )
    .unwrap();
    let out = Command::new(exe)
        .args(["run", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");

    let red = root.path().join("red.toml");
    fs::write(&red, "experiment = \"liouville-potential\"\n").unwrap();
    let out = Command::new(exe)
        .args(["run", red.to_str().unwrap()])
        .env(harness::OUTPUT_ROOT_ENV, root.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
