use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use af_relay_cli::RunConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_af-relay"))
}

fn example_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/four-node-chain.toml")
}

const SMALL: &str = r#"
schema_version = 1
seed = 11

[chain]
antennas = [2, 2, 2]
streams = 2
alpha = 0.4
beta = 0.0
sigma_e_sq = 0.01

[design]
snr_db = 15.0
objectives = ["sum-mse", "max-mse"]

[sweep]
snr_db = [5.0, 10.0, 15.0]
trials = 4
symbols_per_trial = 100
designs = [
    { kind = "robust", objective = "sum-mse" },
    { kind = "estimated-only", objective = "mutual-info" },
]
"#;

fn write_config(dir: &tempfile::TempDir, text: &str) -> PathBuf {
    let path = dir.path().join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], config: &Path) -> Output {
    bin().args(args).arg("--config").arg(config).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn example_config_round_trips() {
    let cfg = RunConfig::load(&example_config()).unwrap();
    assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    assert_eq!(cfg.sim_config().unwrap().designs.len(), 4);
}

#[test]
fn design_report_meets_budgets() {
    let out = run(&["design"], &example_config());
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["perfect_csi_equivalent"], false);
    let budget = report["power_budget"].as_f64().unwrap();
    assert!((budget - 100.0).abs() < 1e-9);
    let designs = report["designs"].as_array().unwrap();
    assert_eq!(designs.len(), 3);
    for d in designs {
        for hop in d["allocation"].as_array().unwrap() {
            let total: f64 = hop.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
            assert!((total - budget).abs() < 1e-6 * budget);
        }
        assert_eq!(d["gamma"].as_array().unwrap().len(), 4);
        assert_eq!(d["xi"].as_array().unwrap().len(), 3);
        assert!(d["objective_value"].as_f64().unwrap().is_finite());
    }
}

#[test]
fn zero_error_variance_is_labeled_perfect_csi() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(&dir, &SMALL.replace("sigma_e_sq = 0.01", "sigma_e_sq = 0.0"));
    let out = run(&["design"], &path);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["perfect_csi_equivalent"], true);
}

#[test]
fn unsupported_structure_is_explained() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(&dir, &SMALL.replace("beta = 0.0", "beta = 0.5"));
    let out = run(&["design"], &path);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("proportional to the identity"), "{err}");
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    for (text, key) in [
        (SMALL.replace("streams = 2", "streams = 2\nstreems = 3"), "streems"),
        (SMALL.replace("trials = 4", "trials = -4"), "trials"),
        (SMALL.replace("alpha = 0.4", "alpha = [0.4]"), "chain.alpha"),
        (SMALL.replace("schema_version = 1", "schema_version = 2"), "schema_version"),
        (SMALL.replace("seed = 11\n", ""), "seed"),
    ] {
        let path = write_config(&dir, &text);
        let out = run(&["sweep"], &path);
        assert_eq!(out.status.code(), Some(1), "{key}");
        assert!(stderr(&out).contains(key), "{key}: {}", stderr(&out));
    }
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(bin().arg("bogus").output().unwrap().status.code(), Some(1));
    assert_eq!(bin().arg("design").output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["sweep", "--jobs", "0"]).output().unwrap().status.code(), Some(1));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn sweep_csv_accounting_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(&dir, SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(run(&["sweep", "--out", a.to_str().unwrap()], &path).status.success());
    assert!(run(&["sweep", "--jobs", "1", "--out", b.to_str().unwrap()], &path).status.success());
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());

    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "design,objective,snr_db,ber,bits,errors,ci95,status");
    assert_eq!(lines.len(), 1 + 2 * 3);
    for row in &lines[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 8);
        // 4 trials × 2 streams × 100 bits
        assert_eq!(cols[4], "800");
        assert_eq!(cols[7], "ok");
    }

    let reseeded = run(&["sweep", "--seed", "12"], &path);
    assert!(reseeded.status.success());
    assert_ne!(String::from_utf8(reseeded.stdout).unwrap(), text);
}

#[test]
fn failed_points_become_status_rows() {
    let dir = tempfile::tempdir().unwrap();
    // the robust design needs Σ or Ψ proportional to the identity; the
    // estimated-only baseline ignores the errors and still runs
    let mixed = SMALL.replace("beta = 0.0", "beta = 0.5");
    let csv = dir.path().join("mixed.csv");
    let out = run(&["sweep", "--out", csv.to_str().unwrap()], &write_config(&dir, &mixed));
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("robust,") && l.contains(",failed: ")).count(), 3);
    assert_eq!(text.lines().filter(|l| l.ends_with(",ok")).count(), 3);

    let robust_only = mixed.replace(r#"{ kind = "estimated-only", objective = "mutual-info" },"#, "");
    let csv = dir.path().join("failed.csv");
    let out = run(&["sweep", "--out", csv.to_str().unwrap()], &write_config(&dir, &robust_only));
    assert_eq!(out.status.code(), Some(1));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().skip(1).all(|l| l.contains(",failed: ")));
}

#[test]
fn verify_runs_the_corpus() {
    let out = bin().args(["verify", "--jobs", "2"]).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}{}", stderr(&out));
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS ")).count(), 8);
    assert!(text.trim_end().ends_with("8 checks, 0 failed"));
}
