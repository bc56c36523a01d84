use std::path::PathBuf;
use std::process::{Command, Output};

use spolab::harness::ExperimentResult;

fn spolab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spolab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn scratch(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("spolab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn least_squares_prediction() {
    let o = spolab(&[
        "predict",
        "--loss",
        "square",
        "--noise",
        "normal(0,1)",
        "--delta",
        "2",
        "--no-reg",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    let a = v["predictions"][0]["solution"]["alpha_sq"]
        .as_f64()
        .unwrap();
    assert!((a - 1.0).abs() < 1e-10);
}

#[test]
fn ridge_prediction_kappa() {
    let o = spolab(&[
        "predict",
        "--preset",
        "ridge-ls",
        "--delta",
        "2",
        "--lambda",
        "1",
        "--sigma2",
        "1",
        "--sigmax2",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let k = json(&o)["predictions"][0]["solution"]["kappa"]
        .as_f64()
        .unwrap();
    assert!((k - (2f64.sqrt() - 1.0)).abs() < 1e-6, "{k}");
}

#[test]
fn prediction_failure_exits_two_with_diagnostics() {
    // Square loss is not admissible with Cauchy noise.
    let o = spolab(&[
        "predict",
        "--loss",
        "square",
        "--noise",
        "cauchy(0,1)",
        "--delta",
        "2",
        "--no-reg",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(json(&o)["predictions"][0]["error"].as_str().is_some());
}

#[test]
fn malformed_config_reports_position() {
    let p = scratch("bad.toml", "preset = \"ls\"\n[experiment]\ndelta = = 2\n");
    let o = spolab(&["predict", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("column"), "{err}");
    let p = scratch("unknown.toml", "[experiment]\nsigma = 1\n");
    assert_eq!(
        spolab(&["simulate", p.to_str().unwrap()]).status.code(),
        Some(1)
    );
    assert_eq!(
        spolab(&["simulate", "--preset", "nope"]).status.code(),
        Some(1)
    );
}

#[test]
fn config_file_wins_over_flags() {
    let p = scratch(
        "delta.toml",
        "preset = \"ridge-ls\"\n[experiment]\ndelta = 3.0\n",
    );
    let o = spolab(&["predict", p.to_str().unwrap(), "--delta", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["predictions"][0]["delta"].as_f64(), Some(3.0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn small_simulation_is_fast_and_reproducible() {
    let args = [
        "simulate", "--preset", "ridge-ls", "--trials", "1", "--n", "64", "--format", "csv",
        "--seed", "9",
    ];
    let start = std::time::Instant::now();
    let a = spolab(&args);
    assert!(start.elapsed().as_secs_f64() < 10.0);
    assert_eq!(a.status.code(), Some(0));
    let b = spolab(&args);
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("# config_hash="));
    let other = spolab(&[
        "simulate", "--preset", "ridge-ls", "--trials", "1", "--n", "64", "--format", "csv",
        "--seed", "10",
    ]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn json_and_csv_carry_the_same_data() {
    let base = [
        "simulate", "--preset", "lad-l1", "--n", "48", "--trials", "2", "--lambda", "0.5,2",
    ];
    let csv = spolab(&[&base[..], &["--format", "csv"]].concat());
    let js = spolab(&[&base[..], &["--format", "json"]].concat());
    let from_csv = ExperimentResult::from_csv(&stdout(&csv)).unwrap();
    let from_json: ExperimentResult = serde_json::from_slice(&js.stdout).unwrap();
    assert_eq!(from_csv, from_json);
}

#[test]
fn loss_list_sweep() {
    let o = spolab(&[
        "sweep",
        "--preset",
        "genlasso",
        "--axis",
        "lambda",
        "--values",
        "0.5,1.5",
        "--loss",
        "abs,square",
        "--n",
        "64",
        "--trials",
        "1",
        "--format",
        "csv",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let r = ExperimentResult::from_csv(&stdout(&o)).unwrap();
    assert_eq!(r.rows.len(), 4);
    assert_eq!(r.rows.iter().filter(|row| row.loss == "abs").count(), 2);
    assert_eq!(r.rows.iter().filter(|row| row.loss == "square").count(), 2);
}

#[test]
fn delta_sweep_and_dry_run() {
    let o = spolab(&[
        "sweep", "--preset", "ridge-ls", "--axis", "delta", "--values", "1.5,2.5", "--n", "64",
        "--trials", "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["rows"].as_array().unwrap().len(), 2);
    let d = spolab(&["simulate", "--preset", "huber-l1", "--dry-run"]);
    assert_eq!(d.status.code(), Some(0));
    let v = json(&d);
    assert_eq!(v["configs"][0]["n"].as_u64(), Some(1024));
    assert_eq!(
        spolab(&["sweep", "--preset", "ridge-ls", "--axis", "delta"])
            .status
            .code(),
        Some(1)
    );
    // Cone constraints have no instance solver but still predict.
    assert_eq!(
        spolab(&["simulate", "--preset", "cone-ls", "--dry-run"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        spolab(&["predict", "--preset", "cone-ls"]).status.code(),
        Some(0)
    );
}

#[test]
fn check_reports() {
    let o = spolab(&["check", "--delta", "0.9"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("UNSTABLE"));
    let o = spolab(&["check", "--delta", "1.0", "--dbar", "0.5"]);
    assert!(stdout(&o).contains("cone (δ > D̄): STABLE, margin +0.500000"));
    let o = spolab(&[
        "check", "--delta", "1.2", "--dbar", "0.35", "--sbar", "0.7", "--format", "json",
    ]);
    let v = json(&o);
    let pr = &v[2];
    assert_eq!(pr["name"], "perfect recovery");
    assert!(pr["kappa"].as_f64().unwrap() > 0.0 && pr["margin"].is_number());
    assert_eq!(spolab(&["check", "--delta=-1"]).status.code(), Some(1));
    assert_eq!(
        spolab(&["check", "--delta", "1", "--dbar", "0.3", "--sbar", "2"])
            .status
            .code(),
        Some(1)
    );
}
