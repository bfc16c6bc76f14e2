use elimtas::cli::{self, emit_plot_data, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION};
use elimtas::DiagnosticsTrace;

fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut argv = vec!["elimtas"];
    argv.extend_from_slice(args);
    let code = cli::run(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

#[test]
fn solve_oracle_prints_rate() {
    let (code, out) = run(&["solve-oracle", "--env", "skewed", "--h", "0", "--opponents", "1,2,3,4"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["opponents"], serde_json::json!([1, 2, 3, 4]));
    let w: f64 = v["weights"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((w - 1.0).abs() < 1e-9);
    assert!(v["rate"].as_f64().unwrap() > 0.0);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["nonsense"]).0, EXIT_USAGE);
    assert_eq!(run(&["exp1", "--bogus-flag"]).0, EXIT_USAGE);
    assert_eq!(run(&["--help"]).0, EXIT_OK);
    assert_eq!(run(&["solve-oracle", "--h", "7"]).0, EXIT_VALIDATION);
    assert_eq!(run(&["solve-oracle", "--h", "0", "--opponents", "0"]).0, EXIT_VALIDATION);
    assert_eq!(run(&["trial", "--delta", "1.5"]).0, EXIT_VALIDATION);
    assert_eq!(run(&["exp1", "--trials", "0"]).0, EXIT_VALIDATION);
    assert_eq!(run(&["exp2", "--alphas", "0.0"]).0, EXIT_VALIDATION);
    assert_eq!(run(&["env", "--env", "no-such-preset"]).0, EXIT_VALIDATION);
    assert_eq!(run(&["trial", "--policy", "random"]).0, EXIT_VALIDATION);
}

#[test]
fn exp1_writes_twenty_rows_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp1.csv");
    let out_s = out.to_str().unwrap();
    let (code, _) = run(&["exp1", "--env", "skewed", "--trials", "3", "--seed", "7", "--out", out_s]);
    assert_eq!(code, EXIT_OK);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 21);

    // the manifest alone reproduces the table
    let manifest = dir.path().join("exp1.csv.manifest.json");
    let again = dir.path().join("again.csv");
    let (code, _) = run(&["exp1", "--config", manifest.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(std::fs::read_to_string(again).unwrap(), csv);
}

#[test]
fn exp2_grid() {
    let (code, out) = run(&["exp2", "--env", "skewed", "--delta", "0.1", "--alphas", "0.2,0.4,0.6,0.8,1.0", "--trials", "2"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().count(), 6);
}

#[test]
fn diagnose_writes_plot_files() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run(&["diagnose", "--env", "skewed", "--seed", "3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let trace: DiagnosticsTrace =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("trace.json")).unwrap()).unwrap();
    for f in ["active_set.csv", "allocation.csv", "evidence.csv", "rates.csv", "trace.json.manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let active = std::fs::read_to_string(dir.path().join("active_set.csv")).unwrap();
    assert_eq!(active.lines().count(), 1 + trace.events.len());
    let rates = std::fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    assert_eq!(rates.lines().count(), 1 + trace.len());
}

#[test]
fn empty_trace_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("plots");
    let err = emit_plot_data(&DiagnosticsTrace::new("x", None), &target).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_USAGE);
    assert!(!target.exists());
}
