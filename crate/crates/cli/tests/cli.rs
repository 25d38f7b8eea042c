use std::process::{Command, Output};

fn hessq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hessq")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn identities_pass() {
    let o = hessq(&["identities", "--n", "5", "--k", "3", "--count", "10000", "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn guan_sroka_scan_passes() {
    let o = hessq(&["scan", "--which", "guan-sroka-c", "--n", "3", "--k", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("which,n,k,"));
}

#[test]
fn missing_config_is_a_usage_error() {
    assert_eq!(code(&hessq(&["solve-grid", "--config", "missing.json"])), 1);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(code(&hessq(&["identities", "--n", "3", "--k", "1", "--bogus"])), 1);
    assert_eq!(code(&hessq(&["no-such-command"])), 1);
}

#[test]
fn invalid_quotient_is_a_usage_error() {
    assert_eq!(code(&hessq(&["scan", "--which", "superadditivity", "--n", "3", "--k", "3"])), 1);
}

#[test]
fn violated_contract_exits_two_with_witness() {
    let o = hessq(&["legendre-check", "--tol", "1e-12", "--quiet"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("at x ="));
}

#[test]
fn solve_grid_writes_a_readable_solution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("problem.json");
    std::fs::write(
        &cfg,
        r#"{"n":2,"k":1,"domain":{"kind":"box","lo":[-1,-1],"hi":[1,1]},"spacing":0.125,
            "f":1.0,"g":"0.5*(x*x + y*y)"}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = hessq(&["solve-grid", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("solution.grid").exists());
    assert!(out.join("solve-report.json").exists());
}

#[test]
fn experiment_emits_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = hessq(&["experiment", "--kind", "pogorelov", "--out", out, "--quiet"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("pogorelov.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "case,h_section,f_scale,tau,max_hess,lambda_min,pass");
    assert!(dir.path().join("pogorelov.json").exists());
    assert!(dir.path().join("pogorelov.svg").exists());
}

#[test]
fn bad_experiment_schema_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    std::fs::write(&cfg, r#"{"schema_version":9,"experiment":"growth"}"#).unwrap();
    assert_eq!(code(&hessq(&["experiment", "--config", cfg.to_str().unwrap()])), 1);
}
