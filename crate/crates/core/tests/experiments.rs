use hessq_core::experiment::{emit_report, render_json, run_experiment, ExperimentConfig, ExperimentKind, ReportFormat};

#[test]
fn reruns_are_bit_identical() {
    let cfg = ExperimentConfig::new(ExperimentKind::Pogorelov);
    let a = render_json(&run_experiment(&cfg).unwrap()).unwrap();
    let b = render_json(&run_experiment(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn embedded_config_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(ExperimentKind::InequalityScan);
    cfg.count = 2000;
    cfg.seed = 5;
    let first = run_experiment(&cfg).unwrap();
    let paths = emit_report(&first, dir.path(), &[ReportFormat::Json]).unwrap();
    let written: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&paths[0]).unwrap()).unwrap();
    let embedded = ExperimentConfig::from_json(&written["config"].to_string()).unwrap();
    let second = run_experiment(&embedded).unwrap();
    assert_eq!(render_json(&first).unwrap(), render_json(&second).unwrap());
    assert!(second.passed());
}
