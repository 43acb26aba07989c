use compliant_push::harness::metrics::tracking_metrics;
use compliant_push::harness::sweep::{read_sweep_csv, run_cell, write_sweep_csv};
use compliant_push::harness::trace::{read_trace_file, write_trace, write_trace_file};
use compliant_push::harness::{
    builtin_config, generate_reference, run_scenario, PathKind, ReferenceTrajectory, RunConfig, SweepSpec, TraceRow,
};

fn short_kuka(seconds: f64) -> RunConfig {
    let mut cfg = builtin_config("kuka_line").unwrap().unwrap();
    cfg.duration = seconds;
    cfg
}

fn csv_bytes(rows: &[TraceRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_trace(&mut buf, rows).unwrap();
    buf
}

#[test]
fn runs_are_deterministic() {
    let mut cfg = short_kuka(2.0);
    cfg.pose_noise_std = [5e-4, 5e-4, 5e-3];
    cfg.seed = 7;
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    assert_eq!(csv_bytes(&a.trace), csv_bytes(&b.trace));
    cfg.seed = 8;
    let c = run_scenario(&cfg).unwrap();
    assert_ne!(csv_bytes(&a.trace), csv_bytes(&c.trace));
}

#[test]
fn trace_file_round_trip() {
    let out = run_scenario(&short_kuka(0.5)).unwrap();
    let dir = std::env::temp_dir().join(format!("compliant_push_trace_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("trace.csv");
    write_trace_file(&path, &out.trace).unwrap();
    let back = read_trace_file(&path).unwrap();
    assert_eq!(back.len(), out.trace.len());
    assert_eq!(csv_bytes(&back), csv_bytes(&out.trace));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("schema,time,ref_clock"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn constant_error_gives_that_rmse() {
    let rows: Vec<TraceRow> =
        (0..500).map(|_| TraceRow { err_x: 0.003, err_y: 0.004, err_theta: -0.02, ..Default::default() }).collect();
    let m = tracking_metrics(&rows, |_| true);
    assert!((m.rmse_pos - 0.005).abs() < 1e-15);
    assert!((m.rmse_rot - 0.02).abs() < 1e-15);
    assert_eq!(m.max_abs_pos_err, 0.004);
}

#[test]
fn line_reference_covers_its_arc_length() {
    let r = generate_reference(PathKind::Line, 0.0313, 10.0, [0.1, -0.2, 0.4], 1000.0).unwrap();
    let (a, b) = (r.first().unwrap(), r.last().unwrap());
    assert!(((b.x - a.x).hypot(b.y - a.y) - 0.313).abs() < 1e-9);
}

#[test]
fn heading_reference_is_continuous() {
    for kind in [PathKind::Line, PathKind::Curve, PathKind::Eight] {
        let traj = ReferenceTrajectory::new(kind, 0.05, [0.0, 0.6, 0.785]).unwrap();
        let samples = traj.sample(30.0, 1000.0);
        let jump = samples.windows(2).map(|w| (w[1].theta - w[0].theta).abs()).fold(0.0, f64::max);
        assert!(jump < 0.01, "{kind:?}: {jump}");
    }
}

#[test]
fn config_survives_toml_file() {
    let cfg = builtin_config("eight_obstacle").unwrap().unwrap();
    let text = cfg.to_toml().unwrap();
    assert!(text.contains("[disturbance"));
    assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    assert!(RunConfig::from_toml("name = 3").is_err());
    let broken = text.replace("plant_rate = 1000.0", "plant_rate = 333.0");
    assert!(RunConfig::from_toml(&broken).is_err());
}

#[test]
fn sweep_rows_round_trip_through_csv() {
    let spec = SweepSpec::campaign();
    let cell = spec.cells()[0];
    let mut short = spec.clone();
    short.path_length = 0.01;
    let ok = run_cell(&short, &cell);
    assert!(ok.ok, "{}", ok.error);
    let mut failed = ok.clone();
    failed.ok = false;
    failed.error = "solver reported infeasible on 2.00% of steps".into();
    failed.rmse_pos = f64::NAN;
    let path = std::env::temp_dir().join(format!("compliant_push_sweep_{}.csv", std::process::id()));
    write_sweep_csv(&path, &[ok.clone(), failed.clone()]).unwrap();
    let back = read_sweep_csv(&path).unwrap();
    std::fs::remove_file(&path).unwrap();
    assert_eq!(back[0], ok);
    assert_eq!(back[1].error, failed.error);
    assert!(back[1].rmse_pos.is_nan());
}
