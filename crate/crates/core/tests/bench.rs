//! Sweep runner, aggregation and CSV output.

use mimo_npe_core::bench::{
    preset, run_sweep_with, EstimatorKind, ExperimentConfig, SweepTable, CSV_HEADER,
};

fn tiny(estimators: &str) -> ExperimentConfig {
    let mut cfg = preset("fig_alpha").unwrap();
    for o in [
        "m=8",
        "k=2",
        "n=5",
        "l=2",
        "trials=4",
        "pseudo_inputs=20",
        "cov_samples=2000",
        "sweep_values=[0.0, 0.5]",
        estimators,
    ] {
        cfg.apply_override(o).unwrap();
    }
    cfg.seed = 77;
    cfg.validate().unwrap();
    cfg
}

fn all_digital() -> ExperimentConfig {
    tiny(r#"estimators=["LMMSE", "BLMMSE", "E-SBL", "M-E-SBL", "NL-E-SBL", "NL-M-E-SBL"]"#)
}

fn without_wall_clock(table: &SweepTable) -> String {
    table
        .body_csv()
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn rows_match_a_recomputation_from_the_records() {
    let cfg = all_digital();
    let table = run_sweep_with(&cfg, 2, |_| {}).unwrap();
    assert_eq!(table.rows.len(), 2 * cfg.estimators.len());
    assert_eq!(table.records.len(), 2 * cfg.estimators.len() * cfg.trials);
    for row in &table.rows {
        let nmse: Vec<f64> = table
            .records
            .iter()
            .filter(|r| cfg.sweep_values[r.point] == row.sweep_value)
            .filter(|r| r.estimator.name() == row.estimator)
            .filter_map(|r| r.nmse)
            .collect();
        let n = nmse.len() as f64;
        let mean = nmse.iter().sum::<f64>() / n;
        let var = nmse.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert_eq!(row.trials_ok, nmse.len());
        assert!((row.nmse_mean - mean).abs() <= 1e-15 * mean.abs().max(1.0));
        assert!((row.nmse_stderr - (var / n).sqrt()).abs() <= 1e-12);
        assert!(row.nmse_mean >= 0.0 && row.nmse_stderr >= 0.0);
    }
}

#[test]
fn output_does_not_depend_on_the_worker_count() {
    let cfg = all_digital();
    let one = run_sweep_with(&cfg, 1, |_| {}).unwrap();
    let three = run_sweep_with(&cfg, 3, |_| {}).unwrap();
    assert_eq!(without_wall_clock(&one), without_wall_clock(&three));
}

#[test]
fn csv_round_trips_through_a_file() {
    let table = run_sweep_with(&tiny(r#"estimators=["LMMSE", "E-SBL"]"#), 1, |_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    table.emit_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, CSV_HEADER.join(","));
    let back = SweepTable::read_csv(&path).unwrap();
    assert_eq!(back.rows, table.rows);
    assert_eq!(back.metadata, table.metadata);
    assert_eq!(back.meta("tau2_rule"), Some("tau2 = 1e-2 / (sigma2 * M)"));
}

#[test]
fn progress_callback_sees_every_point_in_order() {
    let cfg = tiny(r#"estimators=["LMMSE"]"#);
    let mut seen = Vec::new();
    run_sweep_with(&cfg, 2, |rows| seen.extend(rows.iter().map(|r| r.sweep_value))).unwrap();
    assert_eq!(seen, cfg.sweep_values);
}

#[test]
fn lmmse_is_exact_without_noise_or_distortion() {
    let mut cfg = tiny(r#"estimators=["LMMSE"]"#);
    cfg.apply_override("sweep_values=[0.0]").unwrap();
    cfg.snr_db = f64::INFINITY;
    cfg.trials = 1;
    let table = run_sweep_with(&cfg, 1, |_| {}).unwrap();
    assert!(table.row(0.0, EstimatorKind::Lmmse).unwrap().nmse_mean < 1e-10);
}
