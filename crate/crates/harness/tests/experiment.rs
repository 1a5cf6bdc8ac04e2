use lshawkes_harness::config::{ExperimentConfig, ModelRef, Rule};
use lshawkes_harness::experiment::{read_report, run_experiment, REPORT_FILE, SUMMARY_FILE};

fn config(dir: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{
            "model": {{"preset": "poisson"}},
            "t_grid": [500, 2000],
            "h_rule": {{"power": {{"c": 0.5, "exponent": -0.2}}}},
            "j_rule": {{"fixed": 2}},
            "order": 1,
            "replicates": 5,
            "base_seed": 11,
            "x0_list": [0.4, 0.6],
            "outputs": "{}"
        }}"#,
        dir.display()
    ))
    .unwrap()
}

#[test]
fn row_count_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_experiment(&config(a.path()), None).unwrap();
    let rb = run_experiment(&config(b.path()), None).unwrap();
    assert_eq!(ra.rows.len(), 2 * 2 * 5);
    assert_eq!(ra.rows, rb.rows);
    assert!(ra.rows.iter().all(|r| r.ok()), "{:?}", ra.rows);
    for f in [REPORT_FILE, SUMMARY_FILE] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    // Rows round-trip through the loader exactly.
    let back = read_report(a.path().join(REPORT_FILE)).unwrap();
    assert_eq!(back.len(), ra.rows.len());
    for (x, y) in back.iter().zip(&ra.rows) {
        assert_eq!(x.ise_total.to_bits(), y.ise_total.to_bits());
        assert_eq!(x, y);
    }
    assert_eq!(ra.summary.cells.len(), 4);
    assert!(ra.summary.rules.h_nonincreasing);
}

#[test]
fn single_cell_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.t_grid = vec![500.0];
    cfg.x0_list = vec![0.5];
    cfg.replicates = 1;
    assert_eq!(run_experiment(&cfg, None).unwrap().rows.len(), 1);
}

#[test]
fn interrupted_run_resumes_to_identical_files() {
    let full = tempfile::tempdir().unwrap();
    run_experiment(&config(full.path()), None).unwrap();
    let expected = std::fs::read_to_string(full.path().join(REPORT_FILE)).unwrap();

    let part = tempfile::tempdir().unwrap();
    run_experiment(&config(part.path()), None).unwrap();
    // Cut the report in the middle of a row.
    let cut = expected.len() * 3 / 5;
    std::fs::write(part.path().join(REPORT_FILE), &expected[..cut]).unwrap();
    let resumed = run_experiment(&config(part.path()), None).unwrap();
    assert_eq!(resumed.rows.len(), 20);
    assert_eq!(std::fs::read_to_string(part.path().join(REPORT_FILE)).unwrap(), expected);
    assert_eq!(
        std::fs::read(part.path().join(SUMMARY_FILE)).unwrap(),
        std::fs::read(full.path().join(SUMMARY_FILE)).unwrap()
    );
}

#[test]
fn changed_config_is_not_mixed_into_old_report() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&config(dir.path()), None).unwrap();
    let mut other = config(dir.path());
    other.base_seed = 12;
    assert!(run_experiment(&other, None).is_err());
}

#[test]
fn failures_are_rows_not_aborts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.model = ModelRef::Preset("poisson".into());
    cfg.t_grid = vec![500.0];
    // An invalid quadrature step makes every fit fail.
    cfg.h_rule = Rule::Fixed(0.1);
    cfg.quad_step = Some(-1.0);
    let report = run_experiment(&cfg, None).unwrap();
    assert_eq!(report.rows.len(), 10);
    assert!(report.rows.iter().all(|r| !r.ok() && r.error.contains("quadrature")));
    assert!(report.summary.cells.iter().all(|c| c.n_failed == 5 && c.ise_median.is_nan()));
}
