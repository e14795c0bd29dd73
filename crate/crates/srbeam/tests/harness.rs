use proptest::prelude::*;
use srbeam::harness::{
    emit_csv, emit_plot, read_csv, run_experiment, AxesSpec, ExperimentConfig, ExperimentId, MethodKind, ResultRow,
    Series, CSV_HEADER,
};

fn small(id: ExperimentId, dir: &std::path::Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::defaults(id);
    c.out_dir = dir.to_path_buf();
    c.trials = 1;
    c.algorithm.counter_max = 3;
    c
}

fn row(trial: usize, c: f64, e: f64) -> ResultRow {
    ResultRow {
        experiment: "rate_sweep".into(),
        method: "CQR".into(),
        m: 4,
        i: 4,
        n: 4,
        c_bps_hz: c,
        e_t_j: e,
        e_t_db: 10.0 * e.log10(),
        iterations: 7,
        converged: true,
        rank_residual: 1e-9,
        wall_s: 0.0,
        seed: 42,
        trial,
    }
}

#[test]
fn one_row_gives_two_lines() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.csv");
    emit_csv(&[row(0, 0.1, 3.0)], &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], CSV_HEADER.join(","));
    assert!(emit_csv(&[], &p).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn csv_round_trip(es in proptest::collection::vec(1e-6f64..1e6, 1..8), cs in proptest::collection::vec(0.0f64..1.0, 1..8)) {
        let mut rows: Vec<ResultRow> = es.iter().zip(&cs).enumerate().map(|(k, (&e, &c))| row(k % 3, c, e)).collect();
        rows.sort_by(srbeam::harness::row_order);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        emit_csv(&rows, &p).unwrap();
        let back = read_csv(&p).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            for (x, y) in [(a.c_bps_hz, b.c_bps_hz), (a.e_t_j, b.e_t_j), (a.e_t_db, b.e_t_db)] {
                prop_assert!((x - y).abs() <= 1e-8 * y.abs().max(1e-300));
            }
            prop_assert_eq!((&a.experiment, &a.method, a.trial, a.seed, a.converged), (&b.experiment, &b.method, b.trial, b.seed, b.converged));
        }
    }
}

#[test]
fn zero_target_gives_zero_energy() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(ExperimentId::RateSweep, dir.path());
    c.c_values = vec![0.0];
    c.methods = vec![MethodKind::Cqr];
    let out = run_experiment(&c).unwrap();
    assert_eq!(out.rows.len(), 1);
    assert_eq!(out.rows[0].e_t_j, 0.0);
    assert!(out.all_converged());
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [a.path(), b.path()] {
        let mut c = small(ExperimentId::RateSweep, d);
        c.c_values = vec![0.05, 0.1];
        run_experiment(&c).unwrap();
    }
    for f in ["rate_sweep.csv", "rate_sweep_summary.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn paired_methods_share_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(ExperimentId::RateSweep, dir.path());
    c.trials = 2;
    c.c_values = vec![0.05];
    let out = run_experiment(&c).unwrap();
    assert_eq!(out.rows.len(), 4);
    for t in 0..2 {
        let s: Vec<u64> = out.rows.iter().filter(|r| r.trial == t).map(|r| r.seed).collect();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0], s[1]);
    }
    assert_ne!(out.rows[0].seed, out.rows[2].seed);
}

#[test]
fn complexity_writes_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(ExperimentId::Complexity, dir.path());
    c.svg = true;
    let out = run_experiment(&c).unwrap();
    assert!(out.rows.is_empty());
    let text = std::fs::read_to_string(dir.path().join("complexity.csv")).unwrap();
    assert!(text.lines().any(|l| l.starts_with("complexity,SQ,6,4,4,1e-06,237,1353760,")));
    assert!(text.lines().any(|l| l.starts_with("complexity,CQR,6,4,4,1e-06,462,48175,")));
    assert_eq!(text.lines().count(), 81);
    let svg = std::fs::read_to_string(dir.path().join("complexity.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
}

#[test]
fn convergence_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(ExperimentId::Convergence, dir.path());
    let out = run_experiment(&c).unwrap();
    let text = std::fs::read_to_string(dir.path().join("convergence_trace.csv")).unwrap();
    let iters: usize = out.rows.iter().map(|r| r.iterations).sum();
    assert_eq!(text.lines().count(), 1 + iters);
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    std::fs::write(&file, "x").unwrap();
    let c = small(ExperimentId::Complexity, &file.join("sub"));
    assert!(run_experiment(&c).is_err());
}

#[test]
fn plot_rejects_short_series() {
    let dir = tempfile::tempdir().unwrap();
    let axes = AxesSpec { title: "t".into(), x_label: "x".into(), y_label: "y".into(), log_y: false };
    let p = dir.path().join("a.svg");
    assert!(emit_plot(&[], &axes, &p).is_err());
    assert!(emit_plot(&[Series { label: "a".into(), points: vec![(0.0, 1.0)] }], &axes, &p).is_err());
    emit_plot(&[Series { label: "a".into(), points: vec![(0.0, 1.0), (1.0, 2.0)] }], &axes, &p).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap().matches("<polyline").count(), 1);
}
