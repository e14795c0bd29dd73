//! Experiment drivers: trial fan-out, aggregation and file emission.

mod config;
mod output;

pub use config::{ExperimentConfig, ExperimentId, MethodKind};
pub use output::{
    emit_csv, emit_plot, emit_table, energy_db, fmt_g, fmt_g_digits, read_csv, render_svg, row_order, AxesSpec, Cell,
    ResultRow, Series, CSV_HEADER,
};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ScheduleFrame;
use crate::scenarios::{build_instance, default_protocols, iot_ee_point, load_protocols, tdma_baseline, Placement};
use crate::sca::{complexity_cqr, complexity_sq, run_cqr, run_sq, AlgorithmConfig, ConvergenceTrace};

/// Seed of trial `t`, shared by every method and sweep point of that trial.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub experiment: String,
    pub method: MethodKind,
    pub m: u32,
    pub n: usize,
    pub i: usize,
    pub c: f64,
    pub placement: Placement,
    pub trial: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub rows: Vec<ResultRow>,
    pub files: Vec<PathBuf>,
    /// Runs that returned an error rather than a report.
    pub failures: usize,
}

impl RunOutcome {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }
}

fn jobs(cfg: &ExperimentConfig) -> Vec<Job> {
    let exp = cfg.experiment;
    let placements: Vec<Placement> = match exp {
        ExperimentId::LocationStudy => cfg.placements.clone(),
        _ => vec![cfg.scene.geometry.placement],
    };
    let m_values: Vec<u32> = match exp {
        ExperimentId::MSweep => cfg.m_values.clone(),
        _ => vec![cfg.m_values[0]],
    };
    let mut out = Vec::new();
    for trial in 0..cfg.trials {
        let seed = trial_seed(cfg.seed, trial);
        for &placement in &placements {
            let experiment = match exp {
                ExperimentId::LocationStudy => format!("{exp}/{}", placement.name()),
                _ => exp.name().to_string(),
            };
            for &n in &cfg.antenna_values {
                for &c in &cfg.c_values {
                    for &m in &m_values {
                        for &method in &cfg.methods {
                            out.push(Job {
                                experiment: experiment.clone(),
                                method,
                                m,
                                n,
                                i: cfg.scene.devices,
                                c,
                                placement,
                                trial,
                                seed,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Runs one job; errors become rows with `NaN` energy.
pub fn run_job(cfg: &ExperimentConfig, job: &Job) -> (ResultRow, Option<ConvergenceTrace>, bool) {
    let start = Instant::now();
    let result = (|| {
        let mut scene = cfg.scene.clone();
        scene.antennas = job.n;
        scene.devices = job.i;
        scene.geometry.placement = job.placement;
        let inst = build_instance(&scene, job.c, job.seed)?;
        let alg = AlgorithmConfig { m: job.m, seed: job.seed, ..cfg.algorithm.clone() };
        let sched = ScheduleFrame::one_slot_each(job.i);
        match job.method {
            MethodKind::Sq => run_sq(&inst, &sched, &alg),
            MethodKind::Cqr => run_cqr(&inst, &sched, &alg),
            MethodKind::Tdma => tdma_baseline(&inst, &alg),
        }
    })();
    let wall = if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 };
    let mut row = ResultRow {
        experiment: job.experiment.clone(),
        method: job.method.name().to_string(),
        m: job.m,
        i: job.i,
        n: job.n,
        c_bps_hz: job.c,
        e_t_j: f64::NAN,
        e_t_db: f64::NAN,
        iterations: 0,
        converged: false,
        rank_residual: f64::NAN,
        wall_s: wall,
        seed: job.seed,
        trial: job.trial,
    };
    match result {
        Ok((rep, trace)) => {
            row.e_t_j = rep.total_energy;
            row.e_t_db = energy_db(rep.total_energy);
            row.iterations = rep.iterations;
            row.converged = rep.converged;
            row.rank_residual = rep.rank_residuals.iter().copied().fold(0.0, f64::max);
            (row, Some(trace), false)
        }
        Err(_) => (row, None, true),
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

type GroupKey = (String, String, u32, usize, usize, u64);

/// Rows grouped by sweep point, keyed with the bit pattern of `C`.
fn groups(rows: &[ResultRow]) -> BTreeMap<GroupKey, Vec<&ResultRow>> {
    let mut g: BTreeMap<GroupKey, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        g.entry((r.experiment.clone(), r.method.clone(), r.m, r.i, r.n, r.c_bps_hz.to_bits())).or_default().push(r);
    }
    g
}

fn write_summary(rows: &[ResultRow], path: &Path) -> Result<()> {
    let header = [
        "experiment",
        "method",
        "M",
        "I",
        "N",
        "C_bps_hz",
        "trials",
        "converged",
        "mean_E_T_J",
        "mean_E_T_dB",
        "std_E_T_dB",
    ];
    let mut out = Vec::new();
    let mut keyed: Vec<_> = groups(rows).into_iter().collect();
    keyed.sort_by(|a, b| {
        (&a.0 .0, f64::from_bits(a.0 .5), &a.0 .1, a.0 .2, a.0 .3, a.0 .4)
            .partial_cmp(&(&b.0 .0, f64::from_bits(b.0 .5), &b.0 .1, b.0 .2, b.0 .3, b.0 .4))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    for ((exp, method, m, i, n, c), g) in keyed {
        let e: Vec<f64> = g.iter().map(|r| r.e_t_j).filter(|x| x.is_finite()).collect();
        let db: Vec<f64> = g.iter().map(|r| r.e_t_db).filter(|x| x.is_finite()).collect();
        let (me, _) = mean_std(&e);
        let (mdb, sdb) = mean_std(&db);
        out.push(vec![
            Cell::from(exp),
            Cell::from(method),
            Cell::from(m),
            Cell::from(i),
            Cell::from(n),
            Cell::from(f64::from_bits(c)),
            Cell::from(g.len()),
            Cell::from(g.iter().filter(|r| r.converged).count()),
            Cell::from(me),
            Cell::from(mdb),
            Cell::from(sdb),
        ]);
    }
    emit_table(&header, &out, path)
}

/// Mean `E_T` in dB against `C`, one series per distinguishing key.
fn sweep_series<F>(rows: &[ResultRow], label: F) -> Vec<Series>
where
    F: Fn(&ResultRow) -> String,
{
    let mut by: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.e_t_db.is_finite()) {
        by.entry(label(r)).or_default().entry(r.c_bps_hz.to_bits()).or_default().push(r.e_t_db);
    }
    by.into_iter()
        .map(|(label, pts)| {
            let mut points: Vec<(f64, f64)> =
                pts.into_iter().map(|(c, v)| (f64::from_bits(c), mean_std(&v).0)).collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label, points }
        })
        .collect()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))
}

/// Runs an experiment and writes its files into `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.check()?;
    ensure_dir(&cfg.out_dir)?;
    match cfg.experiment {
        ExperimentId::Complexity => return run_complexity(cfg),
        ExperimentId::IotEe => return run_iot_ee(cfg),
        _ => {}
    }
    let exp = cfg.experiment.name();
    let jobs = jobs(cfg);
    let results: Vec<(ResultRow, Option<ConvergenceTrace>, bool)> = jobs.par_iter().map(|j| run_job(cfg, j)).collect();
    let failures = results.iter().filter(|r| r.2).count();
    let mut rows: Vec<ResultRow> = results.iter().map(|r| r.0.clone()).collect();
    rows.sort_by(row_order);

    let mut files = Vec::new();
    let main = cfg.out_dir.join(format!("{exp}.csv"));
    emit_csv(&rows, &main)?;
    files.push(main);
    let summary = cfg.out_dir.join(format!("{exp}_summary.csv"));
    write_summary(&rows, &summary)?;
    files.push(summary);

    if cfg.experiment == ExperimentId::Convergence {
        let path = cfg.out_dir.join("convergence_trace.csv");
        write_traces(&jobs, &results, &path)?;
        files.push(path);
    }
    if cfg.svg {
        if let Some(p) = plot_experiment(cfg, &jobs, &results)? {
            files.push(p);
        }
    }
    Ok(RunOutcome { rows, files, failures })
}

fn write_traces(jobs: &[Job], results: &[(ResultRow, Option<ConvergenceTrace>, bool)], path: &Path) -> Result<()> {
    let header = [
        "experiment",
        "method",
        "trial",
        "seed",
        "iteration",
        "surrogate_J",
        "energy_J",
        "energy_dB",
        "displacement",
        "rank_residual",
        "penalty",
    ];
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by(|&a, &b| jobs[a].trial.cmp(&jobs[b].trial).then(jobs[a].method.cmp(&jobs[b].method)));
    let mut out = Vec::new();
    for k in order {
        let (j, (_, trace, _)) = (&jobs[k], &results[k]);
        let Some(t) = trace else { continue };
        for it in 0..t.len() {
            out.push(vec![
                Cell::from(j.experiment.as_str()),
                Cell::from(j.method.name()),
                Cell::from(j.trial),
                Cell::from(j.seed),
                Cell::from(it + 1),
                Cell::from(t.surrogate[it]),
                Cell::from(t.energy[it]),
                Cell::from(energy_db(t.energy[it])),
                Cell::from(t.displacement[it]),
                Cell::from(t.rank_residual[it]),
                Cell::from(t.penalty[it]),
            ]);
        }
    }
    emit_table(&header, &out, path)
}

fn plot_experiment(
    cfg: &ExperimentConfig,
    jobs: &[Job],
    results: &[(ResultRow, Option<ConvergenceTrace>, bool)],
) -> Result<Option<PathBuf>> {
    let rows: Vec<ResultRow> = results.iter().map(|r| r.0.clone()).collect();
    let energy_axes = |title: &str| AxesSpec {
        title: title.into(),
        x_label: "C (bits/s/Hz)".into(),
        y_label: "E_T (dB re 1 J)".into(),
        log_y: false,
    };
    let (series, axes) = match cfg.experiment {
        ExperimentId::RateSweep | ExperimentId::TdmaCompare => {
            (sweep_series(&rows, |r| r.method.clone()), energy_axes("Energy versus rate target"))
        }
        ExperimentId::MSweep => (sweep_series(&rows, |r| format!("{} M={}", r.method, r.m)), energy_axes("Energy versus rate target and M")),
        ExperimentId::AntennaSweep => {
            (sweep_series(&rows, |r| format!("{} N={}", r.method, r.n)), energy_axes("Energy versus rate target and N"))
        }
        ExperimentId::LocationStudy => (
            sweep_series(&rows, |r| r.experiment.rsplit('/').next().unwrap_or("").to_string()),
            energy_axes("Energy by device placement"),
        ),
        ExperimentId::Convergence => {
            let mut s = Vec::new();
            for (j, (_, t, _)) in jobs.iter().zip(results) {
                if let (0, Some(t)) = (j.trial, t) {
                    s.push(Series {
                        label: j.method.name().into(),
                        points: t.energy.iter().enumerate().map(|(k, e)| ((k + 1) as f64, energy_db(*e))).collect(),
                    });
                }
            }
            let axes = AxesSpec {
                title: "Convergence".into(),
                x_label: "iteration".into(),
                y_label: "E_T (dB re 1 J)".into(),
                log_y: false,
            };
            (s, axes)
        }
        ExperimentId::Complexity | ExperimentId::IotEe => return Ok(None),
    };
    // single-point sweeps have nothing to draw
    let series: Vec<Series> = series.into_iter().filter(|s| s.points.len() >= 2).collect();
    if series.is_empty() {
        return Ok(None);
    }
    let path = cfg.out_dir.join(format!("{}.svg", cfg.experiment.name()));
    emit_plot(&series, &axes, &path)?;
    Ok(Some(path))
}

fn run_complexity(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let n = cfg.antenna_values[0];
    let m = cfg.m_values[0];
    let eps = cfg.complexity_epsilon;
    let header = ["experiment", "method", "I", "N", "M", "epsilon", "kappa", "size", "flops", "log10_flops"];
    let mut out = Vec::new();
    let mut series = Vec::new();
    for method in cfg.methods.iter().filter(|m| **m != MethodKind::Tdma) {
        let mut pts = Vec::new();
        for &i in &cfg.device_values {
            let c = match method {
                MethodKind::Sq => complexity_sq(i, n, eps),
                _ => complexity_cqr(i, n, m, eps),
            };
            out.push(vec![
                Cell::from("complexity"),
                Cell::from(method.name()),
                Cell::from(i),
                Cell::from(n),
                Cell::from(m),
                Cell::from(eps),
                Cell::from(c.kappa),
                Cell::from(c.size),
                Cell::from(c.flops),
                Cell::from(c.flops.log10()),
            ]);
            pts.push((i as f64, c.flops));
        }
        series.push(Series { label: method.name().into(), points: pts });
    }
    let path = cfg.out_dir.join("complexity.csv");
    emit_table(&header, &out, &path)?;
    let mut files = vec![path];
    if cfg.svg && series.iter().all(|s| s.points.len() >= 2) {
        let axes = AxesSpec {
            title: format!("Complexity, N = {n}"),
            x_label: "I".into(),
            y_label: "flops".into(),
            log_y: true,
        };
        let p = cfg.out_dir.join("complexity.svg");
        emit_plot(&series, &axes, &p)?;
        files.push(p);
    }
    Ok(RunOutcome { rows: Vec::new(), files, failures: 0 })
}

fn run_iot_ee(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let protocols = match &cfg.protocol_file {
        Some(p) => load_protocols(p)?,
        None => default_protocols(),
    };
    let header = ["protocol", "carrier_hz", "bandwidth_hz", "power_w", "se_bps_hz", "ee_bits_per_j"];
    let mut out = Vec::new();
    let mut series = Vec::new();
    for p in &protocols {
        let mut pts = Vec::new();
        for &se in &cfg.se_values {
            let ee = iot_ee_point(p, se)?;
            out.push(vec![
                Cell::from(p.name.as_str()),
                Cell::from(p.carrier_hz),
                Cell::from(p.bandwidth_hz),
                Cell::from(p.power_w),
                Cell::from(se),
                Cell::from(ee),
            ]);
            pts.push((se, ee));
        }
        series.push(Series { label: p.name.clone(), points: pts });
    }
    let path = cfg.out_dir.join("iot_ee.csv");
    emit_table(&header, &out, &path)?;
    let mut files = vec![path];
    if cfg.svg {
        let axes = AxesSpec {
            title: "Energy efficiency".into(),
            x_label: "SE (bits/s/Hz)".into(),
            y_label: "EE (bits/J)".into(),
            log_y: true,
        };
        let p = cfg.out_dir.join("iot_ee.svg");
        emit_plot(&series, &axes, &p)?;
        files.push(p);
    }
    Ok(RunOutcome { rows: Vec::new(), files, failures: 0 })
}
