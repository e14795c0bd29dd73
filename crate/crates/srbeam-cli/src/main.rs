use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use srbeam::harness::{run_experiment, ExperimentConfig, ExperimentId};

/// Run a symbiotic-radio beamforming experiment and write CSV (and SVG) results.
#[derive(Parser, Debug)]
#[command(name = "srbeam", version)]
struct Args {
    /// rate_sweep, m_sweep, antenna_sweep, complexity, convergence, tdma_compare, iot_ee or location_study
    experiment: String,
    /// TOML file with [scene], [sweep] and [algorithm] sections
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Also write SVG plots
    #[arg(long)]
    svg: bool,
    /// Record wall time per run (breaks byte reproducibility)
    #[arg(long)]
    timing: bool,
}

fn run(args: Args) -> srbeam::Result<bool> {
    let id = ExperimentId::parse(&args.experiment)?;
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(id, p)?,
        None => ExperimentConfig::defaults(id),
    };
    if let Some(o) = args.out {
        cfg.out_dir = o;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    cfg.svg |= args.svg;
    cfg.timing |= args.timing;
    let outcome = run_experiment(&cfg)?;
    for f in &outcome.files {
        println!("{}", f.display());
    }
    let unconverged = outcome.rows.iter().filter(|r| !r.converged).count();
    if unconverged > 0 {
        eprintln!("{unconverged} of {} runs did not converge ({} failed)", outcome.rows.len(), outcome.failures);
    }
    Ok(unconverged == 0)
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
