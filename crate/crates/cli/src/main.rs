use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use mos3d::bench::{run_batch, write_outputs, ExperimentConfig, DEFAULT_SERIAL_SIMULATIONS};
use mos3d::domain::WorldFile;
use mos3d::par::Execution;
use mos3d::planner::PlannerKind;

/// Runs batches of 3D multi-object search trials and writes results.
#[derive(Debug, Parser)]
#[command(name = "mos3d", version, about)]
struct Args {
    /// Grid side length m (a power of two).
    #[arg(long = "size", default_value_t = 8)]
    m: u32,
    /// Number of objects to place.
    #[arg(long = "num-objects", default_value_t = 2)]
    n: usize,
    /// Sensor range (far-plane distance). Defaults to 4, 6, 10 or 16 for
    /// m = 4, 8, 16, 32 and m/2 otherwise.
    #[arg(long = "sensor-range")]
    d: Option<f64>,
    /// Detection weight of the sensor.
    #[arg(long, default_value_t = 1e5)]
    alpha: f64,
    /// Miss weight of the sensor.
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    /// mr-pouct, pouct, options-pouct, pomcp, exhaustive or random.
    #[arg(long, default_value = "mr-pouct", value_parser = parse_planner)]
    planner: PlannerKind,
    /// Resolution levels for mr-pouct, comma separated.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<u8>>,
    /// Ground samples per abstract observation.
    #[arg(long = "k-samples", default_value_t = 10)]
    k_samples: usize,
    /// Planning time per step in seconds.
    #[arg(long = "time-per-step", default_value_t = 0.5)]
    time_per_step: f64,
    /// Total time per trial in seconds (default depends on m).
    #[arg(long = "total-time")]
    total_time: Option<f64>,
    #[arg(long = "max-steps", default_value_t = 500)]
    max_steps: usize,
    /// Fixed number of simulations per planning step; implies a virtual clock.
    #[arg(long = "sims-per-step")]
    sims_per_step: Option<usize>,
    /// Particles for pomcp.
    #[arg(long, default_value_t = 1000)]
    particles: usize,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run everything on one thread with a simulation budget, so repeated runs
    /// produce identical results.
    #[arg(long)]
    serial: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// World file to use instead of random worlds.
    #[arg(long)]
    world: Option<PathBuf>,
    /// Skip per-step planner diagnostics and belief snapshots.
    #[arg(long = "no-details")]
    no_details: bool,
}

fn parse_planner(s: &str) -> Result<PlannerKind, String> {
    s.parse().map_err(|e: mos3d::Error| e.to_string())
}

fn default_range(m: u32) -> f64 {
    match m {
        4 => 4.0,
        8 => 6.0,
        16 => 10.0,
        32 => 16.0,
        _ => (m as f64 / 2.0).max(2.0),
    }
}

enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

fn config(args: &Args) -> anyhow::Result<ExperimentConfig> {
    let world = match &args.world {
        Some(p) => Some(WorldFile::read(p).with_context(|| format!("reading world {}", p.display()))?),
        None => None,
    };
    let m = world.as_ref().map_or(args.m, |w| w.m);
    let sims_per_step = match (args.sims_per_step, args.serial) {
        (Some(n), _) => Some(n),
        (None, true) => Some(DEFAULT_SERIAL_SIMULATIONS),
        (None, false) => None,
    };
    let config = ExperimentConfig {
        m,
        n: world.as_ref().map_or(args.n, |w| w.objects.len()),
        d: args.d.unwrap_or_else(|| default_range(m)),
        alpha: args.alpha,
        beta: args.beta,
        planner: args.planner,
        levels: args.levels.clone(),
        k_samples: args.k_samples,
        particles: args.particles,
        time_per_step: args.time_per_step,
        total_time: args.total_time,
        max_steps: args.max_steps,
        sims_per_step,
        trials: args.trials,
        seed: args.seed,
        exec: if args.serial { Execution::Serial } else { Execution::Parallel },
        world,
        record_details: !args.no_details,
        ..Default::default()
    };
    config.validate()?;
    Ok(config)
}

fn run(args: &Args) -> Result<(), Failure> {
    let config = config(args).map_err(Failure::Config)?;
    log::info!("running {} trials of {} on m={}", config.trials, config.planner, config.m);
    let batch = run_batch(&config).map_err(|e| Failure::Config(e.into()))?;
    let files = write_outputs(&batch, &args.out)
        .with_context(|| format!("writing outputs to {}", args.out.display()))
        .map_err(Failure::Run)?;
    let mut report = String::new();
    for row in batch.summary() {
        let ci = |c: Option<f64>| c.map_or("n/a".to_string(), |c| format!("{c:.2}"));
        let _ = writeln!(
            report,
            "{} m={} n={} d={}: reward {:.2} +/- {}, found {:.2} +/- {} over {} trials",
            row.planner,
            row.m,
            row.n,
            row.d,
            row.reward_mean,
            ci(row.reward_ci95),
            row.found_mean,
            ci(row.found_ci95),
            row.trials
        );
    }
    if batch.failures() > 0 {
        eprintln!("{} of {} trials failed; see {}", batch.failures(), config.trials, files.diagnostics.display());
    }
    let _ = writeln!(report, "results written to {}", files.results.display());
    // a closed stdout (e.g. piped into head) is not a failure; the files are written
    match std::io::stdout().lock().write_all(report.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Run(e.into())),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("MOS3D_LOG", "warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
