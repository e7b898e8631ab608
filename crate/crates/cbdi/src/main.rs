use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cbdi::cli_io::{cmd_classify, cmd_duality, cmd_params, cmd_phase, cmd_simulate, load_config, write_outputs, Outcome, RunConfig, RunError};

#[derive(Parser)]
#[command(name = "cbdi", version, about = "Branching processes with interactions: classify, simulate, check duality")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Boundary verdicts for ∞ of X and 0 of the dual Y
    Classify(Common),
    /// Estimates of the boundary parameters
    Params(Common),
    /// Verdict sweep over the stable family
    Phase(Common),
    /// Simulate paths and summarize them
    Simulate(Common),
    /// Monte Carlo check of the Laplace duality
    Duality(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// output directory; CSV goes to stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// worker threads for path simulation
    #[arg(long, env = "CBDI_THREADS")]
    threads: Option<usize>,
}

fn run(cli: Cli) -> Result<i32, RunError> {
    let (common, f): (&Common, fn(&RunConfig) -> Result<Outcome, RunError>) = match &cli.command {
        Command::Classify(c) => (c, cmd_classify),
        Command::Params(c) => (c, cmd_params),
        Command::Phase(c) => (c, cmd_phase),
        Command::Simulate(c) => (c, cmd_simulate),
        Command::Duality(c) => (c, cmd_duality),
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| RunError::Other(e.to_string()))?;
    }
    let mut cfg = load_config(&common.config)?;
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if let Some(p) = common.paths {
        cfg.sim.n_paths = p;
    }
    if let Some(dt) = common.dt {
        cfg.sim.dt = dt;
    }
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    cfg.sim_config().validate().map_err(|e| RunError::Other(format!("invalid value for `sim`: {e}")))?;
    let outcome = f(&cfg)?;
    if let Some(t) = &outcome.table {
        eprint!("{t}");
    }
    match &cfg.out {
        Some(dir) => {
            for p in write_outputs(&outcome, dir)? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => print!("{}", outcome.csv),
    }
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
