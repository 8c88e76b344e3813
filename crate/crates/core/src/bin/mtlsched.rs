use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mtlsched::error::Error;
use mtlsched::experiment::{compare_schedules, run_experiment, ExperimentConfig};

/// Train a multi-task model with a learned or hand-engineered task schedule.
///
/// Log verbosity follows the `MTLSCHED_LOG` environment variable
/// (e.g. `MTLSCHED_LOG=info`).
#[derive(Parser)]
#[command(name = "mtlsched", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train once with the configured schedule.
    Run { config: PathBuf },
    /// Train every schedule in `schedules` for every seed and rank them.
    Compare { config: PathBuf },
}

fn load(path: &PathBuf, cli: &Cli) -> Result<(ExperimentConfig, PathBuf), Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        if !cfg.seeds.is_empty() {
            cfg.seeds = vec![seed];
        }
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| Error::Config {
            key: "out_dir".into(),
            message: "no output directory; set `out_dir` or pass --out".into(),
        })?;
    Ok((cfg, out))
}

fn execute(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Run { config } => {
            let (cfg, out) = load(config, cli)?;
            let report = run_experiment(&cfg, &out)?;
            println!(
                "{} seed {}: final validation loss {} after {} steps ({:.2}s), results in {}",
                cfg.schedule,
                cfg.seed,
                report.outcome.log.final_val_loss,
                report.outcome.log.steps(),
                report.wall_clock_secs,
                out.display()
            );
        }
        Command::Compare { config } => {
            let (cfg, out) = load(config, cli)?;
            let rows = compare_schedules(&cfg, &out)?;
            println!("{} runs, results in {}", rows.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MTLSCHED_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
