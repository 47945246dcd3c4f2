use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use lmg_squeeze::config::{ConfigError, ExperimentConfig, SweepConfig};
use lmg_squeeze::harness::{self, HarnessError};

/// Non-Markovian dissipative dynamics and spin squeezing of the isotropic LMG model.
#[derive(Parser, Debug)]
#[command(name = "lmg-squeeze", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for sweeps and trajectory ensembles (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment and write its CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a one- or two-parameter sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the figure scripts and their configs.
    Plots {
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the invariant suite.
    Selfcheck,
}

fn prepare(mut config: ExperimentConfig, seed: Option<u64>) -> Result<ExperimentConfig, ConfigError> {
    config.apply_env()?;
    if let Some(seed) = seed {
        config.run.seed = seed;
    }
    Ok(config)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "sweep".to_string(), |s| s.to_string_lossy().into_owned())
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .expect("thread pool is built once");
    }
    match cli.command {
        Command::Run { config, out, seed } => {
            let config = prepare(ExperimentConfig::load(&config)?, seed)?;
            let (path, output) = harness::run_single(&config, &out)?;
            if let Some(min) = output.summary.min_xi2 {
                info!(
                    "min xi^2 = {min:.6} at t = {:.6}",
                    output.summary.argmin_t.unwrap_or(f64::NAN)
                );
            }
            println!("{}", path.display());
        }
        Command::Sweep { config, out, seed } => {
            let mut sweep = SweepConfig::load(&config)?;
            let base = prepare(sweep.base(), seed)?;
            sweep = SweepConfig {
                sweep: sweep.sweep,
                ..SweepConfig::with_base(base, Vec::new())
            };
            let outcome = harness::run_sweep(&sweep, &out, &stem(&config))?;
            if outcome.failures() > 0 {
                error!(
                    "{} of {} runs failed; see the summary",
                    outcome.failures(),
                    outcome.runs.len()
                );
            }
            println!("{}", outcome.long_path.display());
            println!("{}", outcome.summary_path.display());
        }
        Command::Plots { out } => {
            for path in harness::emit_plot_scripts(&out)? {
                println!("{}", path.display());
            }
        }
        Command::Selfcheck => {
            let checks = harness::selfcheck()?;
            let mut failed = 0;
            for c in &checks {
                let status = if c.passed() { "PASS" } else { "FAIL" };
                println!("{status} {} ({:.3e} <= {:.1e})", c.name, c.value, c.tolerance);
                failed += usize::from(!c.passed());
            }
            if failed > 0 {
                return Err(HarnessError::SelfcheckFailed { failed });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
