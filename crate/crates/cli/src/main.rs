use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use noisefed_cli::{cmd_check, cmd_run, cmd_sweep, CliError};
use noisefed_core::checks::Suite;
use noisefed_core::SweepAxis;

#[derive(Parser)]
#[command(name = "noisefed", version, about = "Privacy-heterogeneous federated LoRA simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one simulation per value of a config axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// gamma_mu, alpha_dir, n_clients, bias_rho or action_set
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a fixed-seed property suite.
    Check {
        /// estimation, bandit, gradients or aggregation
        #[arg(long)]
        suite: String,
    },
}

fn fail(err: CliError) -> ExitCode {
    eprintln!("{err}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seed } => match cmd_run(&config, &out, seed) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(e),
        },
        Command::Sweep { config, axis, values, out } => {
            let axis: SweepAxis = match axis.parse() {
                Ok(a) => a,
                Err(e) => return fail(CliError::sim(None, &e)),
            };
            match cmd_sweep(&config, axis, &values, &out) {
                Ok(0) => ExitCode::SUCCESS,
                Ok(n) => fail(CliError::new("sweep", Some(&out), format!("{n} of {} cells failed", values.len()))),
                Err(e) => fail(e),
            }
        }
        Command::Check { suite } => {
            let suite: Suite = match suite.parse() {
                Ok(s) => s,
                Err(e) => return fail(CliError::sim(None, &e)),
            };
            match cmd_check(suite, &mut std::io::stdout().lock()) {
                Ok(outcomes) if outcomes.iter().all(|o| o.passed()) => ExitCode::SUCCESS,
                Ok(outcomes) => {
                    let n = outcomes.iter().filter(|o| !o.passed()).count();
                    fail(CliError::new("check", None, format!("{n} properties failed")))
                }
                Err(e) => fail(CliError::new("io", None, e)),
            }
        }
    }
}
