use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use projdyn_cli::{compare, run, CliError, Options};

#[derive(Debug, Parser)]
#[command(name = "projdyn", version, about = "Simulate and compare constrained mechanical systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory for the CSV log and reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the randomized state sweep of `compare`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print errors only.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario; writes a trajectory CSV and a run report.
    Run { scenario: PathBuf },
    /// Check the projection method against the classical one and across inertia variants.
    Compare { scenario: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let opts = Options {
        out: cli.out,
        seed: cli.seed,
    };
    let outcome = match &cli.command {
        Command::Run { scenario } => run(scenario, &opts).map(|r| (r.text, r.passed)),
        Command::Compare { scenario } => compare(scenario, &opts).map(|r| (r.text, r.passed)),
    };
    match outcome {
        Ok((text, passed)) => {
            if !cli.quiet {
                print!("{text}");
            }
            if passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: expectations not met");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    e.exit_code() as u8
}
