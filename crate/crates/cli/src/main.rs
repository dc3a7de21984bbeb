use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod experiment;
mod formats;
mod plan;
mod select;

/// Plan cloud trials, match them against provider fingerprints and rank
/// providers by predicted long-term performance.
#[derive(Parser)]
#[command(name = "trialscope", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Output {
    /// Directory receiving the output files.
    #[arg(long = "out", env = "TRIALSCOPE_OUT_DIR", default_value = ".")]
    pub dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a workload trace into a per-VM trial plan (trial_plan.json).
    /// Exits with 2 when the plan cannot meet the loss budget.
    Plan(plan::PlanArgs),
    /// Match trials to fingerprints, predict and rank providers
    /// (selection_report.json, ranking.csv).
    Select(select::SelectArgs),
    /// Run a simulated selection experiment (report.json, figures/, inputs/).
    Experiment(experiment::ExperimentArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Plan(args) => plan::run(args),
        Command::Select(args) => select::run(args),
        Command::Experiment(args) => experiment::run(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
