use std::process::ExitCode;

use circletrack::commands::{self, DenominatorArgs, DiarizeArgs, EvalArgs, FitArgs, SimulateArgs, SweepArgs};
use clap::{Parser, Subcommand};

/// Location-aware speaker diarization on simulated meetings.
///
/// Verbosity is set with CIRCLETRACK_LOG (error, warn, info, debug).
#[derive(Parser)]
#[command(name = "circletrack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a meeting: segments.jsonl and truth.json.
    Simulate(SimulateArgs),
    /// Fit tracker concentrations with EM: params.toml and trace.tsv.
    Fit(FitArgs),
    /// Cluster segments and write RTTM.
    Diarize(DiarizeArgs),
    /// Score RTTM against ground truth.
    Eval(EvalArgs),
    /// Average error over meetings for every (weights, threshold) pair.
    Sweep(SweepArgs),
    /// Tabulate the discretized von Mises normalizer over the mean angle.
    Denominator(DenominatorArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CIRCLETRACK_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Diarize(a) => commands::diarize(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep_cmd(a),
        Command::Denominator(a) => commands::denominator(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("circletrack: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
