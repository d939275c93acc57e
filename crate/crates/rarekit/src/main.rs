use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rarekit::scenario::{replay_result_file, run_scenario_file, RunError};

#[derive(Parser)]
#[command(
    name = "rarekit",
    about = "Monte Carlo and analytic checks for multivariate heavy-tailed rare events",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Worker threads; 1 selects single-threaded reduction mode.
    /// Falls back to RAREKIT_THREADS, then to the machine parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Override the output path from the scenario file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Run a scenario file of any command type.
    Run(RunArgs),
    /// Re-run a result file and verify bit-identical estimates.
    Replay {
        /// Result file produced by a JSON-format run.
        #[arg(long)]
        result: PathBuf,
    },
    /// Tail-class membership and Matuszewska index estimates.
    Classify(RunArgs),
    /// Exact and Monte Carlo set-tail probabilities.
    Tailprob(RunArgs),
    /// Dependent-scaling constant and tail-ratio verification.
    Breiman(RunArgs),
    /// Single-big-jump ratio for scale-mixture sums.
    Sbj(RunArgs),
    /// Limiting constants of the discounted-claims asymptotic.
    Constants(RunArgs),
    /// Finite-horizon ruin probabilities against the asymptotic.
    Ruin(RunArgs),
    /// Precise-large-deviation lower-bound ratio scans.
    Ldp(RunArgs),
}

fn threads_from(args: &RunArgs) -> usize {
    args.threads
        .or_else(|| {
            std::env::var("RAREKIT_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .max(1)
}

fn run(args: &RunArgs, expected: Option<&str>) -> Result<(), RunError> {
    let threads = threads_from(args);
    if threads > 1 {
        // chunk-ordered reduction keeps estimates identical either way
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let summary = run_scenario_file(&args.scenario, threads, args.out.as_deref(), expected)?;
    println!(
        "{}: {} -> {} [{:.2}s]",
        summary.command,
        summary.headline,
        summary.out_path.display(),
        summary.wall_seconds
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        CliCommand::Run(args) => run(args, None),
        CliCommand::Replay { result } => replay_result_file(result).map(|summary| {
            println!(
                "{}: {} [{:.2}s]",
                summary.command, summary.headline, summary.wall_seconds
            );
        }),
        CliCommand::Classify(args) => run(args, Some("classify")),
        CliCommand::Tailprob(args) => run(args, Some("tailprob")),
        CliCommand::Breiman(args) => run(args, Some("breiman")),
        CliCommand::Sbj(args) => run(args, Some("sbj")),
        CliCommand::Constants(args) => run(args, Some("constants")),
        CliCommand::Ruin(args) => run(args, Some("ruin")),
        CliCommand::Ldp(args) => run(args, Some("ldp")),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
