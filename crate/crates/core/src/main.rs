use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use imcabs::config::load_config;
use imcabs::pipeline::{exit_code, run_phase, run_pipeline, Phase, Summary};

#[derive(Parser)]
#[command(name = "imcabs", version, about = "Interval Markov chain abstraction and reach-avoid verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the IMC abstraction and export it.
    Abstract(Common),
    /// Run robust value iteration on the exported IMC.
    Verify(Common),
    /// Apply clustering passes to tighten the verified bounds.
    Improve(Common),
    /// Monte Carlo validation of the verified bounds.
    Simulate(Common),
    /// All phases in sequence.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Path to the TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Overrides the Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn execute(phase: Option<Phase>, args: &Common) -> imcabs::Result<Summary> {
    let mut config = load_config(&args.config)?;
    if let Some(dir) = &args.output_dir {
        config.output_dir = dir.clone();
    }
    if let (Some(seed), Some(v)) = (args.seed, config.validation.as_mut()) {
        v.seed = seed;
    }
    match phase {
        Some(p) => run_phase(&config, p),
        None => run_pipeline(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (phase, args) = match &cli.command {
        Command::Abstract(a) => (Some(Phase::Abstract), a),
        Command::Verify(a) => (Some(Phase::Verify), a),
        Command::Improve(a) => (Some(Phase::Improve), a),
        Command::Simulate(a) => (Some(Phase::Validate), a),
        Command::Run(a) => (None, a),
    };
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }

    let outcome = execute(phase, args);
    match &outcome {
        Ok(summary) => {
            if let Some(v) = &summary.verification {
                println!(
                    "satisfies {}  violates {}  undetermined {}",
                    v.classes.satisfies, v.classes.violates, v.classes.undetermined
                );
            }
            if let Some(i) = &summary.improvement {
                println!("improved per pass {:?}", i.improved_per_pass);
            }
            if let Some(v) = &summary.validation {
                println!("validation: {}/{} cells consistent", v.consistent, v.cells_checked);
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
        }
    }
    ExitCode::from(exit_code(&outcome) as u8)
}
