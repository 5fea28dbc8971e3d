use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybeam::harness::{preset, run_scenario, to_csv_string, write_csv, ExperimentConfig, PRESETS};
use hybeam::Error;
use log::info;

/// Monte Carlo experiments for hybrid analog-digital beamforming.
#[derive(Parser)]
#[command(name = "hybeam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSV results.
    Run(RunArgs),
    /// List the built-in presets.
    ListPresets,
    /// Parse and validate a scenario file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file in TOML format.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Name of a built-in preset.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte Carlo trials per point.
    #[arg(long)]
    trials: Option<usize>,
    /// Output CSV path; stdout when neither this nor the scenario names one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Record per-point wall-clock time.
    #[arg(long)]
    timing: bool,
}

fn run(args: RunArgs) -> Result<(), Error> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentConfig::from_path(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => unreachable!("clap requires one of --config and --preset"),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if args.timing {
        config.timing = true;
    }
    if let Some(out) = args.out {
        config.output = Some(out);
    }
    info!("running {} with {} trials", config.scenario, config.trials);
    let records = run_scenario(&config, args.workers)?;
    match &config.output {
        Some(path) => write_csv(&records, path)?,
        None => print!("{}", to_csv_string(&records)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let message = e.render().to_string();
            let line = serde_json::json!({ "error": "Usage", "message": message.trim() });
            eprintln!("{line}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::ListPresets => {
            for (name, about) in PRESETS {
                println!("{name:<10} {about}");
            }
            Ok(())
        }
        Command::Validate { config } => ExperimentConfig::from_path(&config).map(|c| {
            println!("{}: ok", c.scenario);
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
