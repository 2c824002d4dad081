use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::Parser;

use ionnet::cli::{run_scenario, CliError, Overrides, EXIT_VALIDATION};
use ionnet::config::{load_scenario, LoadedScenario, Scenario};
use ionnet::experiments::{Subcommand, Value};

/// Modular trapped-ion network simulator.
#[derive(Debug, Parser)]
#[command(name = "ionnet", version)]
struct Args {
    /// Experiment to run.
    #[arg(value_parser = PossibleValuesParser::new(Subcommand::ALL.map(Subcommand::name))
        .map(|s| s.parse::<Subcommand>().expect("listed subcommand")))]
    subcommand: Subcommand,
    /// Scenario file; every key falls back to its default when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Root seed of all random streams.
    #[arg(long)]
    seed: u64,
    /// Number of sampled herald waiting times.
    #[arg(long)]
    trials: Option<usize>,
    /// Shots per scan point.
    #[arg(long)]
    shots: Option<usize>,
}

fn run(args: &Args) -> Result<(), CliError> {
    let LoadedScenario {
        mut scenario,
        defaulted,
        warnings,
    } = match &args.config {
        Some(p) => load_scenario(p)?,
        None => Scenario::parse("")?,
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if !defaulted.is_empty() {
        eprintln!("defaulted: {}", defaulted.join(", "));
    }
    Overrides {
        seed: Some(args.seed),
        trials: args.trials,
        shots: args.shots,
    }
    .apply(&mut scenario)?;
    let (output, paths) = run_scenario(args.subcommand, &scenario, &args.out)?;
    for (k, v) in &output.summary {
        match v {
            Value::Num(x) => println!("{k} = {x}"),
            Value::Int(i) => println!("{k} = {i}"),
            Value::Text(s) => println!("{k} = {s}"),
        }
    }
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION as u8 } else { 0 });
        }
    };
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
