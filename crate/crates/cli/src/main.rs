mod config;
mod error;
mod run;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_config, Kind};
use error::CliError;

const DEFAULT_OUT: &str = "rabi-stark-out";

/// Spectroscopy scans, time traces, trapped-ion comparisons and k-photon
/// channel tables for the quantum Rabi-Stark model.
#[derive(Parser)]
#[command(name = "rabi-stark", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep one model parameter and record an observable at each point.
    Scan(RunArgs),
    /// Record populations and moments against time.
    Trace(RunArgs),
    /// Compare the trapped-ion drive with the model it is calibrated to.
    IonCompare(RunArgs),
    /// Tabulate k-photon detunings, couplings and transfer times.
    Channels(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration, or a manifest.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Override a configuration value, e.g. `--set model.g=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory; takes precedence over `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_config_text(path: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        return manifest
            .get("config_toml")
            .and_then(|v| v.as_str())
            .map(str::to_owned)
            .ok_or_else(|| {
                CliError::Config(format!("{} has no `config_toml` entry", path.display()))
            });
    }
    Ok(text)
}

fn run(kind: Kind, args: RunArgs) -> Result<(), CliError> {
    let text = read_config_text(&args.config)?;
    let cfg = parse_config(&text, &args.set, kind)?;
    let out = args
        .out
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    log::info!("{kind} run writing to {}", out.display());
    let summary = run::execute(&cfg, &out)?;
    for f in &summary.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Scan(a) => (Kind::Scan, a),
        Command::Trace(a) => (Kind::Trace, a),
        Command::IonCompare(a) => (Kind::IonCompare, a),
        Command::Channels(a) => (Kind::Channels, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rabi-stark: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
