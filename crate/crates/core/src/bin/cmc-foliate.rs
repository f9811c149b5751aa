use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cmc_foliate::config::{parse_config_with, Mode, Overrides};
use cmc_foliate::run::{run, EXIT_CONFIG};

/// Builds CMC sphere foliations near infinity and checks them.
#[derive(Parser, Debug)]
#[command(name = "cmc-foliate", version)]
struct Cli {
    /// JSON configuration file.
    config: PathBuf,
    /// sweep, verify or oracle-check; overrides the file.
    #[arg(long)]
    mode: Option<Mode>,
    /// Output directory; overrides the file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the basin trials; overrides the file.
    #[arg(long)]
    seed: Option<u64>,
}

fn init_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("CMC_FOLIATE_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|t| *t > 0)
        .ok_or_else(|| format!("CMC_FOLIATE_THREADS must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let overrides = Overrides { mode: cli.mode, out_dir: cli.out, seed: cli.seed };
    let spec = match parse_config_with(&text, &overrides) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    match run(&spec) {
        Ok(outcome) => {
            eprintln!("{}", outcome.summary);
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}
