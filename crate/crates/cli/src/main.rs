//! `secrange`: batch runner for the secure-ranging simulator.
//!
//! Each subcommand reads an optional JSON config, applies flag overrides,
//! and writes `<cmd>.csv` plus `<cmd>.json` into the output directory.
//! Progress goes to stderr. Exit codes: 0 success, 1 failed oracle check
//! or I/O error, 2 config error, 3 non-finite result.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("oracle check failed: {0}")]
    Check(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Check(_) | CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<secrange::Error> for CliError {
    fn from(e: secrange::Error) -> Self {
        match e {
            secrange::Error::Numeric(m) => CliError::Numeric(m),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "secrange", version, about = "Secure quantum ranging simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// QFI sweep: closed form vs finite difference.
    Qfi(Common),
    /// Classical FI of the balanced measurement by Monte Carlo.
    Fi(Common),
    /// Optimal cheating attack and forgery bounds over an N sweep.
    Attack(Common),
    /// Three-scenario detection error rates against analytic bounds.
    Detect(Common),
    /// Analytic kernels against brute-force references.
    OracleCheck(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON config file; omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Trials, samples, restarts or instances, depending on the command.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, common) = match &cli.command {
        Command::Qfi(c) => ("qfi", c),
        Command::Fi(c) => ("fi", c),
        Command::Attack(c) => ("attack", c),
        Command::Detect(c) => ("detect", c),
        Command::OracleCheck(c) => ("oracle_check", c),
    };
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let seed = common.seed.or(cfg.seed).unwrap_or(0);
    cfg.seed = Some(seed);
    if let Some(t) = common.trials {
        match cli.command {
            Command::Qfi(_) => {}
            Command::Fi(_) => cfg.fi.samples = t,
            Command::Attack(_) => cfg.attack.restarts = t,
            Command::Detect(_) => cfg.detect.trials = t,
            Command::OracleCheck(_) => cfg.oracle_check.instances = t,
        }
    }
    let out = commands::Output::new(&common.out, name)?;
    eprintln!("secrange {name}: seed {seed}, writing to {}", common.out.display());
    match cli.command {
        Command::Qfi(_) => commands::qfi(&cfg, &out),
        Command::Fi(_) => commands::fi(&cfg, seed, &out),
        Command::Attack(_) => commands::attack(&cfg, seed, &out),
        Command::Detect(_) => commands::detect(&cfg, seed, &out),
        Command::OracleCheck(_) => commands::oracle_check(&cfg, seed, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
