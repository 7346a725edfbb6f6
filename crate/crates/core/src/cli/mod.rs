//! Command-line front end: `score`, `synth` and `oracle-check`.

mod cache;
mod input;
mod oracle_check;
mod report;
mod score;
mod synth;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{SolverConfig, Units};

pub use cache::cache_key;
pub use input::{parse_triplet_file, ParsedEntry};
pub use report::ReportRow;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// I/O failures while writing results.
    pub const IO: i32 = 1;
    /// Malformed input file or invalid flags.
    pub const USAGE: i32 = 2;
    /// At least one triplet was invalid or failed to solve.
    pub const TRIPLET_FAILURE: i32 = 3;
    /// Solver and oracle disagree beyond the tolerance.
    pub const ORACLE_MISMATCH: i32 = 4;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "faithfulness",
    version,
    about = "Semantic faithfulness and entropy production scores"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Outer-loop stopping tolerance on the objective change.
    #[arg(long, global = true)]
    pub tol_outer: Option<f64>,
    /// Inner projection / dual stopping tolerance.
    #[arg(long, global = true)]
    pub tol_inner: Option<f64>,
    /// Outer iteration budget.
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// Additive smoothing applied to distributions before solving.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub units: Option<Units>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file (score, oracle-check) or directory (synth).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Directory holding cached per-triplet results.
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every triplet in a JSON file.
    Score(score::ScoreArgs),
    /// Run the seeded synthetic correlation study.
    Synth(synth::SynthArgs),
    /// Compare solver output with the brute-force oracles (N <= 5).
    OracleCheck(oracle_check::OracleCheckArgs),
}

/// Error carrying the exit code it should produce.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: exit::USAGE,
            message: message.into(),
        }
    }

    pub fn io(context: impl std::fmt::Display, err: io::Error) -> Self {
        Self {
            code: exit::IO,
            message: format!("{context}: {err}"),
        }
    }
}

type CliResult = std::result::Result<i32, CliError>;

impl GlobalArgs {
    pub fn solver_config(&self) -> std::result::Result<SolverConfig, CliError> {
        let mut cfg = SolverConfig::default();
        if let Some(v) = self.tol_outer {
            cfg.tol_outer = v;
        }
        if let Some(v) = self.tol_inner {
            cfg.tol_inner = v;
        }
        if let Some(v) = self.max_iter {
            cfg.max_outer_iters = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon_smooth = v;
        }
        if let Some(v) = self.units {
            cfg.report_units = v;
        }
        cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(cfg)
    }
}

fn open_output(out: Option<&Path>) -> std::result::Result<Box<dyn Write>, CliError> {
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::io(path.display(), e))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn read_input(path: &Path) -> std::result::Result<String, CliError> {
    if path == Path::new("-") {
        return io::read_to_string(io::stdin()).map_err(|e| CliError::usage(format!("stdin: {e}")));
    }
    std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Formats a float in its shortest round-trip decimal form.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Parses arguments and runs the selected command, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            };
        }
    };
    let level = match cli.global.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();

    let outcome = match &cli.command {
        Command::Score(args) => score::run(args, &cli.global),
        Command::Synth(args) => synth::run(args, &cli.global),
        Command::OracleCheck(args) => oracle_check::run(args, &cli.global),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
