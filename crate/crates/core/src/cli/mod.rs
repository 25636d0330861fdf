//! Command-line interface.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! runtime and data errors. Commands write their output files only after all
//! work has succeeded.

mod commands;
mod run_config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{format_bleu, format_delta, gradcheck_report, GradcheckSummary, GRADCHECK_TOLERANCE};
pub use run_config::RunConfig;

use crate::error::Error;
use crate::exec::Exec;

#[derive(Debug, Parser)]
#[command(name = "adaptive-nmt", version, about = "Attention-sentinel NMT toolkit")]
pub struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a `key = value` config file.
    Train(TrainArgs),
    /// Translate a tokenized source file.
    Translate(TranslateArgs),
    /// Corpus BLEU, optionally compared against a second system.
    Evaluate(EvaluateArgs),
    /// Frequency table of tokens with a high sentinel gate.
    Analyze(AnalyzeArgs),
    /// Finite-difference check of a micro model in both modes.
    Gradcheck(GradcheckArgs),
    /// Write the synthetic toy corpus and a matching train config.
    GenToy(GenToyArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config value, e.g. `--set epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Defaults to standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub beam: usize,
    /// Defaults to the model's `max_len`.
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Write per-token sentinel gates here (adaptive models only).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub hyp: PathBuf,
    /// One or more reference files, line-aligned with the hypotheses.
    #[arg(required = true)]
    pub refs: Vec<PathBuf>,
    /// Second system; the reported delta is this system minus `hyp`.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub trace: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    pub threshold: f64,
    #[arg(long, default_value_t = 15)]
    pub top: usize,
    /// Alignment labels (`A`/`I` per target token) for class means.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 6)]
    pub emb_dim: usize,
    #[arg(long, default_value_t = 8)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Add this offset to every analytic gradient (negative control).
    #[arg(long, hide = true)]
    pub corrupt: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenToyArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub size: usize,
    #[arg(long, default_value_t = 200)]
    pub dev: usize,
    #[arg(long, default_value_t = 200)]
    pub test: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 26)]
    pub alphabet: usize,
    #[arg(long, default_value_t = 0.25)]
    pub insertion_prob: f64,
    #[arg(long, value_delimiter = ',', default_value = "the,to,a")]
    pub insertion_tokens: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub min_len: usize,
    #[arg(long, default_value_t = 12)]
    pub max_len: usize,
}

/// Exit code for an error: configuration problems are usage errors.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::ModeMismatch { .. } => 1,
        _ => 2,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let out = std::io::stdout();
    let mut out = out.lock();
    let result = match &cli.command {
        Command::Train(a) => commands::train(a, exec, &mut out),
        Command::Translate(a) => commands::translate(a, exec, &mut out),
        Command::Evaluate(a) => commands::evaluate(a, exec, &mut out),
        Command::Analyze(a) => commands::analyze(a, &mut out),
        Command::Gradcheck(a) => commands::gradcheck(a, &mut out),
        Command::GenToy(a) => commands::gen_toy(a, &mut out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
