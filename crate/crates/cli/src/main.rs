//! `bundleseq`: generate synthetic sessions, train baselines and neural
//! sequence models, evaluate them and analyze attention.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or constraint error,
//! 3 numerical failure (divergence, non-finite values).

mod commands;
mod config;
mod manifest;
mod models;

use std::path::PathBuf;
use std::process::ExitCode;

use bundleseq_core::dataio::{SessionEnd, SessionFormat};
use bundleseq_core::evalkit::DemandMode;
use clap::{Args, Parser, Subcommand};

use config::{DataConfig, ModelChoice, Preset, PromptSplit};

/// Bad invocation or configuration (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn parse_format(s: &str) -> Result<SessionFormat, String> {
    s.parse().map_err(|e: bundleseq_core::Error| e.to_string())
}

fn parse_end(s: &str) -> Result<SessionEnd, String> {
    s.parse().map_err(|e: bundleseq_core::Error| e.to_string())
}

fn parse_demand(s: &str) -> Result<DemandMode, String> {
    s.parse().map_err(|e: bundleseq_core::Error| e.to_string())
}

#[derive(Parser)]
#[command(name = "bundleseq", version, about = "Sequential choice in ordered bundles")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample sessions from a known process.
    Generate(GenerateArgs),
    /// Fit one model per playlist.
    Train(TrainArgs),
    /// Score trained models on their holdout sessions.
    Evaluate(EvaluateArgs),
    /// Attention profiles of a trained Transformer.
    AnalyzeAttention(AttentionArgs),
    /// Write prompt/completion pairs for language-model fine-tuning.
    ExportPrompts(PromptArgs),
    /// Descriptive statistics per playlist.
    Summarize(SummarizeArgs),
}

#[derive(Args, Default)]
pub struct DataArgs {
    /// Directory with playlists.jsonl and sessions.jsonl (or sessions.csv).
    #[arg(long = "data")]
    dir: Option<PathBuf>,
    #[arg(long)]
    sessions: Option<PathBuf>,
    #[arg(long)]
    playlists: Option<PathBuf>,
    /// Session file format: jsonl or csv.
    #[arg(long, value_parser = parse_format)]
    format: Option<SessionFormat>,
    /// Fail on invalid sessions instead of skipping them.
    #[arg(long)]
    strict: bool,
    /// Maximum times an item may be consumed.
    #[arg(long)]
    cap: Option<u32>,
}

impl DataArgs {
    fn merge(self, mut into: DataConfig) -> DataConfig {
        if self.dir.is_some() || self.sessions.is_some() || self.playlists.is_some() {
            into.dir = self.dir;
            into.sessions = self.sessions;
            into.playlists = self.playlists;
        }
        if let Some(f) = self.format {
            into.format = f;
        }
        into.strict |= self.strict;
        if let Some(c) = self.cap {
            into.cap = c;
        }
        into
    }
}

#[derive(Args)]
pub struct GenerateArgs {
    /// JSON settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generator spec (JSON); replaces the preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Bundle size for the preset.
    #[arg(long)]
    tracks: Option<usize>,
    #[arg(long)]
    sessions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    format: Option<SessionFormat>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelChoice>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// full or truncate.
    #[arg(long, value_parser = parse_end)]
    session_end: Option<SessionEnd>,
    /// Train on this playlist only (repeatable).
    #[arg(long = "playlist", id = "only", value_name = "ID")]
    only: Vec<String>,
    /// Additive smoothing of Markov transition counts.
    #[arg(long)]
    smoothing: Option<f64>,
    /// Feed the observed remaining time instead of the predicted one.
    #[arg(long)]
    leak: bool,
    /// Zero infeasible outcomes in neural predictions.
    #[arg(long)]
    mask_feasible: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    head_dim: Option<usize>,
    #[arg(long)]
    ff_dim: Option<usize>,
    /// Hidden width of the LSTM or MLP.
    #[arg(long)]
    hidden: Option<usize>,
    /// Layer count of the LSTM or MLP.
    #[arg(long)]
    layers: Option<usize>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory of `train` (repeatable).
    #[arg(long = "model-dir")]
    models: Vec<PathBuf>,
    /// Defaults to the data the first model was trained on.
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_end)]
    session_end: Option<SessionEnd>,
    /// realized or propagated.
    #[arg(long, value_parser = parse_demand)]
    demand: Option<DemandMode>,
    #[arg(long = "playlist", id = "only", value_name = "ID")]
    only: Vec<String>,
}

#[derive(Args)]
pub struct AttentionArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "model-dir")]
    model: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "playlist", id = "only", value_name = "ID")]
    only: Vec<String>,
}

#[derive(Args)]
pub struct PromptArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    split: Option<PromptSplit>,
    /// Drop repeated prompt/completion pairs.
    #[arg(long)]
    dedupe: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_fraction: Option<f64>,
}

#[derive(Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<bundleseq_core::Error>() {
            return if e.is_numeric() { 3 } else { 2 };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Generate(a) => commands::generate::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Evaluate(a) => commands::evaluate::run(a),
        Command::AnalyzeAttention(a) => commands::attention::run(a),
        Command::ExportPrompts(a) => commands::prompts::run(a),
        Command::Summarize(a) => commands::summarize::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
