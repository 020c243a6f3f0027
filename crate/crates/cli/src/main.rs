//! `radcap`: preprocessing, ground-truth generation, caption parsing,
//! evaluation, reporting and diagnostics from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use radcap_core::config::RunConfig;

/// Exit codes: 0 success, 2 input format error, 3 config error, 4 internal
/// invariant violation.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Config(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn input_err<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Input(format!("{context}: {e}"))
}

#[derive(Parser, Debug)]
#[command(name = "radcap", version, about = "Radar scene-caption evaluation toolkit")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand; they override the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set top_k=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads (0 uses every core). Never changes output bytes.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Class vocabulary file.
    #[arg(long, global = true)]
    vocab: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Turn RT4D tesseracts into network input tensors.
    Preprocess(commands::PreprocessArgs),
    /// Render ground-truth captions from a label file.
    GenGt(commands::GenGtArgs),
    /// Parse a caption file into JSON lines of predicted objects.
    Parse(commands::ParseArgs),
    /// Score predicted captions against ground-truth captions.
    Eval(commands::EvalArgs),
    /// Render a metrics CSV as a table and per-group CSV.
    Report(commands::ReportArgs),
    /// Compare token norms against a reference embedding dump.
    DiagnoseNorms(commands::DiagnoseArgs),
    /// Detect captioners that ignore their sensor input.
    SwapTest(commands::SwapArgs),
    /// Check a split manifest and print per-split totals.
    ValidateManifest(commands::ValidateArgs),
}

fn load_config(common: &CommonArgs) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k, v).map_err(|e| CliError::Config(e.to_string()))?;
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    if let Some(v) = &common.vocab {
        cfg.vocab_path = Some(v.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Preprocess(a) => {
            a.apply(&mut cfg)?;
            finish_config(&cfg)?;
            commands::preprocess(&cfg, &a)
        }
        Command::GenGt(a) => {
            a.apply(&mut cfg)?;
            finish_config(&cfg)?;
            commands::gen_gt(&cfg, &a)
        }
        Command::Parse(a) => {
            finish_config(&cfg)?;
            commands::parse(&cfg, &a)
        }
        Command::Eval(a) => {
            a.apply(&mut cfg)?;
            finish_config(&cfg)?;
            commands::eval(&cfg, &a)
        }
        Command::Report(a) => commands::report(&a),
        Command::DiagnoseNorms(a) => {
            a.apply(&mut cfg)?;
            finish_config(&cfg)?;
            commands::diagnose(&cfg, &a)
        }
        Command::SwapTest(a) => {
            a.apply(&mut cfg)?;
            finish_config(&cfg)?;
            commands::swap_test(&cfg, &a)
        }
        Command::ValidateManifest(a) => commands::validate_manifest(&a),
    }
}

fn finish_config(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    cfg.check_paths().map_err(|e| CliError::Config(e.to_string()))?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("radcap: {e}");
            ExitCode::from(e.code())
        }
        Err(_) => ExitCode::from(4),
    }
}
