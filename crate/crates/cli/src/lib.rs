//! `rehab` command-line pipeline: note extraction, cohort assembly, MCID
//! labelling, association screens, nonparametric tests, classifier
//! evaluation, synthetic cohorts and a markdown report.
//!
//! Exit codes: 0 success, 1 runtime data error, 2 input-format error,
//! 3 config error.

pub mod analyze;
pub mod config;
pub mod parse;
pub mod pipeline;
pub mod report;
pub mod simulate;
pub mod svg;
pub mod train_eval;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use rehab_core::cohort::CohortError;
use rehab_core::models::ModelError;
use rehab_core::note_parser::ParseError;
use rehab_core::outcomes::OutcomeError;
use rehab_core::stats::StatsError;
use rehab_core::synth::SynthError;

pub use config::PipelineConfig;

/// Environment variable overriding the configured output directory.
pub const OUT_ENV: &str = "REHAB_OUT";

#[derive(Error, Debug)]
pub enum CliError {
    #[error("{0}")]
    Runtime(String),

    #[error("{0}")]
    Format(String),

    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Format(_) => 2,
            CliError::Config(_) => 3,
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    pub(crate) fn prefixed(self, context: &str) -> Self {
        match self {
            CliError::Runtime(m) => CliError::Runtime(format!("{context}: {m}")),
            CliError::Format(m) => CliError::Format(format!("{context}: {m}")),
            CliError::Config(m) => CliError::Config(format!("{context}: {m}")),
        }
    }

    /// Prefixes format errors with the file they came from.
    pub(crate) fn in_file(self, path: &Path) -> Self {
        match self {
            CliError::Format(m) => CliError::Format(format!("{}: {m}", path.display())),
            other => other,
        }
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        match e {
            ParseError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Format(e.to_string()),
        }
    }
}

impl From<CohortError> for CliError {
    fn from(e: CohortError) -> Self {
        match e {
            CohortError::Format { .. } => CliError::Format(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<OutcomeError> for CliError {
    fn from(e: OutcomeError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::ClassTooSmall { .. } => CliError::Runtime(format!(
                "{e}; hint: lower models.folds, restrict models.domains / models.stages, or use a larger cohort"
            )),
            ModelError::InvalidHyperparameter(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Config(_) => CliError::Config(e.to_string()),
            SynthError::Io { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "rehab", version, about = "Rehabilitation outcome analytics pipeline")]
pub struct Cli {
    /// Pipeline config file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Master seed for every random stream.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Output directory (default: $REHAB_OUT, then the config, then ./out).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Dump AM-PAC scores and exercise mentions found in notes.
    Parse(ParseArgs),
    /// Assemble the cohort, label outcomes, run tests and association screens.
    Analyze(InputArgs),
    /// Cross-validate the classifiers for every domain and stage.
    TrainEval(InputArgs),
    /// Generate a synthetic cohort (notes, demographics, manifest).
    Simulate,
    /// Build the minimal cohort that reproduces one 2x2 table row.
    Replay(ReplayArgs),
    /// Bundle the artifacts of a run directory into report.md.
    Report(ReportArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct InputArgs {
    /// Procedure notes (JSON Lines).
    #[arg(long)]
    pub notes: Option<PathBuf>,
    /// Demographics CSV.
    #[arg(long)]
    pub demographics: Option<PathBuf>,
    /// Assembled cohort (JSON Lines) instead of notes + demographics.
    #[arg(long)]
    pub cohort: Option<PathBuf>,
    /// Exercise lexicon TSV.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// AM-PAC pattern file.
    #[arg(long)]
    pub patterns: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ParseArgs {
    #[arg(long)]
    pub notes: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub patterns: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    /// Cell counts `a,b,c,d`: improved/exposed, improved/unexposed,
    /// not-improved/exposed, not-improved/unexposed.
    #[arg(long)]
    pub counts: String,
    /// Exercise name, or `SEX=FEMALE`, `RACE=WHITE`, `AGE=UNDER_40` style levels.
    #[arg(long)]
    pub feature: String,
    #[arg(long)]
    pub stage: String,
    #[arg(long)]
    pub domain: String,
}

#[derive(Args, Debug, Clone)]
pub struct ReportArgs {
    /// Run directory to summarise (default: the output directory).
    #[arg(long)]
    pub run: Option<PathBuf>,
}

/// Resolved settings shared by all subcommands.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: PipelineConfig,
    pub seed: u64,
    pub seed_overridden: bool,
    pub out: PathBuf,
}

impl Context {
    pub fn from_cli(cli: &Cli) -> Result<Self, CliError> {
        let config = match &cli.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        let out = cli
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .or_else(|| config.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Context {
            seed: cli.seed.unwrap_or(config.seed),
            seed_overridden: cli.seed.is_some(),
            config,
            out,
        })
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Writes `bytes` to `path`, creating parent directories.
pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Runs one subcommand and returns the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let ctx = Context::from_cli(cli)?;
    let job = || match &cli.command {
        Command::Parse(args) => parse::cmd_parse(&ctx, args),
        Command::Analyze(args) => analyze::cmd_analyze(&ctx, args),
        Command::TrainEval(args) => train_eval::cmd_train_eval(&ctx, args),
        Command::Simulate => simulate::cmd_simulate(&ctx),
        Command::Replay(args) => simulate::cmd_replay(&ctx, args),
        Command::Report(args) => report::cmd_report(&ctx, args),
    };
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {n} threads: {e}")))?
            .install(job),
        None => job(),
    }
}
