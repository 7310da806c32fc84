//! The `gkw` command line: corpus generation, feature extraction, training,
//! scoring, evaluation and gradient checks behind one binary.
//!
//! [`run`] is the whole program minus process exit, so integration tests
//! drive it in-process.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod config;
pub mod error;

pub use config::{FileConfig, Precision};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "gkw", version, about = "Visually grounded spoken keyword models")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML configuration with one section per subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Run every stage in a reproducible order.
    #[arg(long, global = true)]
    pub strict_determinism: bool,
    #[arg(long, global = true, value_enum)]
    pub precision: Option<Precision>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Arch {
    Cnn,
    Psc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetSource {
    /// Multi-hot vectors from the transcriptions.
    Oracle,
    /// Soft targets referenced by the manifest.
    Vision,
    /// Soft targets from `--target-file`.
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Bow,
    Kws,
    SemanticKws,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes a seeded synthetic corpus.
    Generate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Extracts MFCC features from WAV files.
    Features {
        /// WAV files or directories holding them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains a keyword model and writes a checkpoint.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "oracle")]
        targets: TargetSource,
        #[arg(long)]
        target_file: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "cnn")]
        arch: Arch,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss CSV; defaults to the checkpoint path with a
        /// `.csv` extension.
        #[arg(long)]
        epoch_log: Option<PathBuf>,
        /// Defaults to `vocab.txt` beside the manifest.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
    },
    /// Writes a score table for one split.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, required_unless_present = "unigram", conflicts_with = "unigram")]
        checkpoint: Option<PathBuf>,
        /// Scores every utterance with the training-split word frequencies.
        #[arg(long)]
        unigram: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Also writes each utterance's frame-level score map (`psc` only).
        #[arg(long)]
        emit_localization: bool,
    },
    /// Evaluates a score table against the manifest transcriptions.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "bow")]
        mode: EvalMode,
        /// Repeatable decision threshold.
        #[arg(long)]
        alpha: Vec<f64>,
        #[arg(long)]
        keywords: Option<usize>,
        #[arg(long)]
        min_occurrences: Option<usize>,
        #[arg(long)]
        semantic_map: Option<PathBuf>,
        #[arg(long)]
        tie_trials: Option<usize>,
        /// Defaults to `stopwords.txt` beside the manifest when present.
        #[arg(long)]
        stoplist: Option<PathBuf>,
        /// False-alarm CSV at the first threshold (bow mode).
        #[arg(long)]
        confusion: Option<PathBuf>,
        /// JSON report path; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compares analytic and finite-difference gradients of a toy model.
    Gradcheck {
        #[arg(long, value_enum)]
        arch: Arch,
        /// Reduced widths; the only supported size.
        #[arg(long)]
        toy: bool,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        /// Perturbs one analytic gradient entry (negative control).
        #[arg(long, hide = true)]
        corrupt: bool,
    },
}

/// Settings shared by every subcommand after merging flags over the file.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Globals {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub strict_determinism: bool,
    pub precision: Precision,
}

impl Globals {
    pub fn resolve(args: &GlobalArgs, file: &FileConfig) -> CliResult<Self> {
        let threads = args.threads.or(file.threads);
        if threads == Some(0) {
            return Err(CliError::config("threads must be at least 1"));
        }
        Ok(Globals {
            seed: args.seed.or(file.seed),
            threads,
            strict_determinism: args.strict_determinism || file.strict_determinism.unwrap_or(false),
            precision: args.precision.or(file.precision).unwrap_or_default(),
        })
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("GKW_LOG", "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code. Normal output goes to `out`, errors to stderr.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let file = FileConfig::load(cli.global.config.as_deref())?;
    let globals = Globals::resolve(&cli.global, &file)?;
    let task = || commands::dispatch(cli.command, &file, &globals, out);
    match globals.threads {
        None => task(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?
            .install(task),
    }
}
