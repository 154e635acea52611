//! The `medthink` command line.

mod commands;
mod config;
mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use medthink::strategies::Strategy;

pub use config::CliConfig;
pub use error::{CliError, Exit};

const AFTER_HELP: &str = "\
Exit codes: 0 ok, 1 failure, 2 usage, 3 missing file, 4 bad config, 5 divergence,
6 dataset, 7 checkpoint, 8 generator, 9 conflict or unresolved export.
Errors are printed to stderr as a single JSON line.
Every command first prints its effective configuration to stderr as
`config <command>: {...}`; that JSON is itself a valid --config file.
The HTTP generator reads its bearer token from MEDTHINK_GENERATOR_TOKEN.";

#[derive(Debug, Parser)]
#[command(name = "medthink", version, about = "Rationale-augmented medical visual question answering")]
#[command(after_help = AFTER_HELP, disable_help_subcommand = true)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// TOML or JSON run configuration
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for corpus generation, initialization and shuffling
    #[arg(long)]
    seed: Option<u64>,
}

fn at_least_one(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    /// Answer only
    None,
    /// Answer, then rationale
    Explanation,
    /// Rationale, then answer
    Reasoning,
    /// Rationale model feeding a separate answer model
    TwoStage,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::None => Strategy::NoRationale,
            StrategyArg::Explanation => Strategy::Explanation,
            StrategyArg::Reasoning => Strategy::Reasoning,
            StrategyArg::TwoStage => Strategy::TwoStageReasoning,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct GeneratorArgs {
    /// Chat-completions endpoint of the rationale generator
    #[arg(long, value_name = "URL", conflicts_with = "generator_mock")]
    generator_url: Option<String>,
    /// Use the seeded offline generator
    #[arg(long)]
    generator_mock: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    /// Refuse if any record is unresolved
    Strict,
    /// Skip unresolved records and list them
    Permissive,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic manifest
    Synth {
        #[command(flatten)]
        common: Common,
        /// Manifest to write
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Print image and question counts per dataset and question type
    Stats {
        #[command(flatten)]
        common: Common,
        /// Manifest to count; repeat for several datasets
        #[arg(long, value_name = "PATH", required = true)]
        manifest: Vec<PathBuf>,
        /// Also write the report as JSON
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Train a model on the train split
    Train {
        #[command(flatten)]
        common: Common,
        /// Manifest whose train split is used
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "none")]
        strategy: StrategyArg,
        /// Training epochs (stage 1 for two-stage)
        #[arg(long, value_parser = at_least_one)]
        epochs: Option<usize>,
        /// Learning rate (stage 1 for two-stage)
        #[arg(long, allow_negative_numbers = true)]
        lr: Option<f64>,
        /// Samples per optimizer step
        #[arg(long, value_parser = at_least_one)]
        batch_size: Option<usize>,
        /// Checkpoint file to write; a directory for two-stage
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Score a checkpoint on the test split
    Eval {
        #[command(flatten)]
        common: Common,
        /// Manifest whose test split is scored
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
        /// Checkpoint file, or a two-stage checkpoint directory
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Expected strategy; defaults to the checkpoint's own
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        /// Also write the report as JSON
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Answer one manifest item and print the answer and rationale
    Generate {
        #[command(flatten)]
        common: Common,
        /// Input manifest
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
        /// Checkpoint file, or a two-stage checkpoint directory
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Sample id; defaults to the first test item
        #[arg(long, value_name = "ID")]
        item: Option<String>,
    },
    /// List answer conflicts between questions on the same image
    AnnotateClean {
        #[command(flatten)]
        common: Common,
        /// Input manifest
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
        /// Write the worklist here instead of stdout
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[command(flatten)]
        generator: GeneratorArgs,
    },
    /// Run the annotation review HTTP service
    Serve {
        #[command(flatten)]
        common: Common,
        /// Input manifest
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
        /// Port on 127.0.0.1; 0 picks a free one
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Event log; defaults to <manifest>.events.jsonl
        #[arg(long, value_name = "PATH")]
        events: Option<PathBuf>,
        /// Where /api/export also writes the annotated manifest
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[command(flatten)]
        generator: GeneratorArgs,
    },
    /// Write approved rationales from an event log into a manifest
    Export {
        #[command(flatten)]
        common: Common,
        /// Input manifest
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
        /// Event log written by `serve`
        #[arg(long, value_name = "PATH")]
        events: PathBuf,
        /// Annotated manifest to write
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// How to treat records still under review
        #[arg(long, value_enum, default_value = "strict")]
        mode: ModeArg,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Stats { .. } => "stats",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Generate { .. } => "generate",
            Command::AnnotateClean { .. } => "annotate-clean",
            Command::Serve { .. } => "serve",
            Command::Export { .. } => "export",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Synth { common, .. }
            | Command::Stats { common, .. }
            | Command::Train { common, .. }
            | Command::Eval { common, .. }
            | Command::Generate { common, .. }
            | Command::AnnotateClean { common, .. }
            | Command::Serve { common, .. }
            | Command::Export { common, .. } => common,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Exit::Ok as i32;
        }
        Err(e) if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            eprintln!("{}", CliError::usage("missing subcommand; see medthink --help").line());
            return Exit::Usage as i32;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", CliError::usage(first.trim_start_matches("error: ")).line());
            return Exit::Usage as i32;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => Exit::Ok as i32,
        Err(e) => {
            eprintln!("{}", e.line());
            e.exit as i32
        }
    }
}
