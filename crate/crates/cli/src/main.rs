mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Complexity metrics and world-model prompting for Theory-of-Mind benchmarks.
#[derive(Debug, Parser)]
#[command(name = "tomloom", version, propagate_version = true)]
pub struct Cli {
    /// Settings file (defaults to ./tomloom.toml when present).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print machine-readable JSON summaries on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a native benchmark file into problems.jsonl.
    Ingest {
        /// tomi, fantom, mindgames, adv-csfb or socialiqa.
        #[arg(long)]
        benchmark: tomloom::types::Benchmark,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic false-belief stories with exact annotations.
    Worldgen(commands::WorldgenArgs),
    /// Evaluate prompting strategies over a dataset.
    Run(commands::RunArgs),
    /// Probe a backend for memorized benchmark items.
    Memorize(commands::MemorizeArgs),
    /// Compute statefulness, statelessness and complexity of annotations.
    Complexity(commands::ComplexityArgs),
    /// Annotation tooling.
    Annotate {
        #[command(subcommand)]
        command: AnnotateCommand,
    },
    /// Summarize a finished run, optionally against complexity statistics.
    Report(commands::ReportArgs),
}

#[derive(Debug, Subcommand)]
enum AnnotateCommand {
    /// Serve the annotation REST API.
    Serve(commands::ServeArgs),
}

/// An error caused by the invocation rather than by tomloom itself.
#[derive(Debug)]
pub struct UserError(anyhow::Error);

impl fmt::Display for UserError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for UserError {}

pub fn user(e: impl Into<anyhow::Error>) -> anyhow::Error {
    UserError(e.into()).into()
}

pub fn user_msg(msg: impl fmt::Display) -> anyhow::Error {
    user(anyhow::anyhow!("{msg}"))
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.chain().any(|c| c.is::<UserError>()) {
        1
    } else {
        2
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let file = config::FileConfig::load(cli.config.as_deref())?;
    let json = cli.json;
    match cli.command {
        Command::Ingest {
            benchmark,
            input,
            out,
        } => commands::ingest(benchmark, &input, &out, json),
        Command::Worldgen(args) => commands::worldgen(&args, json),
        Command::Run(args) => commands::run(&args, &file, json),
        Command::Memorize(args) => commands::memorize(&args, &file, json),
        Command::Complexity(args) => commands::complexity(&args, json),
        Command::Annotate {
            command: AnnotateCommand::Serve(args),
        } => commands::serve(&args),
        Command::Report(args) => commands::report(&args, json),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
