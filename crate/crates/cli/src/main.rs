//! `hedgecast`: predicts whether the tutor's next turn in a peer-tutoring
//! dialogue hedges, from a sliding window of annotated turns. Subcommands
//! cover corpus synthesis, cross-validated training, per-prediction
//! attribution, feature-group knockouts, and schema inspection.
//!
//! Exit codes: 0 on success, 1 for configuration and input problems, 2 for
//! internal failures. Errors print to stderr as a single line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;
mod formats;
mod runner;

use commands::Ctx;
use error::AppError;

#[derive(Parser)]
#[command(
    name = "hedgecast",
    version,
    about = "Hedge prediction for peer-tutoring dialogues",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed; overrides the config key. Equal seeds give equal output.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing); overrides the config key.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads. Results are identical at any setting.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Trained model file; repeat to compare models on the same corpus.
    #[arg(long = "model", value_name = "FILE", required = true)]
    models: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a corpus and write turns.jsonl, rapport.csv, profiles.csv.
    Generate(CommonArgs),
    /// Cross-validate the configured models, then fit and save final models.
    TrainEval(CommonArgs),
    /// Attribute saved models' predictions to feature groups and features.
    Explain(ExplainArgs),
    /// Re-evaluate with each feature group removed in turn.
    Ablate(CommonArgs),
    /// Print the encoded feature layout for the configured mask.
    SchemaDump(CommonArgs),
}

fn ctx(common: &CommonArgs) -> Result<Ctx, AppError> {
    let (cfg, base) = config::load_config(common.config.as_deref())?;
    let r = config::resolve(cfg, base, common.seed)?;
    Ok(Ctx {
        r,
        out: common.out.clone(),
        jobs: common.jobs,
    })
}

fn run(cli: Cli) -> Result<(), AppError> {
    match &cli.command {
        Command::Generate(c) => commands::cmd_generate(&ctx(c)?),
        Command::TrainEval(c) => commands::cmd_train_eval(&ctx(c)?),
        Command::Explain(a) => commands::cmd_explain(&ctx(&a.common)?, &a.models),
        Command::Ablate(c) => commands::cmd_ablate(&ctx(c)?),
        Command::SchemaDump(c) => commands::cmd_schema_dump(&ctx(c)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("bad arguments").to_string();
            eprintln!("{}", AppError::User(first));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
