//! `beatpose` command-line entry point.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;

#[derive(Parser)]
#[command(
    name = "beatpose",
    version,
    about = "Style-conditioned 3-point pose prediction for rhythm-game beatmaps"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Global {
    /// Pipeline config (TOML).
    #[arg(long, global = true, env = "BEATPOSE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Root seed; overrides `cli_app.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; overrides `cli_app.threads`.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Config override, `section.key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate beatmaps; exit 0 iff none has violations.
    Ingest {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Build a binary training dataset from an input manifest.
    Dataset { manifest: PathBuf },
    /// Train on a dataset; writes a checkpoint and a loss history.
    Train { dataset: PathBuf },
    /// Generate a whole-song trace.
    Rollout {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        beatmap: PathBuf,
        /// Trace CSV style references are drawn from.
        #[arg(long)]
        donor: PathBuf,
    },
    /// Score a trace against a beatmap.
    Eval {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        beatmap: PathBuf,
        /// Enables the style distance, together with `--donor`.
        #[arg(long, requires = "donor")]
        checkpoint: Option<PathBuf>,
        #[arg(long, requires = "checkpoint")]
        donor: Option<PathBuf>,
    },
    /// Finite-difference gradient check at toy sizes; exit 0 iff below 1e-4.
    Gradcheck,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = commands::Context::load(&cli.global)?;
    match cli.command {
        Command::Ingest { paths } => commands::ingest(&ctx, &paths),
        Command::Dataset { manifest } => commands::dataset(&ctx, &manifest),
        Command::Train { dataset } => commands::train(&ctx, &dataset),
        Command::Rollout {
            checkpoint,
            beatmap,
            donor,
        } => commands::rollout(&ctx, &checkpoint, &beatmap, &donor),
        Command::Eval {
            trace,
            beatmap,
            checkpoint,
            donor,
        } => {
            let style = checkpoint.zip(donor);
            commands::eval(
                &ctx,
                &trace,
                &beatmap,
                style.as_ref().map(|(c, d)| (c.as_path(), d.as_path())),
            )
        }
        Command::Gradcheck => commands::gradcheck(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            CliError::new("usage", e.to_string().trim().to_string()).emit();
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.emit();
            ExitCode::from(1)
        }
    }
}
