use std::io::Read as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dfcaptcha::config::{Overrides, RunConfig};
use dfcaptcha::{catalog_cmd, run, CliError, CliResult};

/// Challenge-response deepfake screening for live calls: catalog tools,
/// detector training and call simulation.
#[derive(Debug, Parser)]
#[command(name = "dfcaptcha", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for training and simulation; beats the config file.
    #[arg(long, global = true, env = "DFCAPTCHA_SEED")]
    seed: Option<u64>,
    /// Output directory; beats the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inspect or edit a challenge catalog.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Train detector models on synthetic genuine responses.
    Train,
    /// Run genuine and deepfake call episodes against trained models.
    Simulate,
    /// Recompute metrics from an episode log.
    Report {
        /// `episodes.ndjson` written by `simulate`.
        log: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum CatalogAction {
    /// Check a catalog file and report the first problem.
    Validate { file: PathBuf },
    /// Write a built-in catalog to a file.
    Init {
        file: PathBuf,
        /// The audio-only catalog instead of the video one.
        #[arg(long)]
        audio: bool,
    },
    /// Print the challenges as a table.
    List { file: PathBuf },
    /// Append a challenge given as a JSON object (`-` or nothing reads stdin).
    Add { file: PathBuf, fragment: Option<String> },
}

fn fragment_text(arg: Option<String>) -> CliResult<String> {
    match arg.as_deref() {
        Some(text) if text != "-" => Ok(text.to_string()),
        _ => {
            let mut text = String::new();
            std::io::stdin()
                .read_to_string(&mut text)
                .map_err(|e| CliError::Io(format!("stdin: {e}")))?;
            Ok(text)
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<String> {
    let g = cli.global;
    let overrides = Overrides {
        config: g.config,
        seed: g.seed,
        out: g.out.clone(),
    };
    let work = move || match cli.command {
        Command::Catalog { action } => match action {
            CatalogAction::Validate { file } => catalog_cmd::validate(&file),
            CatalogAction::Init { file, audio } => catalog_cmd::init(&file, audio),
            CatalogAction::List { file } => catalog_cmd::list(&file),
            CatalogAction::Add { file, fragment } => catalog_cmd::add(&file, &fragment_text(fragment)?),
        },
        Command::Train => run::train(&RunConfig::load(&overrides)?),
        Command::Simulate => run::simulate(&RunConfig::load(&overrides)?),
        Command::Report { log } => run::report(&log, g.out.as_deref()),
    };
    match g.jobs {
        None => work(),
        Some(0) => Err(CliError::Config("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("--jobs {n}: {e}")))?
            .install(work),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 4 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("dfcaptcha: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
