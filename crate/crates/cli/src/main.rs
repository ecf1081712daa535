use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod error;
mod output;

use error::CliError;

/// Fuzzy-class spatial filtering and band-power regression for EEG.
///
/// Every run writes its outputs plus a `run-manifest.json` under --out-dir.
/// Exit codes: 0 success, 2 usage or config error, 3 missing or malformed
/// input, 4 numerical failure.
#[derive(Debug, Parser)]
#[command(name = "cspr", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Base seed for every random stream; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory receiving all outputs; created when missing.
    #[arg(long, global = true, default_value = "cspr-out")]
    pub out_dir: PathBuf,

    /// Encoding of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Worker threads for parallel stages; defaults to the available cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// JSON file with the subcommand's settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Also write plot-ready CSV tables.
    #[arg(long, global = true)]
    pub plot_data: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trial set or continuous session.
    Synth(commands::SynthArgs),
    /// Clean targets, filter and epoch one subject's sessions.
    Preprocess(commands::PreprocessArgs),
    /// Fit a spatial filter bank on a trial set.
    FitFilters(commands::FitArgs),
    /// Project a trial set through a fitted filter bank.
    ApplyFilters(commands::ApplyArgs),
    /// Extract band-power features from a trial set.
    Features(commands::FeaturesArgs),
    /// Cross-validate every configured pipeline on a trial set.
    Eval(commands::EvalArgs),
    /// Sweep the number of fuzzy classes.
    SweepK(commands::SweepArgs),
    /// Sweep the number of filters per class.
    SweepF(commands::SweepArgs),
    /// Evaluate under increasing attribute noise.
    NoiseRobustness(commands::NoiseArgs),
    /// Time filter fitting against training-set size.
    Timing(commands::TimingArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    commands::dispatch(&cli.global, cli.command)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            let err = CliError::Usage(first.to_string());
            eprintln!("{err}");
            return err.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            err.exit_code()
        }
    }
}
