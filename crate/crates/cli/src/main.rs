use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use homsim_cli::commands::{self, DipFitOptions, GlobalOptions, TableFitOptions};
use homsim_cli::config::EventFormat;
use homsim_cli::CliError;
use homsim_core::fitting::{DipMode, SharedParameters, BOOTSTRAP_RESAMPLES};

#[derive(Parser)]
#[command(name = "homsim", version, about = "Two-photon interference simulator and analysis toolkit")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "HOMSIM_OUT")]
    out: Option<PathBuf>,
    /// Event file format.
    #[arg(long, global = true, value_enum)]
    format: Option<EventFormat>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a detection stream and its coincidence histogram.
    Simulate,
    /// Integrate peaks of an event stream or histogram.
    Analyze {
        #[arg(long, conflicts_with = "histogram", required_unless_present = "histogram")]
        events: Option<PathBuf>,
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
    /// Fit a P(τ) table or the shape of the central dip.
    Fit(FitArgs),
    /// Repeat the simulation over one parameter.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Tabulate result records.
    Report {
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Shared {
    None,
    T1,
    T2,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Parallel,
    Orthogonal,
}

#[derive(Args)]
struct FitArgs {
    /// CSV with `tau_ps,p,sigma_p` and an optional `dataset` column.
    #[arg(long, conflicts_with = "dip", required_unless_present = "dip")]
    table: Option<PathBuf>,
    /// Coincidence histogram; fits the central peak profile.
    #[arg(long)]
    dip: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "none")]
    shared: Shared,
    /// Average the model over a Gaussian delay uncertainty of this FWHM.
    #[arg(long)]
    irf_ps: Option<f64>,
    /// Bootstrap resamples; `--bootstrap` alone uses the default count.
    #[arg(long, num_args = 0..=1)]
    bootstrap: Option<Option<usize>>,
    #[arg(long)]
    reflectance: Option<f64>,
    #[arg(long, value_enum, default_value = "parallel")]
    mode: Mode,
    /// Half-width of the histogram slice around the dip (default 3.5·T1).
    #[arg(long)]
    halfwidth_ps: Option<f64>,
}

fn run(cli: Cli) -> Result<String, CliError> {
    let opts = GlobalOptions { out_dir: cli.out, seed: cli.seed, format: cli.format, jobs: cli.jobs };
    let need_config = || cli.config.clone().ok_or_else(|| CliError::config("--config is required for this command"));
    let outcome = match cli.command {
        Command::Simulate => commands::simulate(&need_config()?, &opts)?,
        Command::Analyze { events, histogram } => {
            commands::analyze(&need_config()?, events.as_deref(), histogram.as_deref(), &opts)?
        }
        Command::Fit(f) => match (f.table, f.dip) {
            (Some(table), _) => {
                let shared = match f.shared {
                    Shared::None => SharedParameters::NONE,
                    Shared::T1 => SharedParameters { t1: true, t2: false },
                    Shared::T2 => SharedParameters::T2,
                    Shared::Both => SharedParameters { t1: true, t2: true },
                };
                let fit = TableFitOptions {
                    shared,
                    irf_ps: f.irf_ps,
                    bootstrap: f.bootstrap.map_or(0, |n| n.unwrap_or(BOOTSTRAP_RESAMPLES)),
                    reflectance: f.reflectance,
                };
                commands::fit_table(&table, &fit, &opts)?
            }
            (None, Some(hist)) => {
                let mode = match f.mode {
                    Mode::Parallel => DipMode::Parallel,
                    Mode::Orthogonal => DipMode::Orthogonal,
                };
                let dip = DipFitOptions { mode, halfwidth_ps: f.halfwidth_ps };
                commands::fit_dip(&hist, &need_config()?, dip, &opts)?
            }
            (None, None) => return Err(CliError::config("fit needs --table or --dip")),
        },
        Command::Sweep { spec } => commands::sweep(&need_config()?, &spec, &opts)?,
        Command::Report { records } => commands::report(&records, &opts)?,
    };
    Ok(outcome.summary)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
