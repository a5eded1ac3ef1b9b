use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  invalid input (parse, validation, unobservable system, malformed trace)
  3  gain design infeasible
  4  runtime failure (diverged simulation, I/O); a partial trace is kept

Environment:
  SECEST_TOL  overrides the zero tolerance used for rank and support decisions";

#[derive(Parser, Debug)]
#[command(name = "secest", version, about = "Secure state estimation under sparse sensor attacks", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-sensor observable subspaces, coverage, redundancy and decomposition checks.
    Analyze {
        system: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Design observer gains, gamma and detector thresholds.
    Design(DesignArgs),
    /// Run the closed loop and write a trace CSV and metrics JSON.
    Simulate(SimulateArgs),
    /// Extract plot-ready series from a trace.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct DesignArgs {
    system: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Use this gamma instead of the largest design cost.
    #[arg(long)]
    gamma: Option<f64>,
    /// Give infeasible sensors a fallback gain instead of failing; requires --gamma.
    #[arg(long)]
    allow_infeasible: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// 14-bus benchmark, switching schedule, uniform attack on [-10, 10].
    Ieee14Random,
    /// 14-bus benchmark, switching schedule, attack value k/5.
    Ieee14Slope,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// System file; not needed with --preset.
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    system: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Gains file; designed inline when absent.
    #[arg(long)]
    gains: Option<PathBuf>,
    /// Attack scenario file; no attack when absent.
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Steps to simulate (default 2000 for presets, 1000 otherwise).
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Detector gamma (presets default to 0.5).
    #[arg(long)]
    gamma: Option<f64>,
    /// Accept fallback gains for infeasible sensors when designing inline; requires --gamma.
    #[arg(long)]
    allow_infeasible: bool,
    /// Entrywise bound of the initial estimation error (presets default to gamma).
    #[arg(long)]
    init_error: Option<f64>,
    /// Draw the initial error in the original coordinates instead of modal ones.
    #[arg(long)]
    init_original: bool,
    #[arg(long)]
    no_luenberger: bool,
    /// Independent runs with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    repeats: u32,
    /// Output directory.
    #[arg(short, long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    trace: PathBuf,
    /// 1-based bus of the 14-bus benchmark whose angle and frequency are extracted.
    #[arg(long, default_value_t = 5)]
    bus: usize,
    /// Sensor whose residue series is extracted (default: the bus's power sensor).
    #[arg(long)]
    sensor: Option<usize>,
    /// Detector threshold drawn with the residue series.
    #[arg(long, conflicts_with = "metrics")]
    threshold: Option<f64>,
    /// Metrics JSON from `simulate`, used to look up the threshold.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(short, long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze { system, output } => commands::analyze(&system, output.as_deref()),
        Command::Design(args) => commands::design(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Report(args) => commands::report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
