use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use phasesync::Error;

mod commands;
mod output;

/// Phase-based synchronization analysis and controller design for networks of
/// heterogeneous LTI agents.
///
/// Exit codes: 0 success or condition holds, 1 negative verdict, 2 input
/// error, 3 domain error, 4 precondition failure.
#[derive(Debug, Parser)]
#[command(name = "phasesync", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify a complex matrix and print its phases.
    Phases(PhasesArgs),
    /// Frobenius form of a network Laplacian and the phase bound of each component.
    LapPhase(LapPhaseArgs),
    /// Check the small-phase synchronization conditions.
    Analyze(AnalyzeArgs),
    /// Synthesize synchronizing controllers.
    Design(DesignArgs),
    /// Simulate the closed loop and write trajectories.
    Simulate(SimulateArgs),
    /// Eigenstructure test of the closed loop over a range of controller gains.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct PhasesArgs {
    /// JSON matrix: rows of numbers or `[re, im]` pairs.
    pub matrix: PathBuf,
    /// Classification tolerance (default 1e-9 times the Frobenius norm).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LapPhaseArgs {
    #[arg(long)]
    pub network: PathBuf,
    /// Tighten non-root bounds with the numeric scaling search.
    #[arg(long)]
    pub refine: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CouplingMode {
    /// Dynamics on the edges of an undirected graph.
    Edges,
    /// One controller per agent.
    Controllers,
    /// The same controller at every agent.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignModeArg {
    Uniform,
    PerAgent,
}

#[derive(Debug, Args)]
pub struct SystemArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub agents: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long)]
    pub controllers: PathBuf,
    #[arg(long, value_enum, default_value = "controllers")]
    pub mode: CouplingMode,
    /// Number of log-spaced frequencies before adaptive refinement.
    #[arg(long, default_value_t = 400)]
    pub grid: usize,
    /// Smallest phase margin (rad) accepted as a pass.
    #[arg(long, default_value_t = 0.05)]
    pub tol: f64,
    #[arg(long)]
    pub refine: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, value_enum, default_value = "uniform")]
    pub mode: DesignModeArg,
    /// Smallest gain tried by the low-gain scan.
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    /// LMI feasibility tolerance on the eigenvalue margin.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub refine: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long)]
    pub controllers: PathBuf,
    /// Coupling read from the controllers file (inferred when omitted).
    #[arg(long, value_enum)]
    pub mode: Option<CouplingMode>,
    /// Horizon; chosen from the slowest stable eigenvalue when omitted.
    #[arg(long)]
    pub tfinal: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Scale applied to every controller.
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,
    /// Initial closed-loop state, comma separated; a single value fills every state.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Seed for the random initial state used when `--x0` is omitted.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long)]
    pub controllers: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<CouplingMode>,
    /// Explicit gains, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    /// Number of halvings from 1 when `--eps` is omitted.
    #[arg(long, default_value_t = 12)]
    pub grid: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NotSquare { .. }
        | Error::Empty
        | Error::DimensionMismatch(_)
        | Error::NonFinite(_)
        | Error::NotPositive(_)
        | Error::Asymmetric(_)
        | Error::InvalidGraph(_)
        | Error::InvalidRational(_)
        | Error::Input(_)
        | Error::Json(_)
        | Error::Io(_) => 2,
        Error::Precondition(_) | Error::NoSpanningTree { .. } => 4,
        Error::SearchFailure(_) => 1,
        _ => 3,
    }
}

fn init_threads() {
    if let Some(n) = std::env::var("PHASESYNC_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // fails only if a pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    match commands::run(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
