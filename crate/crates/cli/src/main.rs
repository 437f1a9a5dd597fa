use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod output;

/// Large-deviation analysis, verification and simulation of the modified
/// Jackson network and the fork network.
#[derive(Parser, Debug)]
#[command(name = "mjn", version)]
struct Cli {
    /// Worker threads for parallel stages (defaults to all cores).
    #[arg(long, global = true, env = "MJN_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decay rate, regime, candidate points and fluid path description.
    Analyze(Common),
    /// Compare the analytic family minima against direct numerical minimization.
    Verify(Common),
    /// Monte Carlo estimate of overflow probabilities.
    Simulate(SimulateArgs),
    /// Analyze every point of a parameter grid.
    Sweep(SweepArgs),
    /// Optimal fluid path as a polyline.
    Path(Common),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Model {
    JacksonMod,
    Fork,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
pub struct Common {
    #[arg(long, value_enum, default_value = "jackson-mod")]
    pub model: Model,
    /// Parameter file, or inline JSON starting with `{`.
    #[arg(long)]
    pub input: String,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Comma-separated node-1 levels.
    #[arg(long, default_value = "4,8,12,16,20,24")]
    pub levels: String,
    /// Regeneration cycles (root trajectories when splitting).
    #[arg(long, default_value_t = 100_000)]
    pub cycles: u64,
    /// Fixed-effort splitting with this many trajectories per stage and batch.
    #[arg(long)]
    pub splitting: Option<usize>,
    #[arg(long, default_value_t = 10_000_000)]
    pub max_events: u64,
    /// Node-2 cycles for the drift diagnostic (0 disables it).
    #[arg(long, default_value_t = 0)]
    pub drift_cycles: u64,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// `name=start:stop:step`; repeat for a product grid.
    #[arg(long, required = true)]
    pub grid: Vec<String>,
}

/// Exit statuses of the command-line contract.
#[derive(Debug)]
pub enum Failure {
    /// Malformed input or a failed computation (exit 1).
    Input(anyhow::Error),
    /// Network not stable (exit 2).
    Unstable(String),
    /// Analytic and numerical answers disagree (exit 3).
    Gap(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Unstable(_) => 2,
            Failure::Gap(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: thread pool: {e}");
        }
    }
    let result = match &cli.command {
        Command::Analyze(c) => commands::analyze(c),
        Command::Verify(c) => commands::verify(c),
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Path(c) => commands::path(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Input(e) => eprintln!("error: {e:#}"),
                Failure::Unstable(m) => eprintln!("unstable: {m}"),
                Failure::Gap(m) => eprintln!("verification failed: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
