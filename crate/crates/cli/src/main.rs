use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod error;
mod output;

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "fracvol", version, about = "Constrained fractional stochastic volatility engine")]
struct Cli {
    /// Worker threads for path-parallel work (default: all cores).
    #[arg(long, global = true, env = "THREADS")]
    threads: Option<NonZeroUsize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample fBm paths and compare their covariance with the exact one.
    Fbm(FbmArgs),
    /// Check the boundary conditions of a scenario on its polyhedron.
    CheckViability(CheckArgs),
    /// Simulate U, V and S paths of a scenario.
    Simulate(SimulateArgs),
    /// Price a European claim at t = 0.
    Price(PriceArgs),
    /// Rerun the two-dimensional reference experiment end to end.
    Reproduce(ReproduceArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Method {
    Woodchan,
    Cholesky,
}

#[derive(Args, Debug)]
pub(crate) struct FbmArgs {
    #[arg(long)]
    pub(crate) hurst: f64,
    #[arg(long, default_value_t = 256)]
    pub(crate) steps: usize,
    #[arg(long, default_value_t = 1)]
    pub(crate) paths: usize,
    #[arg(long, default_value_t = 0)]
    pub(crate) seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub(crate) horizon: f64,
    #[arg(long, default_value_t = 1)]
    pub(crate) dims: usize,
    #[arg(long, value_enum, default_value_t = Method::Woodchan)]
    pub(crate) method: Method,
    /// Output directory for path_NNNN.csv and summary.csv.
    #[arg(long)]
    pub(crate) out: PathBuf,
    /// Paths used for the covariance summary.
    #[arg(long, default_value_t = 2000)]
    pub(crate) summary_paths: usize,
    /// Grid times compared in the summary.
    #[arg(long, default_value_t = 8)]
    pub(crate) summary_points: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Mode {
    Cone,
    Hyperplane,
}

#[derive(Args, Debug)]
pub(crate) struct CheckArgs {
    pub(crate) scenario: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Cone)]
    pub(crate) mode: Mode,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub(crate) json: bool,
    #[arg(long, default_value_t = 256)]
    pub(crate) samples: usize,
    /// Half-width of the sampling box.
    #[arg(long, default_value_t = fracvol::scenario::DEFAULT_CHECK_RADIUS)]
    pub(crate) box_radius: f64,
    /// Check a single level instead of the representative levels of the law.
    #[arg(long)]
    pub(crate) xi: Option<f64>,
    #[arg(long, default_value_t = fracvol::viability::DEFAULT_TOLERANCE)]
    pub(crate) tol: f64,
}

#[derive(Args, Debug)]
pub(crate) struct SimulateArgs {
    pub(crate) scenario: PathBuf,
    #[arg(long)]
    pub(crate) out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub(crate) paths: usize,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub(crate) seed: Option<u64>,
    /// Overrides the number of grid steps.
    #[arg(long)]
    pub(crate) steps: Option<usize>,
    /// Project the Euler state onto K(xi) after every step.
    #[arg(long)]
    pub(crate) project: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum PayoffKind {
    Call,
    Put,
    Bond,
    Asset,
    Basket,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum EstimatorArg {
    Physical,
    RiskNeutral,
}

#[derive(Args, Debug)]
pub(crate) struct PriceArgs {
    pub(crate) scenario: PathBuf,
    #[arg(long, value_enum, default_value_t = PayoffKind::Call)]
    pub(crate) payoff: PayoffKind,
    /// Asset index (0-based).
    #[arg(long, default_value_t = 0)]
    pub(crate) asset: usize,
    /// Strike; defaults to the initial price (or basket value).
    #[arg(long)]
    pub(crate) strike: Option<f64>,
    /// Basket weights, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub(crate) weights: Vec<f64>,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Physical)]
    pub(crate) estimator: EstimatorArg,
    /// Run both estimators on common random numbers and report their z-score.
    #[arg(long)]
    pub(crate) both: bool,
    #[arg(long, default_value_t = 10_000)]
    pub(crate) paths: usize,
    #[arg(long)]
    pub(crate) seed: Option<u64>,
    #[arg(long)]
    pub(crate) steps: Option<usize>,
    /// Run the plain Euler scheme without projecting onto K(xi).
    #[arg(long)]
    pub(crate) no_project: bool,
    #[arg(long, default_value_t = fracvol::pricing::MAX_BREACH_RATE)]
    pub(crate) max_breach_rate: f64,
}

#[derive(Args, Debug)]
pub(crate) struct ReproduceArgs {
    #[arg(long, default_value_t = 0)]
    pub(crate) seed: u64,
    #[arg(long)]
    pub(crate) out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub(crate) paths: usize,
    #[arg(long, default_value_t = fracvol::scenario::DEFAULT_STEPS)]
    pub(crate) steps: usize,
    #[arg(long, default_value_t = fracvol::scenario::DEFAULT_RATE)]
    pub(crate) rate: f64,
    #[arg(long)]
    pub(crate) project: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.get())
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fbm(a) => commands::fbm(a),
        Command::CheckViability(a) => commands::check_viability(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Price(a) => commands::price(a),
        Command::Reproduce(a) => commands::reproduce(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
