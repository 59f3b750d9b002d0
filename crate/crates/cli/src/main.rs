//! `snowball-ns`: run, resume and trace snowballing nested sampling.

mod manifest;
mod rundir;
mod trace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Why a command stopped early. Maps onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, bad configuration or an unusable output directory.
    Usage(anyhow::Error),
    /// The sampler gave up in the middle of an outer iteration.
    Aborted(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

pub type CmdResult = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "snowball-ns", version, about = "Snowballing nested sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a new run in an output directory.
    Run(RunArgs),
    /// Continue a run from its checkpoint for more outer iterations.
    Resume(ResumeArgs),
    /// Print ln Z per outer iteration with a fit of a + b/(M K).
    Trace(TraceArgs),
}

fn positive() -> clap::builder::RangedU64ValueParser<usize> {
    clap::builder::RangedU64ValueParser::new().range(1..)
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Problem name: rosenbrock, gaussian or constant.
    #[arg(long)]
    pub problem: String,
    #[arg(long, value_parser = positive())]
    pub dim: usize,
    /// Live points in the first outer iteration (at least 2).
    #[arg(long, default_value_t = 20, value_parser = positive())]
    pub k0: usize,
    /// Live points added per outer iteration.
    #[arg(long = "k-inc", default_value_t = 20, value_parser = positive())]
    pub k_inc: usize,
    /// Metropolis steps per constrained draw.
    #[arg(long, default_value_t = 20, value_parser = positive())]
    pub steps: usize,
    #[arg(long = "term-eps", default_value_t = 1e-6)]
    pub term_eps: f64,
    /// Number of outer iterations.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub iters: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Gaussian width.
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    /// Log-likelihood of the constant problem.
    #[arg(
        long = "const-logl",
        default_value_t = 0.0,
        allow_negative_numbers = true
    )]
    pub const_logl: f64,
    /// Lower edge of the box prior in every dimension.
    #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub hi: f64,
    /// Record wall-clock seconds in each report (outputs are then no longer
    /// reproducible byte for byte).
    #[arg(long)]
    pub timing: bool,
    /// Disable reuse of constrained draws across outer iterations.
    #[arg(long = "no-memo")]
    pub no_memo: bool,
}

#[derive(Args, Debug)]
pub struct ResumeArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Additional outer iterations.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub iters: u64,
    /// The remaining flags are optional; if given they must match the run.
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long, value_parser = positive())]
    pub dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = positive())]
    pub k0: Option<usize>,
    #[arg(long = "k-inc", value_parser = positive())]
    pub k_inc: Option<usize>,
    #[arg(long, value_parser = positive())]
    pub steps: Option<usize>,
    #[arg(long = "term-eps")]
    pub term_eps: Option<f64>,
    #[arg(long)]
    pub timing: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Format {
    Csv,
    Table,
}

#[derive(Args, Debug)]
pub struct TraceArgs {
    /// A reports.jsonl file or the run directory holding it.
    pub input: PathBuf,
    /// Steps per draw used in the fit; read from the manifest if omitted.
    #[arg(long, value_parser = positive())]
    pub steps: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SNOWBALL_NS_LOG", "warn"))
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(a) => rundir::cmd_run(&a),
        Command::Resume(a) => rundir::cmd_resume(&a),
        Command::Trace(a) => trace::cmd_trace(&a, &mut std::io::stdout().lock()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Aborted(e)) => {
            eprintln!("aborted: {e:#}");
            ExitCode::from(2)
        }
    }
}
