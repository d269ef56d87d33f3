//! `ntk`: sparse recovery experiments from the command line.
//!
//! Exit codes: 0 success, 1 bad arguments or contract violation, 2 a
//! verification suite failed, 3 I/O or file-format error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use ntk_core::exec::Execution;
use ntk_core::harness::{
    criterion_for_noise, default_betas, render_report, run_trial, runtime_sweep, success_sweep, write_svg, Algorithm,
    RuntimeSweep, SuccessSweep, SweepResult,
};
use ntk_core::model::{gen_instance, load_instance, save_instance, write_index_value_csv};
use ntk_core::regularizers::RegularizerKind;
use ntk_core::solver::{AlphaPolicy, InnerIterations, SolverConfig};
use ntk_core::verify::{run_suite, Suite};
use ntk_core::NtkError;

const EXIT_CONTRACT: u8 = 1;
const EXIT_VERIFY: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "ntk",
    version,
    about = "Natural thresholding and baseline sparse recovery experiments",
    after_help = "Environment:\n  NTK_THREADS  worker threads for sweeps (positive integer; 1 runs sequentially)\n\n\
Exit codes: 0 ok, 1 bad arguments, 2 verification failure, 3 I/O error"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a Gaussian instance and write A.ntkm, y.csv and x.csv into a directory
    Gen(GenArgs),
    /// Run one algorithm on one instance and print a summary line
    Run(RunArgs),
    /// Success rate against sparsity, one CSV row per (algorithm, k)
    Sweep(SweepArgs),
    /// Mean wall time per recovery over signal lengths and k/m ratios
    Runtime(RuntimeArgs),
    /// Run a brute-force oracle suite; exits 2 if any check fails
    Verify(VerifyArgs),
    /// Render a sweep CSV as an SVG success-rate chart
    Plot(PlotArgs),
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// Regularization parameter, or `auto` for the per-iteration concavity threshold
    #[arg(long, default_value = "5", value_parser = parse_alpha)]
    alpha: AlphaPolicy,
    /// Gradient steplength
    #[arg(long, default_value_t = 2.0)]
    lambda: f64,
    /// Linearizations per outer iteration for ntq/ntpq: a positive integer or `inf`
    #[arg(long, default_value = "5", value_parser = parse_q)]
    q: InnerIterations,
    /// Regularizer: quad, log, rational or wquad
    #[arg(long, default_value = "wquad")]
    regularizer: RegularizerKind,
    /// Outer iteration budget
    #[arg(long, default_value_t = 150)]
    max_iter: usize,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            steplength: self.lambda,
            alpha_policy: self.alpha,
            inner_iterations: self.q,
            max_outer_iterations: self.max_iter,
            regularizer: self.regularizer,
            ..SolverConfig::benchmark()
        }
    }
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 100)]
    m: usize,
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long)]
    k: usize,
    /// Noise level: y = Ax + noise·v with v a unit Gaussian direction
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Algorithm token: nt, ntp, ntq, ntpq, iht, htp, omp, sp or cosamp
    #[arg(long)]
    algo: Algorithm,
    #[arg(long, default_value_t = 100)]
    m: usize,
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Read the instance from a directory written by `gen` instead of generating one
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Also print wall time
    #[arg(long)]
    timing: bool,
    /// Write the recovered signal as an index,value CSV
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Comma-separated algorithm tokens
    #[arg(long, default_value = "ntp")]
    algos: String,
    #[arg(long, default_value_t = 100)]
    m: usize,
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    k_min: usize,
    #[arg(long, default_value_t = 60)]
    k_max: usize,
    #[arg(long, default_value_t = 5)]
    k_step: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fill mean_time_ms (the CSV is then no longer reproducible byte for byte)
    #[arg(long)]
    timing: bool,
    /// Output CSV
    #[arg(long)]
    out: PathBuf,
    /// Also write an SVG chart
    #[arg(long)]
    svg: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct RuntimeArgs {
    #[arg(long, default_value = "ntp")]
    algos: String,
    #[arg(long, default_value_t = 100)]
    m: usize,
    /// Comma-separated signal lengths
    #[arg(long, default_value = "400,800")]
    n_list: String,
    /// Comma-separated k/m ratios; default 0.05,0.07,...,0.15
    #[arg(long)]
    betas: Option<String>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// lp, ot, grad, ric or path
    #[arg(long)]
    suite: Suite,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the check report to a file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Sweep CSV
    #[arg(long = "in")]
    input: PathBuf,
    /// Output SVG
    #[arg(long)]
    out: PathBuf,
}

fn parse_alpha(s: &str) -> Result<AlphaPolicy, String> {
    if s == "auto" {
        return Ok(AlphaPolicy::Rayleigh(1.0));
    }
    match s.parse::<f64>() {
        Ok(a) if a.is_finite() && a > 0.0 => Ok(AlphaPolicy::Fixed(a)),
        _ => Err(format!("expected a positive number or `auto`, got {s:?}")),
    }
}

fn parse_q(s: &str) -> Result<InnerIterations, String> {
    if s == "inf" {
        return Ok(InnerIterations::Unbounded);
    }
    match s.parse::<usize>() {
        Ok(q) if q > 0 => Ok(InnerIterations::Finite(q)),
        _ => Err(format!("expected a positive integer or `inf`, got {s:?}")),
    }
}

fn parse_list<T: std::str::FromStr>(what: &str, s: &str) -> ntk_core::Result<Vec<T>> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| NtkError::Contract(format!("bad {what} entry {t:?}"))))
        .collect()
}

enum Failure {
    Error(NtkError),
    Verification,
}

impl From<NtkError> for Failure {
    fn from(e: NtkError) -> Self {
        Failure::Error(e)
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    let exec = Execution::from_env()?;
    match command {
        Command::Gen(a) => {
            let inst = gen_instance(a.m, a.n, a.k, a.noise, a.seed)?;
            save_instance(&inst, &a.out)?;
        }
        Command::Run(a) => {
            let cfg = a.solver.config();
            let inst = match &a.instance {
                Some(dir) => load_instance(dir, a.k)?,
                None => gen_instance(a.m, a.n, a.k, a.noise, a.seed)?,
            };
            let x = if inst.truth.is_some() {
                let rec = run_trial(a.algo, &inst, &cfg, criterion_for_noise(inst.noise_level))?;
                println!("{}", rec.summary_line(a.timing));
                a.out.as_ref().map(|_| a.algo.solve(&inst, &cfg)).transpose()?
            } else {
                let res = a.algo.solve(&inst, &cfg)?;
                println!(
                    "algorithm={} m={} n={} k={} iterations={} residual_norm={:e}",
                    a.algo,
                    inst.m(),
                    inst.n(),
                    inst.k,
                    res.iterations_used,
                    res.residual_history.last().copied().unwrap_or(f64::NAN)
                );
                Some(res)
            };
            if let (Some(path), Some(res)) = (&a.out, x) {
                write_index_value_csv(path, res.x_hat.iter().copied().enumerate().filter(|e| e.1 != 0.0))?;
            }
        }
        Command::Sweep(a) => {
            let sweep = SuccessSweep {
                algorithms: Algorithm::parse_list(&a.algos)?,
                m: a.m,
                n: a.n,
                k_min: a.k_min,
                k_max: a.k_max,
                k_step: a.k_step,
                trials: a.trials,
                noise_level: a.noise,
                master_seed: a.seed,
                timing: a.timing,
            };
            let res = success_sweep(&sweep, &a.solver.config(), exec)?;
            render_report(&res, &a.out, a.svg.as_deref())?;
        }
        Command::Runtime(a) => {
            let sweep = RuntimeSweep {
                algorithms: Algorithm::parse_list(&a.algos)?,
                m: a.m,
                n_list: parse_list("n", &a.n_list)?,
                betas: match &a.betas {
                    Some(b) => parse_list("beta", b)?,
                    None => default_betas(),
                },
                trials: a.trials,
                master_seed: a.seed,
            };
            let res = runtime_sweep(&sweep, &a.solver.config())?;
            render_report(&res, &a.out, None)?;
        }
        Command::Verify(a) => {
            let report = run_suite(a.suite, a.seed)?;
            let mut text = String::new();
            for c in &report.checks {
                text.push_str(&format!(
                    "{} {} {}: {}\n",
                    if c.passed { "PASS" } else { "FAIL" },
                    a.suite.token(),
                    c.name,
                    c.detail
                ));
            }
            print!("{text}");
            if let Some(path) = &a.out {
                std::fs::write(path, &text).map_err(|e| NtkError::Io {
                    path: path.clone(),
                    source: e,
                })?;
            }
            if !report.passed() {
                return Err(Failure::Verification);
            }
        }
        Command::Plot(a) => {
            let res = SweepResult::read_csv(&a.input)?;
            write_svg(&res, &a.out)?;
        }
    }
    Ok(())
}

fn run(argv: impl IntoIterator<Item = String>) -> u8 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_CONTRACT,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Verification) => {
            eprintln!("ntk: verification failed");
            EXIT_VERIFY
        }
        Err(Failure::Error(e)) => {
            eprintln!("ntk: {e}");
            match e {
                NtkError::Io { .. } | NtkError::Format { .. } => EXIT_IO,
                _ => EXIT_CONTRACT,
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    ExitCode::from(run(std::env::args()))
}
