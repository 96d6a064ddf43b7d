//! Command-line interface: solve runs, stepsize reports, speedup studies,
//! partition detection, and self-verification.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 non-convergence
//! (or failed verification) within the given budget.

use crate::analysis::{self, omega_tilde_from_v, practical_speedup, speedup_tau_nice};
use crate::eso::{
    eso_lhs_by_enumeration, eso_rhs, exact_eso_lhs, importance_probs, v_for_scheme, v_serial,
    v_tau_nice, EsoParams,
};
use crate::io::{
    load_libsvm, read_partition, write_partition, write_trace_csv, LoadedDataset,
};
use crate::loss::{LossKind, LossModel, Regularizer};
use crate::matrix::DataMatrix;
use crate::problem::ProblemInstance;
use crate::sampling::{balance_partition, detect_product_partition, SamplingScheme};
use crate::solver::{
    option1_closed_form, option1_numeric, DualOption, SolveOutcome, SolveStatus, Solver,
    SolverConfig,
};
use crate::synth::{synth_instance, OmegaProfile};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Once;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    NonConvergence(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::NonConvergence(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::NonConvergence(m) => m,
        }
    }
}

macro_rules! data_err {
    ($($from:ty),*) => {$(
        impl From<$from> for CliError {
            fn from(e: $from) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_err!(
    crate::io::IoError,
    crate::matrix::MatrixError,
    crate::synth::SynthError,
    crate::sampling::SamplingError,
    crate::eso::EsoError,
    crate::loss::LossError,
    crate::problem::ProblemError,
    crate::analysis::AnalysisError,
    std::io::Error
);

impl From<crate::solver::SolverError> for CliError {
    fn from(e: crate::solver::SolverError) -> Self {
        match e {
            crate::solver::SolverError::BadConfig(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "quartz",
    version,
    about = "Stochastic primal-dual coordinate solver for L2-regularized ERM"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the solver and write a gap trace plus a JSON summary
    Solve(SolveArgs),
    /// Report overapproximation weights, stepsize and sparsity histogram
    Eso(EsoArgs),
    /// Sweep batch sizes or (nodes, batch) grids; theoretical and measured speedups
    Speedup(SpeedupArgs),
    /// Detect a feature-disjoint example partition and write it out
    DetectGroups(DetectGroupsArgs),
    /// Run the built-in property suites on small random instances
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossArg {
    SmoothedHinge,
    SquaredHinge,
}

impl From<LossArg> for LossKind {
    fn from(a: LossArg) -> Self {
        match a {
            LossArg::SmoothedHinge => LossKind::SmoothedHinge,
            LossArg::SquaredHinge => LossKind::SquaredHinge,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProfileArg {
    Uniform,
    FullySparse,
    FullyDense,
}

impl From<ProfileArg> for OmegaProfile {
    fn from(a: ProfileArg) -> Self {
        match a {
            ProfileArg::Uniform => OmegaProfile::Uniform,
            ProfileArg::FullySparse => OmegaProfile::FullySparse,
            ProfileArg::FullyDense => OmegaProfile::FullyDense,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SamplingArg {
    SerialUniform,
    SerialImportance,
    TauNice,
    Product,
    Distributed,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// LIBSVM dataset to load
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    /// Pin the feature count instead of inferring it from the data
    #[arg(long, value_name = "D")]
    features: Option<usize>,
    /// Generate a synthetic instance with this many examples
    #[arg(long, value_name = "N")]
    synth_n: Option<usize>,
    /// Feature count of the synthetic instance
    #[arg(long, value_name = "D")]
    synth_d: Option<usize>,
    /// Nonzero fraction per synthetic column
    #[arg(long, default_value_t = 0.1)]
    synth_density: f64,
    /// Row-sparsity regime of the synthetic instance
    #[arg(long, value_enum, default_value_t = ProfileArg::Uniform)]
    synth_profile: ProfileArg,
    /// Seed of the synthetic generator
    #[arg(long, default_value_t = 0)]
    synth_seed: u64,
}

impl DataArgs {
    fn load(&self, normalize: bool) -> Result<(DataMatrix, Option<String>), CliError> {
        match (&self.data, self.synth_n) {
            (Some(path), None) => {
                let LoadedDataset {
                    matrix, warnings, ..
                } = load_libsvm(path, normalize, self.features)?;
                for w in warnings {
                    eprintln!("warning: {w}");
                }
                Ok((matrix, Some(path.display().to_string())))
            }
            (None, Some(n)) => {
                let d = self.synth_d.ok_or_else(|| {
                    CliError::Usage("--synth-d is required with --synth-n".into())
                })?;
                let mut matrix = synth_instance(
                    n,
                    d,
                    self.synth_density,
                    self.synth_profile.into(),
                    self.synth_seed,
                )?;
                if normalize {
                    matrix.normalize_columns();
                }
                Ok((matrix, None))
            }
            (Some(_), Some(_)) => Err(CliError::Usage(
                "choose either --data or --synth-n, not both".into(),
            )),
            (None, None) => Err(CliError::Usage(
                "a dataset is required: pass --data or --synth-n/--synth-d".into(),
            )),
        }
    }
}

#[derive(Args, Debug)]
struct SamplingArgs {
    #[arg(long, value_enum, default_value_t = SamplingArg::SerialUniform)]
    sampling: SamplingArg,
    /// Batch size for tau-nice, or per-node batch for distributed
    #[arg(long)]
    tau: Option<usize>,
    /// Node count for distributed sampling
    #[arg(long, value_name = "C")]
    nodes: Option<usize>,
    /// Partition file (product groups or distributed cells)
    #[arg(long, value_name = "PATH")]
    partition: Option<PathBuf>,
}

impl SamplingArgs {
    fn check_consistency(&self) -> Result<(), CliError> {
        let usage = |msg: &str| Err(CliError::Usage(msg.into()));
        match self.sampling {
            SamplingArg::SerialUniform | SamplingArg::SerialImportance => {
                if self.tau.is_some() || self.nodes.is_some() || self.partition.is_some() {
                    return usage("--tau/--nodes/--partition do not apply to serial sampling");
                }
            }
            SamplingArg::TauNice => {
                if self.nodes.is_some() || self.partition.is_some() {
                    return usage("--nodes/--partition do not apply to tau-nice sampling");
                }
                if self.tau.is_none() {
                    return usage("tau-nice sampling needs --tau");
                }
            }
            SamplingArg::Product => {
                if self.tau.is_some() || self.nodes.is_some() {
                    return usage("--tau/--nodes do not apply to product sampling");
                }
            }
            SamplingArg::Distributed => {
                if self.nodes.is_none() || self.tau.is_none() {
                    return usage("distributed sampling needs --nodes and --tau");
                }
            }
        }
        Ok(())
    }

    fn build(
        &self,
        matrix: &DataMatrix,
        lambda: f64,
        gamma: f64,
    ) -> Result<SamplingScheme, CliError> {
        self.check_consistency()?;
        let n = matrix.n();
        let scheme = match self.sampling {
            SamplingArg::SerialUniform => SamplingScheme::serial_uniform(n)?,
            SamplingArg::SerialImportance => {
                let v = v_serial(matrix);
                SamplingScheme::serial(importance_probs(&v, lambda, gamma, n))?
            }
            SamplingArg::TauNice => SamplingScheme::tau_nice(n, self.tau.unwrap())?,
            SamplingArg::Product => {
                let groups = match &self.partition {
                    Some(path) => read_partition(path)?,
                    None => detect_product_partition(matrix).ok_or_else(|| {
                        CliError::Data(
                            "no feature-disjoint partition exists for this data; \
                             product sampling is not applicable"
                                .into(),
                        )
                    })?,
                };
                SamplingScheme::product(n, groups)?
            }
            SamplingArg::Distributed => {
                let cells = match &self.partition {
                    Some(path) => Some(read_partition(path)?),
                    None => None,
                };
                SamplingScheme::distributed(n, self.nodes.unwrap(), self.tau.unwrap(), cells)?
            }
        };
        Ok(scheme)
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long, value_enum, default_value_t = LossArg::SmoothedHinge)]
    loss: LossArg,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Regularization weight; defaults to 1/n
    #[arg(long)]
    lambda: Option<f64>,
    /// Rescale every column to unit norm after loading
    #[arg(long)]
    normalize: bool,
    /// Dual update rule (1 = model maximization, 2 = convex combination)
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    option: u8,
    /// Primal aggressiveness multiplier (beta * theta is clamped to 1)
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Target duality gap
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 200)]
    max_epochs: usize,
    /// Iterations between gap checks (default: one epoch)
    #[arg(long)]
    gap_check_every: Option<usize>,
    /// Seeds, one independent run each
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    /// Gap trace CSV path (seed-suffixed when several seeds run)
    #[arg(long, value_name = "PATH")]
    trace_out: Option<PathBuf>,
    /// JSON summary path
    #[arg(long, value_name = "PATH")]
    summary_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EsoArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    normalize: bool,
    /// Output JSON path (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SpeedupArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = LossArg::SmoothedHinge)]
    loss: LossArg,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long)]
    lambda: Option<f64>,
    /// Speedup studies assume unit column norms; pass this to skip rescaling
    #[arg(long)]
    no_normalize: bool,
    /// Batch sizes to sweep with tau-nice sampling
    #[arg(long, value_delimiter = ',', value_name = "TAUS")]
    tau_list: Option<Vec<usize>>,
    /// Measure practical speedups by running the solver
    #[arg(long)]
    practical: bool,
    /// Number of seeded runs per configuration (medians are reported)
    #[arg(long, default_value_t = 5)]
    num_seeds: usize,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 2000)]
    max_epochs: usize,
    /// Emit a (nodes, tau) grid of distributed iteration factors instead
    #[arg(long)]
    contour: bool,
    /// Points per axis of the contour grid (log-spaced)
    #[arg(long, default_value_t = 8)]
    grid_resolution: usize,
    /// Output CSV path (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Optional JSON report bundle
    #[arg(long, value_name = "PATH")]
    json_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DetectGroupsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Merge detected components into this many balanced groups
    #[arg(long, value_name = "K")]
    balance: Option<usize>,
    /// Partition file to write
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 12345)]
    seed: u64,
}

fn init_thread_pool() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        if let Ok(value) = std::env::var("QUARTZ_THREADS") {
            if let Ok(threads) = value.parse::<usize>() {
                if threads > 0 {
                    let _ = rayon::ThreadPoolBuilder::new()
                        .num_threads(threads)
                        .build_global();
                }
            }
        }
    });
}

/// Entry point used by the binary.
pub fn run() -> i32 {
    run_with_args(std::env::args())
}

/// Parses and executes; returns the process exit code.
pub fn run_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    init_thread_pool();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Eso(args) => cmd_eso(args),
        Command::Speedup(args) => cmd_speedup(args),
        Command::DetectGroups(args) => cmd_detect_groups(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn default_lambda(n: usize) -> f64 {
    1.0 / n as f64
}

fn with_seed_suffix(path: &Path, seed: u64, multiple: bool) -> PathBuf {
    if !multiple {
        return path.to_path_buf();
    }
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    let ext = path.extension().map(|e| e.to_string_lossy().to_string());
    let name = match ext {
        Some(ext) => format!("{stem}-seed{seed}.{ext}"),
        None => format!("{stem}-seed{seed}"),
    };
    path.with_file_name(name)
}

fn v_stats(v: &[f64]) -> serde_json::Value {
    let min = v.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let max = v.iter().fold(0.0_f64, |a, &b| a.max(b));
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    json!({ "min": min, "max": max, "mean": mean })
}

fn outcome_json(seed: u64, out: &SolveOutcome) -> serde_json::Value {
    json!({
        "seed": seed,
        "status": out.status,
        "iterations": out.iterations,
        "epochs": out.trace.last().map(|r| r.epoch).unwrap_or(0.0),
        "final_gap": out.final_gap(),
        "theta": out.theta,
        "step_weight": out.step_weight,
        "v_stats": v_stats(&out.eso.v),
        "wall_ms": out.wall.as_secs_f64() * 1e3,
        "warnings": out.warnings,
    })
}

fn cmd_solve(args: SolveArgs) -> Result<(), CliError> {
    if args.seeds.is_empty() {
        return Err(CliError::Usage("at least one seed is required".into()));
    }
    let (matrix, data_path) = args.data.load(args.normalize)?;
    let n = matrix.n();
    let lambda = args.lambda.unwrap_or_else(|| default_lambda(n));
    let loss = LossModel::new(args.loss.into(), args.gamma)?;
    let scheme = args.sampling.build(&matrix, lambda, args.gamma)?;
    let problem = ProblemInstance::new(matrix, loss, Regularizer::L2, lambda)?;
    let option = if args.option == 1 {
        DualOption::OptionI
    } else {
        DualOption::OptionII
    };
    let mut config = SolverConfig::new(scheme.clone())
        .with_option(option)
        .with_beta(args.beta)
        .with_epsilon(args.epsilon)
        .with_max_epochs(args.max_epochs);
    config.gap_check_every = args.gap_check_every;

    let outcomes: Vec<(u64, Result<SolveOutcome, CliError>)> = args
        .seeds
        .par_iter()
        .map(|&seed| {
            let cfg = config.clone().with_seed(seed);
            let run = Solver::new(&problem, cfg)
                .map(|s| s.solve())
                .map_err(CliError::from);
            (seed, run)
        })
        .collect();

    let multiple = args.seeds.len() > 1;
    let mut runs = Vec::new();
    let mut worst: Option<CliError> = None;
    for (seed, result) in outcomes {
        let out = result?;
        for w in &out.warnings {
            eprintln!("warning: {w}");
        }
        if let Some(path) = &args.trace_out {
            write_trace_csv(&out.trace, &with_seed_suffix(path, seed, multiple))?;
        }
        println!(
            "seed {seed}: {} after {} iterations ({:.2} epochs), gap {:.3e}, theta {:.3e}",
            match &out.status {
                SolveStatus::Converged => "converged".to_string(),
                SolveStatus::BudgetExhausted => "budget exhausted".to_string(),
                SolveStatus::Aborted(d) => format!("aborted ({d})"),
            },
            out.iterations,
            out.trace.last().map(|r| r.epoch).unwrap_or(0.0),
            out.final_gap(),
            out.theta,
        );
        match &out.status {
            SolveStatus::Converged => {}
            SolveStatus::BudgetExhausted => {
                worst.get_or_insert(CliError::NonConvergence(format!(
                    "seed {seed} did not reach gap {} within {} epochs",
                    args.epsilon, args.max_epochs
                )));
            }
            SolveStatus::Aborted(d) => {
                worst = Some(CliError::NonConvergence(format!("seed {seed} aborted: {d}")));
            }
        }
        runs.push(outcome_json(seed, &out));
    }
    if let Some(path) = &args.summary_out {
        let summary = json!({
            "config": {
                "data": data_path,
                "synthetic": data_path.is_none(),
                "normalize": args.normalize,
                "loss": problem.loss,
                "lambda": lambda,
                "sampling": scheme.descriptor(),
                "option": option,
                "beta": args.beta,
                "epsilon": args.epsilon,
                "max_epochs": args.max_epochs,
                "gap_check_every": args.gap_check_every,
                "seeds": args.seeds,
            },
            "n": problem.n(),
            "d": problem.d(),
            "runs": runs,
        });
        std::fs::write(path, serde_json::to_string_pretty(&summary).unwrap())?;
    }
    match worst {
        Some(err) => Err(err),
        None => Ok(()),
    }
}

fn cmd_eso(args: EsoArgs) -> Result<(), CliError> {
    let (matrix, data_path) = args.data.load(args.normalize)?;
    let n = matrix.n();
    let lambda = args.lambda.unwrap_or_else(|| default_lambda(n));
    let scheme = args.sampling.build(&matrix, lambda, args.gamma)?;
    let eso = EsoParams::compute(&matrix, &scheme, lambda, args.gamma)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let mut histogram: BTreeMap<u32, usize> = BTreeMap::new();
    for &omega in matrix.row_nnz_counts() {
        *histogram.entry(omega).or_insert(0) += 1;
    }
    let report = json!({
        "config": {
            "data": data_path,
            "normalize": args.normalize,
            "lambda": lambda,
            "gamma": args.gamma,
            "sampling": scheme.descriptor(),
        },
        "n": matrix.n(),
        "d": matrix.d(),
        "density": matrix.density(),
        "theta": eso.theta,
        "lambda_gamma_n": eso.lambda_gamma_n,
        "v": eso.v,
        "v_stats": v_stats(&eso.v),
        "omega_histogram": histogram
            .iter()
            .map(|(&omega, &count)| json!([omega, count]))
            .collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&report).unwrap();
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run_traces(
    problem: &ProblemInstance,
    scheme: &SamplingScheme,
    epsilon: f64,
    max_epochs: usize,
    seeds: &[u64],
) -> Result<Vec<SolveOutcome>, CliError> {
    let config = SolverConfig::new(scheme.clone())
        .with_epsilon(epsilon)
        .with_max_epochs(max_epochs);
    let outcomes: Vec<Result<SolveOutcome, CliError>> = seeds
        .par_iter()
        .map(|&seed| {
            let solver = Solver::new(problem, config.clone().with_seed(seed))?;
            let out = solver.solve();
            if out.status != SolveStatus::Converged {
                return Err(CliError::NonConvergence(format!(
                    "{} run with seed {seed} stalled at gap {:.3e} (target {epsilon:.3e})",
                    scheme.descriptor().variant,
                    out.final_gap(),
                )));
            }
            Ok(out)
        })
        .collect();
    outcomes.into_iter().collect()
}

fn cmd_speedup(args: SpeedupArgs) -> Result<(), CliError> {
    let (matrix, data_path) = args.data.load(!args.no_normalize)?;
    let n = matrix.n();
    let lambda = args.lambda.unwrap_or_else(|| default_lambda(n));
    let gamma = args.gamma;
    let mut csv = String::new();
    let mut bundle_rows = Vec::new();

    if args.contour {
        let max_v = |v: &[f64]| v.iter().fold(0.0_f64, |a, &b| a.max(b));
        let t_serial = analysis::t_distributed(n, 1, 1, max_v(&v_serial(&matrix)), lambda, gamma);
        csv.push_str("c,tau,t_ctau,speedup\n");
        for c in log_spaced_divisors(n, args.grid_resolution) {
            let cell = n / c;
            for tau in log_spaced(cell, args.grid_resolution) {
                let cells: Vec<Vec<usize>> = (0..c)
                    .map(|l| (l * cell..(l + 1) * cell).collect())
                    .collect();
                let v = crate::eso::v_distributed(&matrix, c, tau, &cells)
                    .map_err(|e| CliError::Data(e.to_string()))?;
                let t = analysis::t_distributed(n, c, tau, max_v(&v), lambda, gamma);
                let speedup = t_serial / t;
                csv.push_str(&format!("{c},{tau},{t},{speedup}\n"));
                bundle_rows.push(json!({"c": c, "tau": tau, "t_ctau": t, "speedup": speedup}));
            }
        }
    } else {
        let tau_list = args
            .tau_list
            .clone()
            .ok_or_else(|| CliError::Usage("pass --tau-list or --contour".into()))?;
        if tau_list.iter().any(|&tau| tau == 0 || tau > n) {
            return Err(CliError::Usage(format!(
                "batch sizes must lie in 1..={n}"
            )));
        }
        let loss = LossModel::new(args.loss.into(), gamma)?;
        let problem = ProblemInstance::new(matrix, loss, Regularizer::L2, lambda)?;
        let vs = v_serial(&problem.matrix);
        let seeds: Vec<u64> = (1..=args.num_seeds as u64).collect();
        let serial_runs = if args.practical {
            let scheme = SamplingScheme::serial_uniform(n)?;
            Some(run_traces(&problem, &scheme, args.epsilon, args.max_epochs, &seeds)?)
        } else {
            None
        };
        csv.push_str("tau,theoretical,practical\n");
        for &tau in &tau_list {
            let theoretical = if tau == 1 {
                1.0
            } else {
                let vt = v_tau_nice(&problem.matrix, tau)
                    .map_err(|e| CliError::Data(e.to_string()))?;
                let omega_tilde = omega_tilde_from_v(&vs, &vt, n, tau)?;
                speedup_tau_nice(n, lambda, gamma, omega_tilde.clamp(1.0, n as f64), tau)?
            };
            let practical = match &serial_runs {
                Some(serial) => {
                    let scheme = SamplingScheme::tau_nice(n, tau)?;
                    let runs =
                        run_traces(&problem, &scheme, args.epsilon, args.max_epochs, &seeds)?;
                    let serial_traces: Vec<&[_]> =
                        serial.iter().map(|o| o.trace.as_slice()).collect();
                    let scheme_traces: Vec<&[_]> =
                        runs.iter().map(|o| o.trace.as_slice()).collect();
                    Some(practical_speedup(&serial_traces, &scheme_traces, args.epsilon)?)
                }
                None => None,
            };
            match practical {
                Some(p) => csv.push_str(&format!("{tau},{theoretical},{p}\n")),
                None => csv.push_str(&format!("{tau},{theoretical},\n")),
            }
            bundle_rows.push(json!({
                "tau": tau,
                "theoretical": theoretical,
                "practical": practical,
            }));
        }
    }

    match &args.out {
        Some(path) => std::fs::write(path, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(path) = &args.json_out {
        let bundle = json!({
            "config": {
                "data": data_path,
                "normalize": !args.no_normalize,
                "lambda": lambda,
                "gamma": gamma,
                "epsilon": args.epsilon,
                "num_seeds": args.num_seeds,
                "practical": args.practical,
                "contour": args.contour,
            },
            "rows": bundle_rows,
        });
        std::fs::write(path, serde_json::to_string_pretty(&bundle).unwrap())?;
    }
    Ok(())
}

fn log_spaced(max: usize, points: usize) -> Vec<usize> {
    let mut values = Vec::new();
    if max == 0 {
        return values;
    }
    for k in 0..points.max(1) {
        let f = if points <= 1 {
            1.0
        } else {
            (max as f64).powf(k as f64 / (points - 1) as f64)
        };
        let v = (f.round() as usize).clamp(1, max);
        if values.last() != Some(&v) {
            values.push(v);
        }
    }
    values
}

fn log_spaced_divisors(n: usize, points: usize) -> Vec<usize> {
    let divisors: Vec<usize> = (1..=n).filter(|&c| n.is_multiple_of(c)).collect();
    let mut out = Vec::new();
    for target in log_spaced(n, points) {
        let best = *divisors
            .iter()
            .min_by_key(|&&d| {
                let ratio = (d as f64 / target as f64).ln().abs();
                (ratio * 1e9) as u64
            })
            .unwrap();
        if out.last() != Some(&best) {
            out.push(best);
        }
    }
    out
}

fn cmd_detect_groups(args: DetectGroupsArgs) -> Result<(), CliError> {
    let (matrix, _) = args.data.load(false)?;
    let groups = detect_product_partition(&matrix).ok_or_else(|| {
        CliError::Data("the example-feature graph is connected; no partition exists".into())
    })?;
    let groups = match args.balance {
        Some(k) => balance_partition(groups, k),
        None => groups,
    };
    write_partition(&groups, &args.out)?;
    println!(
        "wrote {} groups (sizes: {:?}) to {}",
        groups.len(),
        groups.iter().map(Vec::len).collect::<Vec<_>>(),
        args.out.display()
    );
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<(), CliError> {
    let mut all_ok = true;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{}: {name} {detail}", if ok { "PASS" } else { "FAIL" });
        all_ok &= ok;
    };

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);

    // separable overapproximation certificates on random instances
    let mut worst_slack = f64::NEG_INFINITY;
    let mut worst_mismatch = 0.0_f64;
    for _ in 0..30 {
        let n = rng.random_range(4..9);
        let d = rng.random_range(2..7);
        let density = rng.random_range(0.2..1.0);
        let matrix = synth_instance(n, d, density, OmegaProfile::Uniform, rng.random())
            .map_err(|e| CliError::Data(e.to_string()))?;
        let mut schemes = vec![
            SamplingScheme::serial_uniform(n)?,
            SamplingScheme::tau_nice(n, 2)?,
            SamplingScheme::tau_nice(n, n)?,
        ];
        if n % 2 == 0 {
            schemes.push(SamplingScheme::distributed(n, 2, 1, None)?);
            schemes.push(SamplingScheme::distributed(n, 2, 2, None)?);
        }
        if let Some(groups) = detect_product_partition(&matrix) {
            schemes.push(SamplingScheme::product(n, groups)?);
        }
        for scheme in &schemes {
            let v = v_for_scheme(&matrix, scheme).map_err(|e| CliError::Data(e.to_string()))?;
            let probs = scheme.inclusion_probs();
            for _ in 0..10 {
                let h: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let lhs = exact_eso_lhs(&matrix, scheme, &h);
                let rhs = eso_rhs(&probs, &v, &h);
                worst_slack = worst_slack.max(lhs - rhs);
                let enumerated = eso_lhs_by_enumeration(&matrix, scheme, &h)
                    .map_err(|e| CliError::Data(e.to_string()))?;
                worst_mismatch =
                    worst_mismatch.max((lhs - enumerated).abs() / enumerated.abs().max(1.0));
            }
        }
    }
    check(
        "overapproximation inequality",
        worst_slack <= 1e-10,
        format!("(worst slack {worst_slack:.2e})"),
    );
    check(
        "pairwise-probability vs enumeration",
        worst_mismatch <= 1e-12,
        format!("(worst relative mismatch {worst_mismatch:.2e})"),
    );

    // closed-form dual updates against the numeric maximizer
    let mut worst_gap = 0.0_f64;
    for kind in [LossKind::SmoothedHinge, LossKind::SquaredHinge] {
        for _ in 0..2000 {
            let loss = LossModel::new(kind, rng.random_range(0.25..4.0)).unwrap();
            let (lo, hi) = loss.dual_box();
            let alpha = rng.random_range(lo..hi.min(2.0));
            let abar_dot = rng.random_range(-3.0..3.0);
            let v = rng.random_range(0.0..10.0);
            let cf = option1_closed_form(&loss, alpha, abar_dot, v, 1.0, 1);
            let num = option1_numeric(&loss, alpha, abar_dot, v, 1.0, 1);
            worst_gap = worst_gap.max((cf - num).abs());
        }
    }
    check(
        "closed-form dual update",
        worst_gap < 1e-8,
        format!("(worst deviation {worst_gap:.2e})"),
    );

    // expected geometric contraction of the duality gap
    let matrix = synth_instance(30, 12, 0.4, OmegaProfile::Uniform, 7)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let loss = LossModel::smoothed_hinge(1.0).unwrap();
    let lambda = 1.0 / (30.0_f64).sqrt();
    let problem = ProblemInstance::new(matrix, loss, Regularizer::L2, lambda)?;
    let scheme = SamplingScheme::serial_uniform(30)?;
    let n = 30usize;
    let checkpoints = [n, 2 * n, 4 * n];
    let mut sums = [0.0_f64; 3];
    let mut theta = 0.0;
    let mut gap0 = 0.0;
    for seed in 0..100u64 {
        let config = SolverConfig::new(scheme.clone())
            .with_epsilon(1e-14)
            .with_max_epochs(4)
            .with_gap_check_every(n)
            .with_seed(seed);
        let solver = Solver::new(&problem, config)?;
        let out = solver.solve();
        theta = out.theta;
        gap0 = out.trace[0].gap;
        for (slot, &t) in checkpoints.iter().enumerate() {
            let rec = out
                .trace
                .iter()
                .find(|r| r.iteration == t)
                .expect("checkpoint recorded");
            sums[slot] += rec.gap;
        }
    }
    let mut contraction_ok = true;
    let mut detail = String::new();
    for (slot, &t) in checkpoints.iter().enumerate() {
        let mean = sums[slot] / 100.0;
        let bound = 1.1 * (1.0 - theta).powi(t as i32) * gap0;
        detail.push_str(&format!(" t={t}: {mean:.3e} <= {bound:.3e};"));
        contraction_ok &= mean <= bound;
    }
    check("expected gap contraction", contraction_ok, detail);

    if all_ok {
        Ok(())
    } else {
        Err(CliError::NonConvergence(
            "one or more verification suites failed".into(),
        ))
    }
}
