use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qtomo_core::density::random_sparse_state_with_limit;
use qtomo_core::estimator::{estimate, psd_project, DEFAULT_HBAR};
use qtomo_core::measurement::{all_nonidentity_labels, sample_measurements};
use qtomo_core::norms::{auto_method, error_report};
use qtomo_core::{
    density::DEFAULT_RETRY_LIMIT, EigenMethod, LogBase, PauliLabel, SupportRule, ThresholdPolicy,
    ThresholdRule,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{QtomoError, Result};
use crate::formats::{load_record, load_state, read_input, save_record, save_state};
use crate::harness::{self, ExperimentConfig};

const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (formats: pauli-state v1, pauli-counts v1, mse-csv v1)"
);

/// Sparse Pauli-basis quantum state tomography.
///
/// Exit codes: 0 success, 2 invalid input, 3 state generation gave up,
/// 4 eigensolver did not converge.
#[derive(Debug, Parser)]
#[command(name = "qtomo", version = VERSION)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random sparse density matrix.
    GenState(GenStateArgs),
    /// Simulate Pauli measurement counts for a state.
    Measure(MeasureArgs),
    /// Threshold the averaged outcomes of a counts file.
    Estimate(EstimateArgs),
    /// Compare two states in spectral, Frobenius and Schatten norms.
    Eval(EvalArgs),
    /// Project a state onto the nearest density matrix.
    Project(ProjectArgs),
    /// Run a replicated experiment and write tables.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenStateArgs {
    #[arg(long)]
    pub qubits: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of nonzero coefficients [default: ⌊6 ln d⌋].
    #[arg(long)]
    pub support: Option<u64>,
    #[arg(long, default_value_t = 0.2)]
    pub amplitude: f64,
    #[arg(long, default_value_t = DEFAULT_RETRY_LIMIT)]
    pub retry_limit: u32,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long)]
    pub shots: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated labels to measure [default: all non-identity].
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub record: PathBuf,
    #[arg(long, default_value = "hard")]
    pub rule: String,
    /// universal, individual, or fixed:<value>.
    #[arg(long, default_value = "universal")]
    pub policy: String,
    #[arg(long, default_value_t = DEFAULT_HBAR)]
    pub hbar: f64,
    #[arg(long, default_value = "ten")]
    pub log_base: String,
    /// Project the estimate onto the density matrices.
    #[arg(long)]
    pub project: bool,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub estimate: PathBuf,
    /// Schatten orders, e.g. `1,2,inf`.
    #[arg(long, value_delimiter = ',')]
    pub schatten: Vec<String>,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    pub method: MethodArg,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// key=value experiment description.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Worker threads [default: available cores]. Does not affect results.
    #[arg(long)]
    pub workers: Option<usize>,
}

fn invalid(msg: impl Into<String>) -> QtomoError {
    QtomoError::Config(msg.into())
}

pub fn parse_policy(text: &str, hbar: f64, log_base: LogBase) -> Result<ThresholdPolicy> {
    let policy = match text {
        "universal" => ThresholdPolicy::Universal { hbar, log_base },
        "individual" => ThresholdPolicy::Individual { hbar, log_base },
        _ => match text.strip_prefix("fixed:") {
            Some(v) => ThresholdPolicy::Fixed(
                v.parse().map_err(|_| invalid(format!("bad fixed threshold `{v}`")))?,
            ),
            None => return Err(invalid(format!("unknown policy `{text}`"))),
        },
    };
    policy.validate()?;
    Ok(policy)
}

fn parse_schatten(orders: &[String]) -> Result<Vec<f64>> {
    orders
        .iter()
        .map(|s| match s.trim() {
            "inf" | "infinity" => Ok(f64::INFINITY),
            t => t.parse().map_err(|_| invalid(format!("bad schatten order `{t}`"))),
        })
        .collect()
}

fn gen_state(a: GenStateArgs) -> Result<()> {
    let support = a.support.unwrap_or_else(|| SupportRule::default().support_size(a.qubits));
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let g = random_sparse_state_with_limit(a.qubits, &mut rng, support, a.amplitude, a.retry_limit)?;
    save_state(&g.state, &a.out)?;
    eprintln!("support={support} attempts={}", g.attempts);
    Ok(())
}

fn measure(a: MeasureArgs) -> Result<()> {
    let state = load_state(&a.state)?;
    let labels = if a.labels.is_empty() {
        all_nonidentity_labels(state.qubits())?
    } else {
        a.labels
            .iter()
            .map(|w| w.trim().parse::<PauliLabel>().map_err(|e| invalid(format!("label `{w}`: {e}"))))
            .collect::<Result<Vec<_>>>()?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let record = sample_measurements(&state, a.shots, &labels, &mut rng)?;
    save_record(&record, &a.out)
}

fn estimate_cmd(a: EstimateArgs) -> Result<()> {
    let record = load_record(&a.record)?;
    let rule = ThresholdRule::parse(&a.rule).map_err(|_| invalid(format!("unknown rule `{}`", a.rule)))?;
    let log_base =
        LogBase::parse(&a.log_base).map_err(|_| invalid(format!("unknown log base `{}`", a.log_base)))?;
    let policy = parse_policy(&a.policy, a.hbar, log_base)?;
    let report = estimate(&record, &policy, rule)?;
    eprintln!("survivors={} mean_threshold={:?}", report.survivors, report.mean_threshold());
    let out = if a.project { psd_project(&report.estimate)? } else { report.estimate };
    save_state(&out, &a.out)
}

fn eval(a: EvalArgs) -> Result<()> {
    let truth = load_state(&a.truth)?;
    let est = load_state(&a.estimate)?;
    let orders = parse_schatten(&a.schatten)?;
    let method = match a.method {
        MethodArg::Dense => EigenMethod::Dense,
        MethodArg::Iterative => EigenMethod::Iterative,
        MethodArg::Auto => auto_method(&est.expansion().difference(truth.expansion())?),
    };
    let r = error_report(&est, &truth, method, &orders)?;
    println!("qubits={}", truth.qubits());
    println!("method={}", r.method.name());
    println!("spectral={:?}", r.spectral_sq.sqrt());
    println!("spectral_sq={:?}", r.spectral_sq);
    println!("frobenius={:?}", r.frobenius_sq.sqrt());
    println!("frobenius_sq={:?}", r.frobenius_sq);
    for (s, v) in r.schatten {
        let key = if s.is_infinite() { "inf".to_string() } else { format!("{s}") };
        println!("schatten_{key}={v:?}");
    }
    Ok(())
}

fn project(a: ProjectArgs) -> Result<()> {
    let state = load_state(&a.state)?;
    save_state(&psd_project(&state)?, &a.out)
}

fn bench(a: BenchArgs) -> Result<()> {
    let cfg = ExperimentConfig::parse(&read_input(&a.config)?)?;
    let workers = a
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let table = harness::bench(&cfg, &a.out_dir, workers)?;
    let aborted = table.rows().iter().filter(|r| r.is_aborted()).count();
    eprintln!(
        "rows={} aborted={aborted} config_sha256={} out_dir={}",
        table.rows().len(),
        cfg.hash(),
        a.out_dir.display()
    );
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenState(a) => gen_state(a),
        Command::Measure(a) => measure(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Project(a) => project(a),
        Command::Bench(a) => bench(a),
    }
}
