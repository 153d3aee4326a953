//! Replicated generate → measure → estimate → evaluate experiments.
//!
//! Every random draw is derived from the master seed and the coordinates of
//! the draw (qubits, shots, replicate), never from scheduling order, so the
//! tables are bit-identical for any worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use qtomo_core::density::{random_sparse_state, Rounding};
use qtomo_core::estimator::{
    apply_threshold, default_grid, estimate, pick_optimum, universal_threshold,
    DEFAULT_GRID_POINTS, DEFAULT_HBAR,
};
use qtomo_core::measurement::{all_nonidentity_labels, sample_measurements};
use qtomo_core::norms::{auto_method, spectral_norm_of, squared_error};
use qtomo_core::seed::mix_seed;
use qtomo_core::{
    DensityState, LogBase, NormKind, PauliExpansion, SupportRule, ThresholdPolicy, ThresholdRule,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{QtomoError, Result};

const TAG_TRUTH: u64 = 0x7472_7574_6800_0001;
const TAG_MEASURE: u64 = 0x6d65_6173_7572_0002;

pub const TABLE_FORMAT: &str = "mse-csv v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PolicyKind {
    /// `β̂_j = N_j`, the unthresholded estimator.
    Without,
    /// Grid threshold minimizing the in-sample MSE, per rule and norm.
    Optimal,
    Universal,
    Individual,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] =
        [PolicyKind::Without, PolicyKind::Optimal, PolicyKind::Universal, PolicyKind::Individual];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Without => "without",
            PolicyKind::Optimal => "optimal",
            PolicyKind::Universal => "universal",
            PolicyKind::Individual => "individual",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        PolicyKind::ALL.into_iter().find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub qubit_list: Vec<u32>,
    pub shots_list: Vec<u64>,
    pub replicates: usize,
    pub policies: Vec<PolicyKind>,
    pub rules: Vec<ThresholdRule>,
    pub hbar: f64,
    pub log_base: LogBase,
    pub support_rule: SupportRule,
    pub amplitude: f64,
    pub master_seed: u64,
    /// Draw a new true state for every replicate; otherwise one per qubit count.
    pub fresh_state_per_replicate: bool,
    pub grid_points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            qubit_list: vec![5],
            shots_list: vec![100, 200, 500, 1000, 2000],
            replicates: 200,
            policies: PolicyKind::ALL.to_vec(),
            rules: vec![ThresholdRule::Hard, ThresholdRule::Soft],
            hbar: DEFAULT_HBAR,
            log_base: LogBase::Ten,
            support_rule: SupportRule::default(),
            amplitude: 0.2,
            master_seed: 0,
            fresh_state_per_replicate: true,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(",")
}

fn rounding_name(r: Rounding) -> &'static str {
    match r {
        Rounding::Floor => "floor",
        Rounding::Nearest => "nearest",
    }
}

impl ExperimentConfig {
    /// The full d ∈ {32, 64, 128} × n ∈ {100, …, 2000} study with one true
    /// state per dimension.
    pub fn table1() -> Self {
        Self {
            qubit_list: vec![5, 6, 7],
            fresh_state_per_replicate: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(QtomoError::Config(m.to_string()));
        if self.qubit_list.is_empty() || self.shots_list.is_empty() {
            return bad("qubits and shots lists must be nonempty");
        }
        if self.policies.is_empty() || self.rules.is_empty() {
            return bad("policies and rules lists must be nonempty");
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.qubit_list.iter().any(|&b| b == 0 || b > 12) {
            return bad("qubit counts must lie in 1..=12");
        }
        if self.shots_list.iter().any(|&n| n == 0) {
            return bad("shots must be positive");
        }
        if self.grid_points < 2 {
            return bad("grid_points must be at least 2");
        }
        if !(self.amplitude > 0.0 && self.amplitude <= 1.0) {
            return bad("amplitude must lie in (0, 1]");
        }
        ThresholdPolicy::Universal { hbar: self.hbar, log_base: self.log_base }.validate()?;
        Ok(())
    }

    /// Canonical key=value text; also the input to the config hash.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "qubits={}", join(&self.qubit_list, |b| b.to_string()));
        let _ = writeln!(s, "shots={}", join(&self.shots_list, |n| n.to_string()));
        let _ = writeln!(s, "replicates={}", self.replicates);
        let _ = writeln!(s, "policies={}", join(&self.policies, |p| p.name().to_string()));
        let _ = writeln!(s, "rules={}", join(&self.rules, |r| r.name().to_string()));
        let _ = writeln!(s, "hbar={}", self.hbar);
        let _ = writeln!(s, "log_base={}", self.log_base.name());
        let _ = writeln!(s, "support_factor={}", self.support_rule.factor);
        let _ = writeln!(s, "support_base={}", self.support_rule.base.name());
        let _ = writeln!(s, "support_rounding={}", rounding_name(self.support_rule.rounding));
        let _ = writeln!(s, "amplitude={}", self.amplitude);
        let _ = writeln!(s, "seed={}", self.master_seed);
        let _ = writeln!(s, "fresh_state={}", self.fresh_state_per_replicate);
        let _ = writeln!(s, "grid_points={}", self.grid_points);
        s
    }

    /// Parses flat `key=value` lines over the defaults. `preset=table1`
    /// must come first if used.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| QtomoError::parse(no, "expected key=value"))?;
            let err = |what: &str| QtomoError::parse(no, format!("{key}: {what} `{value}`"));
            let list = || value.split(',').map(str::trim).filter(|s| !s.is_empty());
            match key {
                "preset" => match value {
                    "table1" => cfg = Self::table1(),
                    "default" => cfg = Self::default(),
                    _ => return Err(err("unknown preset")),
                },
                "qubits" => {
                    cfg.qubit_list =
                        list().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| err("bad list"))?
                }
                "shots" => {
                    cfg.shots_list =
                        list().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| err("bad list"))?
                }
                "replicates" => cfg.replicates = value.parse().map_err(|_| err("bad integer"))?,
                "policies" => {
                    cfg.policies = list()
                        .map(|p| PolicyKind::parse(p).ok_or_else(|| err("unknown policy")))
                        .collect::<Result<_>>()?
                }
                "rules" => {
                    cfg.rules = list()
                        .map(|r| ThresholdRule::parse(r).map_err(|_| err("unknown rule")))
                        .collect::<Result<_>>()?
                }
                "hbar" => cfg.hbar = value.parse().map_err(|_| err("bad number"))?,
                "log_base" => cfg.log_base = LogBase::parse(value).map_err(|_| err("bad log base"))?,
                "support_factor" => {
                    cfg.support_rule.factor = value.parse().map_err(|_| err("bad number"))?
                }
                "support_base" => {
                    cfg.support_rule.base = LogBase::parse(value).map_err(|_| err("bad log base"))?
                }
                "support_rounding" => {
                    cfg.support_rule.rounding = match value {
                        "floor" => Rounding::Floor,
                        "nearest" => Rounding::Nearest,
                        _ => return Err(err("bad rounding")),
                    }
                }
                "amplitude" => cfg.amplitude = value.parse().map_err(|_| err("bad number"))?,
                "seed" => cfg.master_seed = value.parse().map_err(|_| err("bad integer"))?,
                "fresh_state" => cfg.fresh_state_per_replicate = value.parse().map_err(|_| err("bad boolean"))?,
                "grid_points" => cfg.grid_points = value.parse().map_err(|_| err("bad integer"))?,
                _ => return Err(QtomoError::parse(no, format!("unknown key `{key}`"))),
            }
        }
        cfg.policies.sort();
        cfg.policies.dedup();
        cfg.rules.sort();
        cfg.rules.dedup();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    fn truth_seed(&self, qubits: u32, replicate: usize) -> u64 {
        if self.fresh_state_per_replicate {
            mix_seed(&[self.master_seed, TAG_TRUTH, qubits as u64, replicate as u64])
        } else {
            mix_seed(&[self.master_seed, TAG_TRUTH, qubits as u64])
        }
    }

    fn measure_seed(&self, qubits: u32, shots: u64, replicate: usize) -> u64 {
        mix_seed(&[self.master_seed, TAG_MEASURE, qubits as u64, shots, replicate as u64])
    }

    /// The true state behind `replicate` at this qubit count.
    pub fn truth(&self, qubits: u32, replicate: usize) -> Result<DensityState> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.truth_seed(qubits, replicate));
        let support = self.support_rule.support_size(qubits);
        Ok(random_sparse_state(qubits, &mut rng, support, self.amplitude)?.state)
    }

    /// The measurement record of `replicate` in the (qubits, shots) cell.
    pub fn record(
        &self,
        truth: &DensityState,
        shots: u64,
        replicate: usize,
    ) -> Result<qtomo_core::MeasurementRecord> {
        let qubits = truth.qubits();
        let labels = all_nonidentity_labels(qubits)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.measure_seed(qubits, shots, replicate));
        Ok(sample_measurements(truth, shots, &labels, &mut rng)?)
    }
}

/// One (d, n, policy, rule, norm) cell. `rule` is `None` for the
/// unthresholded estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub d: usize,
    pub n: u64,
    pub policy: PolicyKind,
    pub rule: Option<ThresholdRule>,
    pub norm: NormKind,
    pub mse: f64,
    pub sem: f64,
    pub replicates: usize,
    pub threshold_mean: f64,
    /// Empty unless the cell was aborted.
    pub diagnostic: String,
}

impl MseRow {
    fn sort_key(&self) -> (usize, u64, PolicyKind, Option<ThresholdRule>, NormKind) {
        (self.d, self.n, self.policy, self.rule, self.norm)
    }

    pub fn is_aborted(&self) -> bool {
        !self.diagnostic.is_empty()
    }

    fn rule_name(&self) -> &'static str {
        self.rule.map_or("none", ThresholdRule::name)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MseTable {
    rows: Vec<MseRow>,
}

impl MseTable {
    pub fn from_rows(mut rows: Vec<MseRow>) -> Self {
        rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Self { rows }
    }

    pub fn rows(&self) -> &[MseRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(
        &self,
        d: usize,
        n: u64,
        policy: PolicyKind,
        rule: Option<ThresholdRule>,
        norm: NormKind,
    ) -> Option<&MseRow> {
        self.rows
            .iter()
            .find(|r| r.d == d && r.n == n && r.policy == policy && r.rule == rule && r.norm == norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Moments {
    mean: f64,
    sem: f64,
}

fn moments(values: &[f64]) -> Moments {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let sem = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        0.0
    };
    Moments { mean, sem }
}

/// Estimators evaluated directly on each record.
fn direct_evaluations(cfg: &ExperimentConfig) -> Vec<(PolicyKind, Option<ThresholdRule>)> {
    let mut out = Vec::new();
    for &p in &cfg.policies {
        match p {
            PolicyKind::Without => out.push((p, None)),
            PolicyKind::Universal | PolicyKind::Individual => {
                out.extend(cfg.rules.iter().map(|&r| (p, Some(r))))
            }
            PolicyKind::Optimal => {}
        }
    }
    out
}

const NORMS: [NormKind; 2] = [NormKind::Spectral, NormKind::Frobenius];

struct ReplicateOutcome {
    /// Per direct evaluation: squared errors in `NORMS` order and the mean threshold.
    errors: Vec<([f64; 2], f64)>,
    /// Per (optimal rule, norm): squared error at every grid point.
    curves: Vec<Vec<f64>>,
}

/// Squared errors along the threshold grid for one record, without
/// materializing intermediate states for the Frobenius norm.
fn grid_curves(
    truth: &DensityState,
    record: &qtomo_core::MeasurementRecord,
    rule: ThresholdRule,
    grid: &[f64],
) -> Result<[Vec<f64>; 2]> {
    let d = truth.dim() as f64;
    let pairs: Vec<_> = record
        .averages()
        .iter()
        .map(|(l, &avg)| (*l, avg, truth.expansion().get(l)))
        .collect();
    // truth terms that were never measured contribute a constant
    let unmeasured: f64 = truth
        .expansion()
        .iter()
        .filter(|(l, _)| record.count(l).is_none())
        .map(|(_, v)| v * v)
        .sum();
    let mut spectral = Vec::with_capacity(grid.len());
    let mut frobenius = Vec::with_capacity(grid.len());
    let mut last_survivors = None;
    for &w in grid {
        let mut diff = PauliExpansion::new(truth.qubits())?;
        for (l, v) in truth.expansion().iter() {
            if record.count(l).is_none() {
                diff.insert(*l, -v)?;
            }
        }
        let mut fro = unmeasured;
        let mut survivors = 0usize;
        for &(label, avg, beta) in &pairs {
            let est = apply_threshold(avg, w, rule);
            if est != 0.0 {
                survivors += 1;
            }
            let c = est - beta;
            fro += c * c;
            diff.insert(label, c)?;
        }
        frobenius.push(fro / d);
        // hard thresholding only changes the estimate when a coefficient drops out
        let reuse = rule == ThresholdRule::Hard && last_survivors == Some(survivors);
        let s = if reuse {
            *spectral.last().expect("previous point")
        } else {
            let s = spectral_norm_of(&diff, auto_method(&diff))?;
            s * s
        };
        spectral.push(s);
        last_survivors = Some(survivors);
    }
    Ok([spectral, frobenius])
}

fn run_replicate(
    cfg: &ExperimentConfig,
    shared_truth: Option<&DensityState>,
    qubits: u32,
    shots: u64,
    replicate: usize,
    evals: &[(PolicyKind, Option<ThresholdRule>)],
    grid: &[f64],
) -> Result<ReplicateOutcome> {
    let owned;
    let truth = match shared_truth {
        Some(t) => t,
        None => {
            owned = cfg.truth(qubits, replicate)?;
            &owned
        }
    };
    let record = cfg.record(truth, shots, replicate)?;
    let mut errors = Vec::with_capacity(evals.len());
    for &(policy, rule) in evals {
        let (p, r) = match (policy, rule) {
            (PolicyKind::Without, _) => (ThresholdPolicy::Fixed(0.0), ThresholdRule::Hard),
            (PolicyKind::Universal, Some(r)) => {
                (ThresholdPolicy::Universal { hbar: cfg.hbar, log_base: cfg.log_base }, r)
            }
            (PolicyKind::Individual, Some(r)) => {
                (ThresholdPolicy::Individual { hbar: cfg.hbar, log_base: cfg.log_base }, r)
            }
            _ => unreachable!("direct evaluations carry a rule"),
        };
        let report = estimate(&record, &p, r)?;
        let mut sq = [0.0; 2];
        for (slot, norm) in sq.iter_mut().zip(NORMS) {
            *slot = squared_error(&report.estimate, truth, norm)?;
        }
        errors.push((sq, report.mean_threshold()));
    }
    let mut curves = Vec::new();
    if cfg.policies.contains(&PolicyKind::Optimal) {
        for &rule in &cfg.rules {
            let [s, f] = grid_curves(truth, &record, rule, grid)?;
            curves.push(s);
            curves.push(f);
        }
    }
    Ok(ReplicateOutcome { errors, curves })
}

fn aborted_rows(
    cfg: &ExperimentConfig,
    d: usize,
    n: u64,
    diagnostic: &str,
) -> Vec<MseRow> {
    let mut keys: Vec<_> = direct_evaluations(cfg);
    if cfg.policies.contains(&PolicyKind::Optimal) {
        keys.extend(cfg.rules.iter().map(|&r| (PolicyKind::Optimal, Some(r))));
    }
    keys.into_iter()
        .flat_map(|(policy, rule)| {
            NORMS.into_iter().map(move |norm| MseRow {
                d,
                n,
                policy,
                rule,
                norm,
                mse: f64::NAN,
                sem: f64::NAN,
                replicates: 0,
                threshold_mean: f64::NAN,
                diagnostic: diagnostic.to_string(),
            })
        })
        .collect()
}

fn summarize_cell(
    cfg: &ExperimentConfig,
    d: usize,
    n: u64,
    evals: &[(PolicyKind, Option<ThresholdRule>)],
    grid: &[f64],
    outcomes: &[ReplicateOutcome],
) -> Vec<MseRow> {
    let reps = outcomes.len();
    let mut rows = Vec::new();
    for (e, &(policy, rule)) in evals.iter().enumerate() {
        let thresholds: Vec<f64> = outcomes.iter().map(|o| o.errors[e].1).collect();
        let threshold_mean = thresholds.iter().sum::<f64>() / reps as f64;
        for (k, norm) in NORMS.into_iter().enumerate() {
            let values: Vec<f64> = outcomes.iter().map(|o| o.errors[e].0[k]).collect();
            let m = moments(&values);
            rows.push(MseRow {
                d,
                n,
                policy,
                rule,
                norm,
                mse: m.mean,
                sem: m.sem,
                replicates: reps,
                threshold_mean,
                diagnostic: String::new(),
            });
        }
    }
    if cfg.policies.contains(&PolicyKind::Optimal) {
        for (ri, &rule) in cfg.rules.iter().enumerate() {
            for (k, norm) in NORMS.into_iter().enumerate() {
                let c = 2 * ri + k;
                let mut mean_curve = vec![0.0; grid.len()];
                for o in outcomes {
                    for (acc, v) in mean_curve.iter_mut().zip(&o.curves[c]) {
                        *acc += v;
                    }
                }
                for v in &mut mean_curve {
                    *v /= reps as f64;
                }
                let best = pick_optimum(grid, mean_curve);
                let at = grid.iter().position(|&g| g == best.threshold).expect("grid point");
                let values: Vec<f64> = outcomes.iter().map(|o| o.curves[c][at]).collect();
                rows.push(MseRow {
                    d,
                    n,
                    policy: PolicyKind::Optimal,
                    rule: Some(rule),
                    norm,
                    mse: best.mse,
                    sem: moments(&values).sem,
                    replicates: reps,
                    threshold_mean: best.threshold,
                    diagnostic: String::new(),
                });
            }
        }
    }
    rows
}

/// Runs every (qubits, shots) cell on a pool of `workers` threads.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<MseTable> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| QtomoError::Config(format!("thread pool: {e}")))?;
    let evals = direct_evaluations(cfg);
    let mut rows = Vec::new();
    for &b in &cfg.qubit_list {
        let d = 1usize << b;
        let shared = if cfg.fresh_state_per_replicate { None } else { Some(cfg.truth(b, 0)) };
        for &n in &cfg.shots_list {
            if let Some(Err(e)) = &shared {
                rows.extend(aborted_rows(cfg, d, n, &format!("truth generation: {e}")));
                continue;
            }
            let truth = shared.as_ref().map(|t| t.as_ref().expect("checked above"));
            let grid = default_grid(2.0 * universal_threshold(n, d, cfg.hbar, cfg.log_base), cfg.grid_points);
            let results: Vec<Result<ReplicateOutcome>> = pool.install(|| {
                (0..cfg.replicates)
                    .into_par_iter()
                    .map(|r| run_replicate(cfg, truth, b, n, r, &evals, &grid))
                    .collect()
            });
            let mut outcomes = Vec::with_capacity(results.len());
            let mut failure = None;
            for (r, res) in results.into_iter().enumerate() {
                match res {
                    Ok(o) => outcomes.push(o),
                    Err(e) => {
                        failure = Some(format!("replicate {r}: {e}"));
                        break;
                    }
                }
            }
            match failure {
                Some(diag) => rows.extend(aborted_rows(cfg, d, n, &diag)),
                None => rows.extend(summarize_cell(cfg, d, n, &evals, &grid, &outcomes)),
            }
        }
    }
    Ok(MseTable::from_rows(rows))
}

/// `E‖N - ρ‖_F²` for the unthresholded estimator when every label is
/// measured: `Σ_j (1 - β_j²) / (n d)`.
pub fn analytic_baseline_frobenius(truth: &DensityState, shots: u64) -> f64 {
    let d = truth.dim() as f64;
    let labels = d * d - 1.0;
    let energy: f64 = truth.expansion().iter().map(|(_, v)| v * v).sum();
    (labels - energy) / (shots as f64 * d)
}

const CSV_HEADER: [&str; 10] =
    ["d", "n", "policy", "rule", "norm", "mse", "sem", "replicates", "threshold_mean", "diagnostic"];

fn fmt_f(v: f64) -> String {
    // shortest representation that parses back to the same bits
    format!("{v:?}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableLayout {
    /// One row per (d, n, policy, rule, norm).
    Long,
    /// One row per (norm, d, n), estimators as columns.
    Table1,
}

pub fn table_to_csv(table: &MseTable, layout: TableLayout) -> Result<String> {
    if table.is_empty() {
        return Err(QtomoError::Config("empty table".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    match layout {
        TableLayout::Long => {
            w.write_record(CSV_HEADER)?;
            for r in table.rows() {
                w.write_record([
                    r.d.to_string(),
                    r.n.to_string(),
                    r.policy.name().to_string(),
                    r.rule_name().to_string(),
                    r.norm.name().to_string(),
                    fmt_f(r.mse),
                    fmt_f(r.sem),
                    r.replicates.to_string(),
                    fmt_f(r.threshold_mean),
                    r.diagnostic.clone(),
                ])?;
            }
        }
        TableLayout::Table1 => write_table1(table, &mut w)?,
    }
    let bytes = w.into_inner().map_err(|e| QtomoError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv writes utf-8"))
}

fn write_table1(table: &MseTable, w: &mut csv::Writer<Vec<u8>>) -> Result<()> {
    use PolicyKind::*;
    use ThresholdRule::*;
    let columns: [(PolicyKind, Option<ThresholdRule>); 7] = [
        (Without, None),
        (Optimal, Some(Hard)),
        (Optimal, Some(Soft)),
        (Universal, Some(Hard)),
        (Universal, Some(Soft)),
        (Individual, Some(Hard)),
        (Individual, Some(Soft)),
    ];
    w.write_record([
        "norm",
        "d",
        "n",
        "without",
        "optimal_hard",
        "optimal_soft",
        "universal_hard",
        "universal_soft",
        "individual_hard",
        "individual_soft",
        "threshold_universal",
        "threshold_optimal_hard",
        "threshold_optimal_soft",
    ])?;
    let mut cells: Vec<(usize, u64)> = table.rows().iter().map(|r| (r.d, r.n)).collect();
    cells.dedup();
    for norm in NORMS {
        for &(d, n) in &cells {
            let mut rec = vec![norm.name().to_string(), d.to_string(), n.to_string()];
            for (p, r) in columns {
                rec.push(table.get(d, n, p, r, norm).map(|x| fmt_f(x.mse)).unwrap_or_default());
            }
            let thr = |p, r| table.get(d, n, p, r, norm).map(|x| fmt_f(x.threshold_mean)).unwrap_or_default();
            rec.push(thr(Universal, Some(Hard)));
            rec.push(thr(Optimal, Some(Hard)));
            rec.push(thr(Optimal, Some(Soft)));
            w.write_record(&rec)?;
        }
    }
    Ok(())
}

pub fn emit_table(table: &MseTable, path: &Path, layout: TableLayout) -> Result<()> {
    let text = table_to_csv(table, layout)?;
    fs::write(path, text).map_err(|e| QtomoError::io(path, e))
}

/// Reads back a [`TableLayout::Long`] CSV.
pub fn parse_table(text: &str) -> Result<MseTable> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(QtomoError::parse(1, "unexpected table header"));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let no = i + 2;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let num = |k: usize| -> Result<f64> {
            field(k).parse().map_err(|_| QtomoError::parse(no, format!("bad number in `{}`", CSV_HEADER[k])))
        };
        let int = |k: usize| -> Result<u64> {
            field(k).parse().map_err(|_| QtomoError::parse(no, format!("bad integer in `{}`", CSV_HEADER[k])))
        };
        let policy = PolicyKind::parse(field(2)).ok_or_else(|| QtomoError::parse(no, "unknown policy"))?;
        let rule = match field(3) {
            "none" => None,
            r => Some(ThresholdRule::parse(r).map_err(|_| QtomoError::parse(no, "unknown rule"))?),
        };
        let norm = match field(4) {
            "spectral" => NormKind::Spectral,
            "frobenius" => NormKind::Frobenius,
            _ => return Err(QtomoError::parse(no, "unknown norm")),
        };
        rows.push(MseRow {
            d: int(0)? as usize,
            n: int(1)?,
            policy,
            rule,
            norm,
            mse: num(5)?,
            sem: num(6)?,
            replicates: int(7)? as usize,
            threshold_mean: num(8)?,
            diagnostic: field(9).to_string(),
        });
    }
    Ok(MseTable::from_rows(rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotMode {
    MseVsN,
    MseVsD,
    /// `d²·MSE` for the spectral norm, `d·MSE` for Frobenius.
    RescaledVsD,
}

impl PlotMode {
    pub const ALL: [PlotMode; 3] = [PlotMode::MseVsN, PlotMode::MseVsD, PlotMode::RescaledVsD];

    pub fn name(self) -> &'static str {
        match self {
            PlotMode::MseVsN => "mse_vs_n",
            PlotMode::MseVsD => "mse_vs_d",
            PlotMode::RescaledVsD => "rescaled_vs_d",
        }
    }
}

/// One plotted point: `series` names the fixed coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub series: String,
    pub x: f64,
    pub value: f64,
    pub sem: f64,
}

pub fn rescale_factor(norm: NormKind, d: usize) -> f64 {
    match norm {
        NormKind::Spectral => (d * d) as f64,
        NormKind::Frobenius => d as f64,
    }
}

pub fn plot_points(table: &MseTable, mode: PlotMode) -> Result<Vec<PlotPoint>> {
    if table.is_empty() {
        return Err(QtomoError::Config("empty table".into()));
    }
    let mut series: BTreeMap<String, Vec<PlotPoint>> = BTreeMap::new();
    for r in table.rows() {
        if r.is_aborted() {
            return Err(QtomoError::Config(format!(
                "missing cell d={} n={} {} {}: {}",
                r.d,
                r.n,
                r.policy.name(),
                r.rule_name(),
                r.diagnostic
            )));
        }
        let tail = format!("{}/{}/{}", r.policy.name(), r.rule_name(), r.norm.name());
        let (name, x, scale) = match mode {
            PlotMode::MseVsN => (format!("d={}/{tail}", r.d), r.n as f64, 1.0),
            PlotMode::MseVsD => (format!("n={}/{tail}", r.n), r.d as f64, 1.0),
            PlotMode::RescaledVsD => (format!("n={}/{tail}", r.n), r.d as f64, rescale_factor(r.norm, r.d)),
        };
        series.entry(name.clone()).or_default().push(PlotPoint {
            series: name,
            x,
            value: r.mse * scale,
            sem: r.sem * scale,
        });
    }
    let mut out = Vec::new();
    for (_, mut pts) in series {
        pts.sort_by(|a, b| a.x.total_cmp(&b.x));
        out.extend(pts);
    }
    Ok(out)
}

pub fn emit_plot_data(table: &MseTable, mode: PlotMode, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["series", "x", "value", "sem"])?;
    for p in plot_points(table, mode)? {
        w.write_record([p.series, fmt_f(p.x), fmt_f(p.value), fmt_f(p.sem)])?;
    }
    let bytes = w.into_inner().map_err(|e| QtomoError::Config(e.to_string()))?;
    fs::write(path, bytes).map_err(|e| QtomoError::io(path, e))
}

/// Least-squares slope of `ln MSE` against `ln n` for one series.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub d: usize,
    pub policy: PolicyKind,
    pub rule: Option<ThresholdRule>,
    pub norm: NormKind,
    pub slope: f64,
    pub stderr: f64,
    pub ci95: (f64, f64),
    /// Rate predicted for `q`-sparse truths (exactly −1 without thresholding).
    pub expected: f64,
    pub points: usize,
}

pub fn fit_log_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = if xs.len() > 2 { (sse / (k - 2.0) / sxx).sqrt() } else { f64::NAN };
    (slope, stderr)
}

pub fn scaling_check(table: &MseTable, q: f64) -> Result<Vec<SlopeFit>> {
    let mut groups: BTreeMap<(usize, PolicyKind, Option<ThresholdRule>, NormKind), Vec<(f64, f64)>> =
        BTreeMap::new();
    for r in table.rows().iter().filter(|r| !r.is_aborted() && r.mse > 0.0) {
        groups.entry((r.d, r.policy, r.rule, r.norm)).or_default().push((r.n as f64, r.mse));
    }
    let mut fits = Vec::new();
    for ((d, policy, rule, norm), pts) in groups {
        if pts.len() < 3 {
            continue;
        }
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let (slope, stderr) = fit_log_slope(&xs, &ys);
        let t = StudentsT::new(0.0, 1.0, (pts.len() - 2) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.975);
        let expected = match (policy, norm) {
            (PolicyKind::Without, _) => -1.0,
            (_, NormKind::Spectral) => -(1.0 - q),
            (_, NormKind::Frobenius) => -(1.0 - q / 2.0),
        };
        fits.push(SlopeFit {
            d,
            policy,
            rule,
            norm,
            slope,
            stderr,
            ci95: (slope - t * stderr, slope + t * stderr),
            expected,
            points: pts.len(),
        });
    }
    if fits.is_empty() {
        return Err(QtomoError::Config("scaling check needs at least 3 shot counts per series".into()));
    }
    Ok(fits)
}

pub fn scaling_report(fits: &[SlopeFit]) -> String {
    let mut s = String::new();
    for f in fits {
        let _ = writeln!(
            s,
            "d={} policy={} rule={} norm={} slope={:.4} stderr={:.4} ci95_low={:.4} ci95_high={:.4} expected={} points={}",
            f.d,
            f.policy.name(),
            f.rule.map_or("none", ThresholdRule::name),
            f.norm.name(),
            f.slope,
            f.stderr,
            f.ci95.0,
            f.ci95.1,
            f.expected,
            f.points
        );
    }
    s
}

pub fn manifest(cfg: &ExperimentConfig) -> String {
    format!(
        "seed={}\nversion={}\nconfig_sha256={}\nformats={}\n",
        cfg.master_seed,
        env!("CARGO_PKG_VERSION"),
        cfg.hash(),
        crate::FORMATS,
    )
}

/// Runs the experiment and writes `mse.csv`, `table1.csv`, `plot_*.csv`,
/// `scaling.txt`, `config.txt` and `manifest.txt` into `out_dir`.
pub fn bench(cfg: &ExperimentConfig, out_dir: &Path, workers: usize) -> Result<MseTable> {
    fs::create_dir_all(out_dir).map_err(|e| QtomoError::io(out_dir, e))?;
    let table = run_experiment(cfg, workers)?;
    emit_table(&table, &out_dir.join("mse.csv"), TableLayout::Long)?;
    emit_table(&table, &out_dir.join("table1.csv"), TableLayout::Table1)?;
    for mode in PlotMode::ALL {
        let path = out_dir.join(format!("plot_{}.csv", mode.name()));
        emit_plot_data(&table, mode, &path)?;
    }
    let scaling = match scaling_check(&table, 0.0) {
        Ok(fits) => scaling_report(&fits),
        Err(e) => format!("# {e}\n"),
    };
    let write = |name: &str, text: &str| {
        let p = out_dir.join(name);
        fs::write(&p, text).map_err(|e| QtomoError::io(p, e))
    };
    write("scaling.txt", &scaling)?;
    write("config.txt", &cfg.to_text())?;
    write("manifest.txt", &manifest(cfg))?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            qubit_list: vec![2],
            shots_list: vec![10, 40, 160],
            replicates: 6,
            grid_points: 11,
            master_seed: 9,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_text_roundtrips() {
        let cfg = ExperimentConfig { hbar: 1.5, amplitude: 0.1 + 0.2, ..tiny() };
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let t1 = ExperimentConfig::parse("preset=table1\nreplicates=3\n").unwrap();
        assert_eq!(t1.qubit_list, vec![5, 6, 7]);
        assert!(!t1.fresh_state_per_replicate);
        assert_eq!(t1.replicates, 3);
    }

    #[test]
    fn config_rejections() {
        for bad in ["replicates=0", "qubits=", "colour=blue", "nonsense", "policies=best", "hbar=0.5"] {
            assert!(ExperimentConfig::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn table_has_every_cell_and_roundtrips() {
        let t = run_experiment(&tiny(), 1).unwrap();
        // without + 3 policies × 2 rules, both norms, 3 shot counts
        assert_eq!(t.rows().len(), 3 * 7 * 2);
        for r in t.rows() {
            assert!(r.mse >= 0.0 && r.sem.is_finite(), "{r:?}");
            assert_eq!(r.replicates, 6);
        }
        let text = table_to_csv(&t, TableLayout::Long).unwrap();
        let back = parse_table(&text).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn optimal_never_worse_than_universal_on_its_grid() {
        let t = run_experiment(&tiny(), 1).unwrap();
        for r in t.rows().iter().filter(|r| r.policy == PolicyKind::Optimal) {
            let u = t.get(r.d, r.n, PolicyKind::Universal, r.rule, r.norm).unwrap();
            // the universal threshold sits on the grid's midpoint
            assert!(r.mse <= u.mse + 1e-15, "{r:?} vs {u:?}");
        }
    }

    #[test]
    fn aborted_cells_are_nan_with_diagnostic() {
        let cfg = ExperimentConfig {
            qubit_list: vec![1],
            support_rule: SupportRule { factor: 100.0, ..SupportRule::default() },
            fresh_state_per_replicate: false,
            ..tiny()
        };
        let t = run_experiment(&cfg, 1).unwrap();
        assert!(t.rows().iter().all(|r| r.mse.is_nan() && r.is_aborted()));
        let text = table_to_csv(&t, TableLayout::Long).unwrap();
        assert!(text.contains("NaN"));
        let back = parse_table(&text).unwrap();
        assert_eq!(back.rows().len(), t.rows().len());
        assert!(back.rows()[0].diagnostic.contains("support"));
        assert!(plot_points(&t, PlotMode::MseVsN).is_err());
    }

    #[test]
    fn rescaled_identity() {
        let t = run_experiment(&ExperimentConfig { qubit_list: vec![2, 3], ..tiny() }, 1).unwrap();
        let raw = plot_points(&t, PlotMode::MseVsD).unwrap();
        let scaled = plot_points(&t, PlotMode::RescaledVsD).unwrap();
        for (a, b) in raw.iter().zip(&scaled) {
            let d = a.x;
            let k = if a.series.ends_with("spectral") { d * d } else { d };
            assert_eq!(b.value / a.value, k);
        }
    }

    #[test]
    fn slope_fit_recovers_power_law() {
        let xs = [100.0, 200.0, 500.0, 1000.0, 2000.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.75)).collect();
        let (s, se) = fit_log_slope(&xs, &ys);
        assert!((s + 0.75).abs() < 1e-12 && se < 1e-10);
    }

    #[test]
    fn table1_layout_groups_columns() {
        let t = run_experiment(&tiny(), 1).unwrap();
        let text = table_to_csv(&t, TableLayout::Table1).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("norm,d,n,without,optimal_hard,optimal_soft,universal_hard"));
        assert_eq!(lines.count(), 2 * 3);
    }
}
