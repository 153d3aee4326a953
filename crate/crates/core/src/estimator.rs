//! Thresholding estimators of the Pauli coefficients and the projection of
//! the resulting matrix onto the set of density matrices.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::density::{check_eigen, DensityState, LogBase, PauliExpansion};
use crate::error::{Error, Result};
use crate::measurement::{AverageOutcomes, MeasurementRecord};
use crate::norms::{self, NormKind};
use crate::pauli::{DenseHermitian, PauliLabel};
use crate::spectrum;

/// Default `ℏ` multiplying the universal and individual thresholds.
pub const DEFAULT_HBAR: f64 = 1.01;
/// Number of points in the default optimal-threshold grid.
pub const DEFAULT_GRID_POINTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ThresholdRule {
    /// Keep `N` when `|N| ≥ ϖ`, else zero.
    Hard,
    /// `sign(N)·(|N| - ϖ)₊`.
    Soft,
}

impl ThresholdRule {
    pub fn name(self) -> &'static str {
        match self {
            ThresholdRule::Hard => "hard",
            ThresholdRule::Soft => "soft",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(ThresholdRule::Hard),
            "soft" => Ok(ThresholdRule::Soft),
            _ => Err(Error::InvalidParameter("rule must be `hard` or `soft`")),
        }
    }
}

/// How the threshold `ϖ_j` for each coefficient is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdPolicy {
    /// `ℏ √(4 log d / n)` for every coefficient.
    Universal { hbar: f64, log_base: LogBase },
    /// `ℏ √(4 (1 - N_j²) log d / n)`, scaled by the estimated spread of `N_j`.
    Individual { hbar: f64, log_base: LogBase },
    Fixed(f64),
    /// Search over an ascending grid; needs the true state.
    OptimalGrid(Vec<f64>),
}

impl ThresholdPolicy {
    pub fn universal() -> Self {
        ThresholdPolicy::Universal { hbar: DEFAULT_HBAR, log_base: LogBase::Ten }
    }

    pub fn individual() -> Self {
        ThresholdPolicy::Individual { hbar: DEFAULT_HBAR, log_base: LogBase::Ten }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ThresholdPolicy::Universal { hbar, .. } | ThresholdPolicy::Individual { hbar, .. } => {
                if !(*hbar > 1.0) || !hbar.is_finite() {
                    return Err(Error::InvalidParameter("hbar must exceed 1"));
                }
            }
            ThresholdPolicy::Fixed(v) => {
                if !(*v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidParameter("fixed threshold must be finite and >= 0"));
                }
            }
            ThresholdPolicy::OptimalGrid(grid) => validate_grid(grid)?,
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            ThresholdPolicy::Universal { .. } => "universal",
            ThresholdPolicy::Individual { .. } => "individual",
            ThresholdPolicy::Fixed(_) => "fixed",
            ThresholdPolicy::OptimalGrid(_) => "optimal",
        }
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("threshold grid must be nonempty"));
    }
    if grid.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
        return Err(Error::InvalidParameter("threshold grid values must be finite and >= 0"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("threshold grid must be strictly ascending"));
    }
    Ok(())
}

/// `ℏ √(4 log(d) / n)`.
pub fn universal_threshold(shots: u64, dim: usize, hbar: f64, log_base: LogBase) -> f64 {
    hbar * libm::sqrt(4.0 * log_base.log(dim as f64) / shots as f64)
}

/// `ℏ √(4 (1 - N_j²) log(d) / n)`; zero when `|N_j| = 1`.
pub fn individual_threshold(
    average: f64,
    shots: u64,
    dim: usize,
    hbar: f64,
    log_base: LogBase,
) -> Result<f64> {
    if !(average.abs() <= 1.0) {
        return Err(Error::InvalidParameter("average outcome must lie in [-1, 1]"));
    }
    let spread = 1.0 - average * average;
    Ok(hbar * libm::sqrt(4.0 * spread * log_base.log(dim as f64) / shots as f64))
}

/// Hard or soft thresholding of one coefficient; `|N| = ϖ` survives the hard rule.
pub fn apply_threshold(average: f64, threshold: f64, rule: ThresholdRule) -> f64 {
    match rule {
        ThresholdRule::Hard => {
            if average.abs() >= threshold {
                average
            } else {
                0.0
            }
        }
        ThresholdRule::Soft => {
            let shrunk = average.abs() - threshold;
            if shrunk > 0.0 {
                average.signum() * shrunk
            } else {
                0.0
            }
        }
    }
}

/// The estimate plus what was needed to produce it.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub estimate: DensityState,
    pub thresholds_used: BTreeMap<PauliLabel, f64>,
    pub survivors: usize,
    pub policy: ThresholdPolicy,
    pub rule: ThresholdRule,
}

impl EstimateReport {
    pub fn mean_threshold(&self) -> f64 {
        if self.thresholds_used.is_empty() {
            return 0.0;
        }
        self.thresholds_used.values().sum::<f64>() / self.thresholds_used.len() as f64
    }
}

/// Thresholds every measured `N_j`; unmeasured coefficients stay zero.
pub fn estimate(
    record: &MeasurementRecord,
    policy: &ThresholdPolicy,
    rule: ThresholdRule,
) -> Result<EstimateReport> {
    policy.validate()?;
    if let ThresholdPolicy::OptimalGrid(_) = policy {
        return Err(Error::GridPolicyNeedsTruth);
    }
    let averages = record.averages();
    let dim = record.dim();
    let shots = record.shots();
    let mut expansion = PauliExpansion::new(record.qubits())?;
    let mut thresholds_used = BTreeMap::new();
    for (label, &avg) in averages.iter() {
        let varpi = match policy {
            ThresholdPolicy::Universal { hbar, log_base } => {
                universal_threshold(shots, dim, *hbar, *log_base)
            }
            ThresholdPolicy::Individual { hbar, log_base } => {
                individual_threshold(avg, shots, dim, *hbar, *log_base)?
            }
            ThresholdPolicy::Fixed(v) => *v,
            ThresholdPolicy::OptimalGrid(_) => unreachable!("rejected above"),
        };
        thresholds_used.insert(*label, varpi);
        expansion.insert(*label, apply_threshold(avg, varpi, rule))?;
    }
    let survivors = expansion.len();
    Ok(EstimateReport {
        estimate: DensityState::new(expansion),
        thresholds_used,
        survivors,
        policy: policy.clone(),
        rule,
    })
}

/// Same threshold for every coefficient, from precomputed averages.
pub fn threshold_averages(
    qubits: u32,
    averages: &AverageOutcomes,
    threshold: f64,
    rule: ThresholdRule,
) -> Result<DensityState> {
    let mut expansion = PauliExpansion::new(qubits)?;
    for (label, &avg) in averages.iter() {
        expansion.insert(*label, apply_threshold(avg, threshold, rule))?;
    }
    Ok(DensityState::new(expansion))
}

/// Result of [`optimal_threshold_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridOptimum {
    pub threshold: f64,
    pub mse: f64,
    /// Replicate-averaged squared error at every grid point.
    pub curve: Vec<f64>,
}

/// Evaluates the replicate-averaged squared error at each grid threshold and
/// returns the smallest; ties go to the smaller threshold.
pub fn optimal_threshold_search(
    truth: &DensityState,
    records: &[MeasurementRecord],
    rule: ThresholdRule,
    grid: &[f64],
    norm: NormKind,
) -> Result<GridOptimum> {
    let truths = alloc::vec![truth.clone(); records.len()];
    optimal_threshold_search_paired(&truths, records, rule, grid, norm)
}

/// As [`optimal_threshold_search`], with one true state per record.
pub fn optimal_threshold_search_paired(
    truths: &[DensityState],
    records: &[MeasurementRecord],
    rule: ThresholdRule,
    grid: &[f64],
    norm: NormKind,
) -> Result<GridOptimum> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    if truths.len() != records.len() {
        return Err(Error::DimensionMismatch { expected: records.len(), found: truths.len() });
    }
    validate_grid(grid)?;
    let averages: Vec<AverageOutcomes> = records.iter().map(|r| r.averages()).collect();
    let mut curve = Vec::with_capacity(grid.len());
    for &varpi in grid {
        curve.push(grid_point_mse(truths, records, &averages, varpi, rule, norm)?);
    }
    Ok(pick_optimum(grid, curve))
}

/// Mean squared error over replicates at one fixed threshold.
pub fn grid_point_mse(
    truths: &[DensityState],
    records: &[MeasurementRecord],
    averages: &[AverageOutcomes],
    threshold: f64,
    rule: ThresholdRule,
    norm: NormKind,
) -> Result<f64> {
    let mut total = 0.0;
    for ((truth, record), avg) in truths.iter().zip(records).zip(averages) {
        let est = threshold_averages(record.qubits(), avg, threshold, rule)?;
        total += norms::squared_error(&est, truth, norm)?;
    }
    Ok(total / records.len() as f64)
}

/// Smallest curve value; first index wins ties.
pub fn pick_optimum(grid: &[f64], curve: Vec<f64>) -> GridOptimum {
    let mut best = 0;
    for (i, v) in curve.iter().enumerate() {
        if *v < curve[best] {
            best = i;
        }
    }
    GridOptimum { threshold: grid[best], mse: curve[best], curve }
}

/// `count` evenly spaced points from 0 to `upper` inclusive.
pub fn default_grid(upper: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => alloc::vec![0.0],
        _ => (0..count).map(|i| upper * i as f64 / (count - 1) as f64).collect(),
    }
}

/// Euclidean projection of `values` onto `{x ≥ 0, Σx = 1}` by sort-and-shift.
pub fn project_to_simplex(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            shift = candidate;
        }
    }
    values.iter().map(|v| (v - shift).max(0.0)).collect()
}

/// Frobenius-nearest density matrix: keep the eigenvectors, project the
/// eigenvalues onto the probability simplex.
pub fn psd_project(estimate: &DensityState) -> Result<DensityState> {
    check_eigen(estimate.qubits())?;
    let dense = estimate.to_dense()?;
    let (values, vectors) = spectrum::hermitian_eigen(dense.matrix());
    let projected = project_to_simplex(&values);
    let d = estimate.dim();
    let mut scaled = vectors.clone();
    for (col, &lambda) in projected.iter().enumerate() {
        scaled.column_mut(col).scale_mut(lambda);
    }
    let mut m: DMatrix<Complex64> = scaled * vectors.adjoint();
    // restore exact Hermitian symmetry lost to rounding
    let mh = m.adjoint();
    m = (m + mh) * Complex64::new(0.5, 0.0);
    // the simplex projection fixes the trace; absorb rounding drift
    let drift = m.trace().re - 1.0;
    for i in 0..d {
        m[(i, i)] -= Complex64::new(drift / d as f64, 0.0);
    }
    DensityState::from_dense(&DenseHermitian::from_trusted(m))
}
