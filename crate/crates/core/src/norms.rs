//! Error norms between two density states.
//!
//! The difference `Δ = Σ δ_j B_j / d` is never materialized for the
//! Frobenius norm: orthogonality of the Pauli basis gives
//! `‖Δ‖_F² = Σ δ_j² / d`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::density::{check_eigen, DensityState, PauliExpansion};
use crate::error::{Error, Result};
use crate::pauli;
use crate::spectrum::{self, EigenMethod, Extremes, LanczosOptions};

/// Eigenvalues smaller than this are treated as zero in Schatten sums.
pub const EIGEN_ZERO: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NormKind {
    Spectral,
    Frobenius,
}

impl NormKind {
    pub fn name(self) -> &'static str {
        match self {
            NormKind::Spectral => "spectral",
            NormKind::Frobenius => "frobenius",
        }
    }
}

fn delta(a: &DensityState, b: &DensityState) -> Result<PauliExpansion> {
    a.expansion().difference(b.expansion())
}

/// `‖a - b‖_F²`, computed in coefficient space.
pub fn frobenius_error_sq(a: &DensityState, b: &DensityState) -> Result<f64> {
    let diff = delta(a, b)?;
    Ok(diff.iter().map(|(_, v)| v * v).sum::<f64>() / diff.dim() as f64)
}

/// `‖a - b‖₂`, the largest eigenvalue magnitude of the difference.
pub fn spectral_error(a: &DensityState, b: &DensityState, method: EigenMethod) -> Result<f64> {
    let diff = delta(a, b)?;
    spectral_norm_of(&diff, method)
}

/// Spectral norm of `Σ c_j B_j / d`.
pub fn spectral_norm_of(diff: &PauliExpansion, method: EigenMethod) -> Result<f64> {
    if diff.is_empty() {
        return Ok(0.0);
    }
    let d = diff.dim();
    let scale = 1.0 / d as f64;
    if diff.len() == 1 {
        // a single Pauli term has eigenvalues ±c
        let (_, c) = diff.iter().next().expect("one term");
        return Ok(c.abs() * scale);
    }
    match method {
        EigenMethod::Dense => {
            check_eigen(diff.qubits())?;
            let m = diff.to_dense_matrix(scale)?;
            let values = spectrum::hermitian_eigenvalues(&m);
            Ok(values[0].abs().max(values[d - 1].abs()))
        }
        EigenMethod::Iterative => Ok(lanczos_of(diff)?.max_abs()),
    }
}

/// Lanczos extremes of `Σ c_j B_j / d`, with its residual certificate.
pub fn lanczos_of(diff: &PauliExpansion) -> Result<Extremes> {
    let d = diff.dim();
    let scale = 1.0 / d as f64;
    spectrum::lanczos_extremes(
        d,
        |v| pauli::expansion_matvec(diff, scale, v).expect("dimension checked"),
        &LanczosOptions::for_dim(d),
    )
}

/// Squared error in the requested norm, picking the eigen route from the size.
pub fn squared_error(a: &DensityState, b: &DensityState, norm: NormKind) -> Result<f64> {
    match norm {
        NormKind::Frobenius => frobenius_error_sq(a, b),
        NormKind::Spectral => {
            let diff = delta(a, b)?;
            let s = spectral_norm_of(&diff, auto_method(&diff))?;
            Ok(s * s)
        }
    }
}

/// Dense when the difference has many terms and fits, Lanczos otherwise.
pub fn auto_method(diff: &PauliExpansion) -> EigenMethod {
    let dense_ok = diff.qubits() <= crate::density::EIGEN_QUBIT_LIMIT;
    if dense_ok && diff.len() >= diff.dim() {
        EigenMethod::Dense
    } else {
        EigenMethod::Iterative
    }
}

/// Schatten-`s` norm of the difference; `s = ∞` gives the spectral norm.
pub fn schatten_error(a: &DensityState, b: &DensityState, s: f64) -> Result<f64> {
    if !(s >= 1.0) {
        return Err(Error::InvalidParameter("schatten order must be at least 1"));
    }
    let diff = delta(a, b)?;
    check_eigen(diff.qubits())?;
    let d = diff.dim();
    let values = spectrum::hermitian_eigenvalues(&diff.to_dense_matrix(1.0 / d as f64)?);
    Ok(schatten_of(&values, s))
}

fn schatten_of(values: &[f64], s: f64) -> f64 {
    let mags = values.iter().map(|v| v.abs()).filter(|v| *v >= EIGEN_ZERO);
    if s.is_infinite() {
        return mags.fold(0.0, f64::max);
    }
    let sum: f64 = mags.map(|v| libm::pow(v, s)).sum();
    libm::pow(sum, 1.0 / s)
}

/// Error summary between two states.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub spectral_sq: f64,
    pub frobenius_sq: f64,
    pub schatten: Vec<(f64, f64)>,
    pub method: EigenMethod,
}

pub fn error_report(
    a: &DensityState,
    b: &DensityState,
    method: EigenMethod,
    schatten_orders: &[f64],
) -> Result<ErrorReport> {
    let spectral = spectral_error(a, b, method)?;
    let frobenius_sq = frobenius_error_sq(a, b)?;
    let schatten = if schatten_orders.is_empty() {
        Vec::new()
    } else {
        let diff = delta(a, b)?;
        check_eigen(diff.qubits())?;
        let values =
            spectrum::hermitian_eigenvalues(&diff.to_dense_matrix(1.0 / diff.dim() as f64)?);
        schatten_orders
            .iter()
            .map(|&s| {
                if !(s >= 1.0) {
                    Err(Error::InvalidParameter("schatten order must be at least 1"))
                } else {
                    Ok((s, schatten_of(&values, s)))
                }
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok(ErrorReport { spectral_sq: spectral * spectral, frobenius_sq, schatten, method })
}

/// Outcome of [`norm_inequality_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormCheck {
    pub spectral: f64,
    pub frobenius: f64,
    pub max_row_sum: f64,
    pub violations: Vec<String>,
}

impl NormCheck {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Verifies `‖Δ‖₂ ≤ ‖Δ‖_F ≤ √d ‖Δ‖₂` and `‖Δ‖₂ ≤ ‖Δ‖_∞` on the dense difference.
pub fn norm_inequality_check(a: &DensityState, b: &DensityState) -> Result<NormCheck> {
    let diff = delta(a, b)?;
    check_eigen(diff.qubits())?;
    let d = diff.dim();
    let m = diff.to_dense_matrix(1.0 / d as f64)?;
    Ok(matrix_norm_check(&m))
}

/// The same inequalities for any Hermitian matrix.
pub fn matrix_norm_check(m: &nalgebra::DMatrix<num_complex::Complex64>) -> NormCheck {
    let d = m.nrows();
    let values = spectrum::hermitian_eigenvalues(m);
    let spectral = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let frobenius = libm::sqrt(m.iter().map(|z| z.norm_sqr()).sum::<f64>());
    let max_row_sum = (0..d)
        .map(|i| m.row(i).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let slack = 1e-12 * (1.0 + frobenius);
    let mut violations = Vec::new();
    if spectral > frobenius + slack {
        violations.push(alloc::format!("spectral {spectral} > frobenius {frobenius}"));
    }
    if frobenius > libm::sqrt(d as f64) * spectral + slack {
        violations.push(alloc::format!("frobenius {frobenius} > sqrt(d)·spectral {spectral}"));
    }
    if spectral > max_row_sum + slack {
        violations.push(alloc::format!("spectral {spectral} > max row sum {max_row_sum}"));
    }
    NormCheck { spectral, frobenius, max_row_sum, violations }
}
