//! Hermitian eigenvalue routines: a dense path backed by nalgebra and a
//! matrix-free Lanczos path for the extreme eigenvalues.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Which eigenvalue route to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMethod {
    Dense,
    Iterative,
}

impl EigenMethod {
    /// Dense up to the eigendecomposition limit, iterative beyond it.
    pub fn for_qubits(qubits: u32) -> Self {
        if qubits <= crate::density::EIGEN_QUBIT_LIMIT {
            EigenMethod::Dense
        } else {
            EigenMethod::Iterative
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EigenMethod::Dense => "dense",
            EigenMethod::Iterative => "iterative",
        }
    }
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut values: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Eigenvalues and unit eigenvectors (as columns) of a Hermitian matrix.
pub fn hermitian_eigen(m: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let eig = SymmetricEigen::new(m.clone());
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// Stopping rules for [`lanczos_extremes`].
#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Iteration cap; the Krylov space never grows past the dimension.
    pub max_iter: usize,
    /// Successive Ritz-value change tolerance, relative to the spectral scale.
    pub ritz_tol: f64,
    /// Required `‖A v - θ v‖ / |θ|_max` on the returned Ritz pairs.
    pub residual_tol: f64,
    pub seed: u64,
}

impl LanczosOptions {
    pub fn for_dim(dim: usize) -> Self {
        Self { max_iter: 5 * dim, ritz_tol: 1e-10, residual_tol: 1e-8, seed: 0x1a2c_2051 }
    }
}

/// Extreme eigenvalues found by Lanczos.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremes {
    pub min: f64,
    pub max: f64,
    /// Largest explicit residual `‖A v - θ v‖` of the two Ritz pairs.
    pub residual: f64,
    pub iterations: usize,
}

impl Extremes {
    pub fn max_abs(&self) -> f64 {
        self.min.abs().max(self.max.abs())
    }
}

fn dot(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

fn norm(u: &[Complex64]) -> f64 {
    libm::sqrt(u.iter().map(|a| a.norm_sqr()).sum::<f64>())
}

/// Lowest and highest eigenvalue of the Hermitian operator `apply` on
/// `C^dim`, using Lanczos with full reorthogonalization.
pub fn lanczos_extremes<F>(dim: usize, mut apply: F, opts: &LanczosOptions) -> Result<Extremes>
where
    F: FnMut(&[Complex64]) -> Vec<Complex64>,
{
    if dim == 0 {
        return Err(Error::InvalidParameter("operator dimension must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut q: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let n0 = norm(&q);
    q.iter_mut().for_each(|a| *a /= n0);

    let cap = opts.max_iter.min(dim).max(1);
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut previous: Option<(f64, f64)> = None;
    let mut scale_hint = 0.0f64;
    let mut bound = 0.0f64;
    let mut next_check = 1;

    loop {
        let mut w = apply(&q);
        let alpha = dot(&q, &w).re;
        alphas.push(alpha);
        basis.push(q);
        // two passes of classical Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let h = dot(b, &w);
                w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= h * bi);
            }
        }
        let beta = norm(&w);
        let k = alphas.len();
        // Gershgorin bound on the tridiagonal, for the breakdown test between checks
        bound = bound.max(alpha.abs() + beta + betas.last().copied().unwrap_or(0.0));
        let near_breakdown = beta <= 1e-13 * bound;
        // the k×k eigenproblem dominates at small dimensions, so convergence is
        // tested on a geometric schedule
        if k < next_check && !near_breakdown && k < cap {
            betas.push(beta);
            q = w.into_iter().map(|a| a / beta).collect();
            continue;
        }
        next_check = k + (k / 8).max(1);
        let tri = tridiagonal(&alphas, &betas);
        let eig = SymmetricEigen::new(tri.clone());
        let (lo, hi) = extreme_positions(eig.eigenvalues.as_slice());
        let (theta_lo, theta_hi) = (eig.eigenvalues[lo], eig.eigenvalues[hi]);
        let scale = theta_lo.abs().max(theta_hi.abs()).max(scale_hint);
        scale_hint = scale;
        let res_lo = (beta * eig.eigenvectors[(k - 1, lo)]).abs();
        let res_hi = (beta * eig.eigenvectors[(k - 1, hi)]).abs();
        let breakdown = beta <= 1e-13 * scale.max(f64::MIN_POSITIVE) || scale == 0.0;
        let settled = previous.is_some_and(|(plo, phi)| {
            (plo - theta_lo).abs() <= opts.ritz_tol * scale
                && (phi - theta_hi).abs() <= opts.ritz_tol * scale
        }) && res_lo.max(res_hi) <= opts.ritz_tol * scale;
        previous = Some((theta_lo, theta_hi));

        if breakdown || settled || k >= cap {
            let residual = [(lo, theta_lo), (hi, theta_hi)]
                .iter()
                .map(|&(idx, theta)| {
                    let s = polish(&tri, eig.eigenvectors.column(idx).iter().copied().collect(), theta);
                    let v = ritz_vector(&basis, &s);
                    let av = apply(&v);
                    let r: Vec<Complex64> =
                        av.iter().zip(&v).map(|(a, x)| a - x * theta).collect();
                    norm(&r)
                })
                .fold(0.0, f64::max);
            let out = Extremes { min: theta_lo, max: theta_hi, residual, iterations: k };
            if residual <= opts.residual_tol * scale || scale == 0.0 {
                return Ok(out);
            }
            // the estimate settled but the explicit certificate did not: keep going
            if breakdown || k >= cap {
                return Err(Error::NoConvergence {
                    iterations: k,
                    best: out.max_abs(),
                    residual,
                });
            }
        }
        betas.push(beta);
        q = w.into_iter().map(|a| a / beta).collect();
    }
}

fn tridiagonal(alphas: &[f64], betas: &[f64]) -> DMatrix<f64> {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    t
}

fn extreme_positions(values: &[f64]) -> (usize, usize) {
    let mut lo = 0;
    let mut hi = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[lo] {
            lo = i;
        }
        if v > values[hi] {
            hi = i;
        }
    }
    (lo, hi)
}

/// Two steps of inverse iteration on the tridiagonal matrix; the QR
/// eigenvectors alone are not accurate enough for the residual certificate.
fn polish(t: &DMatrix<f64>, mut s: Vec<f64>, theta: f64) -> Vec<f64> {
    let k = t.nrows();
    let shift = theta + 1e-14 * theta.abs().max(f64::MIN_POSITIVE);
    let mut m = t.clone();
    for i in 0..k {
        m[(i, i)] -= shift;
    }
    let lu = m.lu();
    for _ in 0..2 {
        let rhs = nalgebra::DVector::from_vec(s.clone());
        let Some(x) = lu.solve(&rhs) else { break };
        let n = x.norm();
        if !(n.is_finite() && n > 0.0) {
            break;
        }
        s = x.iter().map(|v| v / n).collect();
    }
    s
}

fn ritz_vector(basis: &[Vec<Complex64>], coeffs: &[f64]) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); basis[0].len()];
    for (b, &c) in basis.iter().zip(coeffs) {
        v.iter_mut().zip(b).for_each(|(vi, bi)| *vi += bi * c);
    }
    let n = norm(&v);
    v.iter_mut().for_each(|a| *a /= n);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_apply(m: &DMatrix<Complex64>) -> impl FnMut(&[Complex64]) -> Vec<Complex64> + '_ {
        move |v| {
            let x = nalgebra::DVector::from_column_slice(v);
            (m * x).iter().copied().collect()
        }
    }

    #[test]
    fn diagonal_extremes() {
        let d = 16;
        let m = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                Complex64::new(i as f64 - 5.5, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let ext = lanczos_extremes(d, dense_apply(&m), &LanczosOptions::for_dim(d)).unwrap();
        assert!((ext.min + 5.5).abs() < 1e-10);
        assert!((ext.max - 9.5).abs() < 1e-10);
    }

    #[test]
    fn zero_operator() {
        let m = DMatrix::from_element(4, 4, Complex64::new(0.0, 0.0));
        let ext = lanczos_extremes(4, dense_apply(&m), &LanczosOptions::for_dim(4)).unwrap();
        assert_eq!(ext.max_abs(), 0.0);
    }

    #[test]
    fn random_hermitian_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 40;
        let a = DMatrix::from_fn(d, d, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let h = &a + a.adjoint();
        let dense = hermitian_eigenvalues(&h);
        let ext = lanczos_extremes(d, dense_apply(&h), &LanczosOptions::for_dim(d)).unwrap();
        assert!((ext.min - dense[0]).abs() < 1e-8 * dense[0].abs());
        assert!((ext.max - dense[d - 1]).abs() < 1e-8 * dense[d - 1].abs());
    }

    #[test]
    fn iteration_cap_reports_failure() {
        let d = 64;
        let h = DMatrix::from_fn(d, d, |i, j| {
            Complex64::new(libm::cos((i * 7 + j * 7) as f64) + if i == j { i as f64 } else { 0.0 }, 0.0)
        });
        let opts = LanczosOptions { max_iter: 3, ..LanczosOptions::for_dim(d) };
        match lanczos_extremes(d, dense_apply(&h), &opts) {
            Err(Error::NoConvergence { iterations, residual, .. }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
