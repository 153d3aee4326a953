//! Density matrices in Pauli form, `ρ = I/d + Σ_j β_j B_j / d`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::ToString;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::pauli::{self, check_qubits, label_count, DenseHermitian, PauliLabel};
use crate::spectrum::{self, EigenMethod, LanczosOptions};

/// Minimum eigenvalue accepted as positive semidefinite.
pub const PSD_TOLERANCE: f64 = 1e-10;
/// Coefficients smaller than this are dropped by [`DensityState::from_dense`].
pub const DROP_TOLERANCE: f64 = 1e-14;
/// Allowed `|tr(m) - 1|` for matrices handed to [`DensityState::from_dense`].
pub const TRACE_TOLERANCE: f64 = 1e-9;
/// Largest qubit count handled by dense eigendecomposition.
pub const EIGEN_QUBIT_LIMIT: u32 = 8;
/// Default rejection-sampling budget for [`random_sparse_state`].
pub const DEFAULT_RETRY_LIMIT: u32 = 10_000;

/// Sparse real coefficients on non-identity Pauli labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PauliExpansion {
    qubits: u32,
    terms: BTreeMap<PauliLabel, f64>,
}

impl PauliExpansion {
    pub fn new(qubits: u32) -> Result<Self> {
        check_qubits(qubits)?;
        Ok(Self { qubits, terms: BTreeMap::new() })
    }

    pub fn from_terms<I>(qubits: u32, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (PauliLabel, f64)>,
    {
        let mut out = Self::new(qubits)?;
        for (label, value) in terms {
            out.insert(label, value)?;
        }
        Ok(out)
    }

    /// Sets a coefficient; zero removes the term.
    pub fn insert(&mut self, label: PauliLabel, value: f64) -> Result<()> {
        self.check_label(&label)?;
        if label.is_identity() {
            return Err(Error::IdentityLabel);
        }
        if value == 0.0 {
            self.terms.remove(&label);
        } else {
            self.terms.insert(label, value);
        }
        Ok(())
    }

    fn check_label(&self, label: &PauliLabel) -> Result<()> {
        if label.qubits() != self.qubits {
            return Err(Error::QubitMismatch { left: self.qubits, right: label.qubits() });
        }
        Ok(())
    }

    pub fn get(&self, label: &PauliLabel) -> f64 {
        self.terms.get(label).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PauliLabel, &f64)> + '_ {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn qubits(&self) -> u32 {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        1usize << self.qubits
    }

    /// `self - other`, term by term over the union of supports.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        if self.qubits != other.qubits {
            return Err(Error::QubitMismatch { left: self.qubits, right: other.qubits });
        }
        let mut terms = self.terms.clone();
        for (label, value) in &other.terms {
            let slot = terms.entry(*label).or_insert(0.0);
            *slot -= value;
        }
        terms.retain(|_, v| *v != 0.0);
        Ok(Self { qubits: self.qubits, terms })
    }

    /// `Σ c_j B_j` as a dense matrix (times `scale`).
    pub fn to_dense_matrix(&self, scale: f64) -> Result<DMatrix<Complex64>> {
        pauli::check_dense(self.qubits)?;
        let d = self.dim();
        let mut m = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
        for (label, &c) in &self.terms {
            pauli::add_pauli_dense(&mut m, label, Complex64::new(c * scale, 0.0));
        }
        Ok(m)
    }
}

/// A unit-trace Hermitian matrix stored by its Pauli coefficients.
///
/// The identity coefficient is fixed at 1, so trace and Hermitian symmetry
/// hold by construction. Positive semidefiniteness is not implied.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    expansion: PauliExpansion,
}

impl DensityState {
    pub fn new(expansion: PauliExpansion) -> Self {
        Self { expansion }
    }

    /// `I/d`.
    pub fn maximally_mixed(qubits: u32) -> Result<Self> {
        Ok(Self::new(PauliExpansion::new(qubits)?))
    }

    pub fn expansion(&self) -> &PauliExpansion {
        &self.expansion
    }

    pub fn into_expansion(self) -> PauliExpansion {
        self.expansion
    }

    pub fn qubits(&self) -> u32 {
        self.expansion.qubits
    }

    pub fn dim(&self) -> usize {
        self.expansion.dim()
    }

    /// `β_j = tr(ρ B_j)`; the identity label gives 1.
    pub fn coefficient(&self, label: &PauliLabel) -> Result<f64> {
        self.expansion.check_label(label)?;
        if label.is_identity() {
            return Ok(1.0);
        }
        Ok(self.expansion.get(label))
    }

    pub fn to_dense(&self) -> Result<DenseHermitian> {
        let d = self.dim();
        let mut m = self.expansion.to_dense_matrix(1.0 / d as f64)?;
        for i in 0..d {
            m[(i, i)] += Complex64::new(1.0 / d as f64, 0.0);
        }
        Ok(DenseHermitian::from_trusted(m))
    }

    /// Recovers every coefficient `tr(m B_j)` of a unit-trace Hermitian matrix.
    pub fn from_dense(m: &DenseHermitian) -> Result<Self> {
        let qubits = m.qubits();
        check_qubits(qubits)?;
        let tr = m.trace();
        if (tr.re - 1.0).abs() > TRACE_TOLERANCE || tr.im.abs() > TRACE_TOLERANCE {
            return Err(Error::WrongTrace(tr.re));
        }
        let mat = m.matrix();
        let mut expansion = PauliExpansion::new(qubits)?;
        for label in pauli::nonidentity_labels(qubits)? {
            let beta = trace_against(mat, &label);
            if beta.abs() >= DROP_TOLERANCE {
                expansion.terms.insert(label, beta);
            }
        }
        Ok(Self::new(expansion))
    }

    /// Smallest eigenvalue of the represented matrix.
    pub fn min_eigenvalue(&self, method: EigenMethod) -> Result<f64> {
        let d = self.dim();
        if self.expansion.is_empty() {
            return Ok(1.0 / d as f64);
        }
        match method {
            EigenMethod::Dense => {
                check_eigen(self.qubits())?;
                Ok(self.to_dense()?.eigenvalues()[0])
            }
            EigenMethod::Iterative => {
                let scale = 1.0 / d as f64;
                let ext = spectrum::lanczos_extremes(
                    d,
                    |v| pauli::expansion_matvec(&self.expansion, scale, v).expect("dimension checked"),
                    &LanczosOptions::for_dim(d),
                )?;
                Ok(scale + ext.min)
            }
        }
    }

    /// Dense below [`EIGEN_QUBIT_LIMIT`], Lanczos above.
    pub fn min_eigenvalue_auto(&self) -> Result<f64> {
        self.min_eigenvalue(EigenMethod::for_qubits(self.qubits()))
    }

    pub fn is_physical(&self) -> Result<bool> {
        if self.expansion.terms.values().any(|b| b.abs() > 1.0) {
            return Ok(false);
        }
        Ok(self.min_eigenvalue_auto()? >= -PSD_TOLERANCE)
    }

    /// `Σ |β_j|^q` over stored coefficients, with `0^0 = 0`.
    pub fn sparsity_norm(&self, q: f64) -> f64 {
        self.expansion
            .terms
            .values()
            .filter(|b| **b != 0.0)
            .map(|b| if q == 0.0 { 1.0 } else { libm::pow(b.abs(), q) })
            .sum()
    }
}

pub(crate) fn check_eigen(qubits: u32) -> Result<()> {
    if qubits > EIGEN_QUBIT_LIMIT {
        return Err(Error::DenseLimit { qubits, limit: EIGEN_QUBIT_LIMIT });
    }
    Ok(())
}

/// `Re tr(m B)` in `O(d)` using the permutation structure of `B`.
fn trace_against(m: &DMatrix<Complex64>, label: &PauliLabel) -> f64 {
    // tr(m B) = Σ_i m[i, i^x] B[i^x, i]
    let unit = pauli::pauli_matvec_entry_phase(label);
    let (x, z) = (label.x_mask(), label.z_mask());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..m.nrows() {
        let r = i ^ x;
        let term = m[(i, r)];
        if (r & z).count_ones() & 1 == 1 {
            acc -= term;
        } else {
            acc += term;
        }
    }
    (acc * unit).re
}

/// The `ℓ_q` sparsity class `Σ |β_j|^q ≤ budget`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityModel {
    q: f64,
    budget: f64,
}

impl SparsityModel {
    pub fn new(q: f64, budget: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&q) {
            return Err(Error::InvalidParameter("sparsity exponent q must lie in [0, 1)"));
        }
        if !(budget > 0.0) {
            return Err(Error::InvalidParameter("sparsity budget must be positive"));
        }
        Ok(Self { q, budget })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn contains(&self, state: &DensityState) -> bool {
        state.sparsity_norm(self.q) <= self.budget
    }
}

/// Base of the logarithm in thresholds and the support-size rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    Natural,
    #[default]
    Ten,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => libm::log(x),
            LogBase::Ten => libm::log10(x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LogBase::Natural => "natural",
            LogBase::Ten => "ten",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "natural" | "e" | "ln" => Ok(LogBase::Natural),
            "ten" | "10" | "log10" => Ok(LogBase::Ten),
            _ => Err(Error::InvalidParameter("log base must be `natural` or `ten`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rounding {
    #[default]
    Floor,
    Nearest,
}

/// Support size `[factor · log d]` of generated test states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportRule {
    pub factor: f64,
    pub base: LogBase,
    pub rounding: Rounding,
}

impl Default for SupportRule {
    fn default() -> Self {
        Self { factor: 6.0, base: LogBase::Natural, rounding: Rounding::Floor }
    }
}

impl SupportRule {
    pub fn support_size(&self, qubits: u32) -> u64 {
        let d = libm::ldexp(1.0, qubits as i32);
        let raw = self.factor * self.base.log(d);
        let r = match self.rounding {
            Rounding::Floor => libm::floor(raw),
            Rounding::Nearest => libm::round(raw),
        };
        r.max(0.0) as u64
    }
}

/// A generated state together with the number of draws it took.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedState {
    pub state: DensityState,
    pub attempts: u32,
}

/// Draws random sparse physical states: `support_size` labels chosen
/// uniformly without replacement, values i.i.d. `U[-amplitude, amplitude]`,
/// redrawn until the matrix is positive semidefinite.
pub fn random_sparse_state<R: Rng + ?Sized>(
    qubits: u32,
    rng: &mut R,
    support_size: u64,
    amplitude: f64,
) -> Result<GeneratedState> {
    random_sparse_state_with_limit(qubits, rng, support_size, amplitude, DEFAULT_RETRY_LIMIT)
}

pub fn random_sparse_state_with_limit<R: Rng + ?Sized>(
    qubits: u32,
    rng: &mut R,
    support_size: u64,
    amplitude: f64,
    retry_limit: u32,
) -> Result<GeneratedState> {
    check_qubits(qubits)?;
    if !(amplitude > 0.0 && amplitude <= 1.0) {
        return Err(Error::InvalidParameter("amplitude must lie in (0, 1]"));
    }
    let available = label_count(qubits) - 1;
    if support_size > available {
        return Err(Error::SupportTooLarge { requested: support_size, available });
    }
    for attempt in 1..=retry_limit {
        let codes = floyd_sample(rng, available, support_size);
        let mut expansion = PauliExpansion::new(qubits)?;
        for code in codes {
            let label = PauliLabel::from_index(code + 2, qubits)?;
            let value = rng.gen_range(-amplitude..=amplitude);
            expansion.insert(label, value)?;
        }
        let state = DensityState::new(expansion);
        if state.min_eigenvalue_auto()? >= -PSD_TOLERANCE {
            return Ok(GeneratedState { state, attempts: attempt });
        }
    }
    Err(Error::RetryLimit(retry_limit))
}

/// `count` distinct values from `0..population`, in the order drawn.
fn floyd_sample<R: Rng + ?Sized>(rng: &mut R, population: u64, count: u64) -> alloc::vec::Vec<u64> {
    let mut seen = BTreeSet::new();
    let mut order = alloc::vec::Vec::with_capacity(count as usize);
    for j in (population - count)..population {
        let t = rng.gen_range(0..=j);
        let pick = if seen.contains(&t) { j } else { t };
        seen.insert(pick);
        order.push(pick);
    }
    order
}

impl core::fmt::Display for DensityState {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "DensityState(b={}, terms=[", self.qubits())?;
        for (i, (l, v)) in self.expansion.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}: {}", l.to_string(), v)?;
        }
        f.write_str("])")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn label(s: &str) -> PauliLabel {
        s.parse().unwrap()
    }

    #[test]
    fn coefficient_lookup() {
        let mixed = DensityState::maximally_mixed(2).unwrap();
        assert_eq!(mixed.coefficient(&label("XZ")).unwrap(), 0.0);
        assert_eq!(mixed.coefficient(&label("II")).unwrap(), 1.0);
        assert!(mixed.coefficient(&label("X")).is_err());
    }

    #[test]
    fn identity_label_rejected() {
        let mut e = PauliExpansion::new(1).unwrap();
        assert_eq!(e.insert(label("I"), 0.5), Err(Error::IdentityLabel));
    }

    #[test]
    fn dense_examples() {
        let mixed = DensityState::maximally_mixed(1).unwrap().to_dense().unwrap();
        assert_eq!(mixed.matrix()[(0, 0)].re, 0.5);
        assert_eq!(mixed.matrix()[(1, 1)].re, 0.5);
        let up = DensityState::new(PauliExpansion::from_terms(1, [(label("Z"), 1.0)]).unwrap());
        let m = up.to_dense().unwrap();
        assert_eq!(m.matrix()[(0, 0)].re, 1.0);
        assert_eq!(m.matrix()[(1, 1)].re, 0.0);
        assert_eq!(up.min_eigenvalue(EigenMethod::Dense).unwrap(), 0.0);
    }

    #[test]
    fn from_dense_pure_state() {
        let mut m = DMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
        m[(0, 0)] = Complex64::new(1.0, 0.0);
        let s = DensityState::from_dense(&DenseHermitian::new(m).unwrap()).unwrap();
        assert_eq!(s.expansion().len(), 1);
        assert!((s.coefficient(&label("Z")).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn from_dense_maximally_mixed_is_empty() {
        let m = DMatrix::<Complex64>::identity(4, 4) / Complex64::new(4.0, 0.0);
        let s = DensityState::from_dense(&DenseHermitian::new(m).unwrap()).unwrap();
        assert!(s.expansion().is_empty());
    }

    #[test]
    fn from_dense_wrong_trace() {
        let m = DMatrix::<Complex64>::identity(2, 2);
        let err = DensityState::from_dense(&DenseHermitian::new(m).unwrap()).unwrap_err();
        assert!(matches!(err, Error::WrongTrace(_)));
    }

    #[test]
    fn min_eigenvalue_mixed() {
        let s = DensityState::maximally_mixed(2).unwrap();
        assert_eq!(s.min_eigenvalue(EigenMethod::Dense).unwrap(), 0.25);
        assert_eq!(s.min_eigenvalue(EigenMethod::Iterative).unwrap(), 0.25);
    }

    #[test]
    fn sparsity_norm_examples() {
        let s = DensityState::new(
            PauliExpansion::from_terms(1, [(label("X"), 0.2), (label("Z"), -0.1)]).unwrap(),
        );
        assert_eq!(s.sparsity_norm(0.0), 2.0);
        let expected = libm::sqrt(0.2) + libm::sqrt(0.1);
        assert!((s.sparsity_norm(0.5) - expected).abs() < 1e-15);
        assert!((s.sparsity_norm(0.5) - 0.76344).abs() < 1e-5);
        assert_eq!(DensityState::maximally_mixed(3).unwrap().sparsity_norm(0.3), 0.0);
        let model = SparsityModel::new(0.0, 2.0).unwrap();
        assert!(model.contains(&s));
        assert!(SparsityModel::new(1.0, 2.0).is_err());
    }

    #[test]
    fn support_rule() {
        assert_eq!(SupportRule::default().support_size(5), 20);
        assert_eq!(SupportRule::default().support_size(6), 24);
        assert_eq!(SupportRule::default().support_size(7), 29);
        let ten = SupportRule { base: LogBase::Ten, ..SupportRule::default() };
        assert_eq!(ten.support_size(5), 9);
    }

    #[test]
    fn empty_support_accepted_immediately() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_sparse_state(1, &mut rng, 0, 0.2).unwrap();
        assert_eq!(g.attempts, 1);
        assert!(g.state.expansion().is_empty());
    }

    #[test]
    fn generated_state_protocol_defaults() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_sparse_state(5, &mut rng, 20, 0.2).unwrap();
        assert_eq!(g.state.expansion().len(), 20);
        assert!(g.state.expansion().iter().all(|(_, v)| v.abs() <= 0.2));
        assert!(g.state.min_eigenvalue(EigenMethod::Dense).unwrap() >= -PSD_TOLERANCE);
    }

    #[test]
    fn generation_is_seeded() {
        let a = random_sparse_state(4, &mut ChaCha8Rng::seed_from_u64(5), 10, 0.2).unwrap();
        let b = random_sparse_state(4, &mut ChaCha8Rng::seed_from_u64(5), 10, 0.2).unwrap();
        let c = random_sparse_state(4, &mut ChaCha8Rng::seed_from_u64(6), 10, 0.2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.state, c.state);
    }

    #[test]
    fn generation_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            random_sparse_state(1, &mut rng, 4, 0.2),
            Err(Error::SupportTooLarge { .. })
        ));
        assert!(random_sparse_state(1, &mut rng, 1, 0.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut failures = 0;
        for _ in 0..20 {
            match random_sparse_state_with_limit(2, &mut rng, 15, 1.0, 1) {
                Err(Error::RetryLimit(1)) => failures += 1,
                Err(e) => panic!("unexpected error {e}"),
                Ok(_) => {}
            }
        }
        assert!(failures > 0);
    }
}
