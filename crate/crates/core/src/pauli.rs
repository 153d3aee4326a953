//! Tensor-product Pauli operators.
//!
//! A label is a word `ℓ_1 … ℓ_b` over `{0, 1, 2, 3}` (`I, X, Y, Z`) with
//! qubit 1 as the most significant tensor factor. Labels are indexed
//! `j = 1 + Σ ℓ_k 4^{b-k}`, so the identity is `j = 1` and ordering labels
//! by index is lexicographic on the word.
//!
//! Every Pauli word is a signed, phased permutation matrix: row `r` has its
//! single nonzero in column `r ^ x_mask`, with value
//! `(-i)^{#Y} (-1)^{popcount(r & z_mask)}`. The matrix-free kernels below
//! work directly on that form.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::density::PauliExpansion;
use crate::error::{Error, Result};

/// Largest supported qubit count; keeps `4^b` representable as an index.
pub const MAX_QUBITS: u32 = 31;

/// Largest qubit count for which dense `d × d` matrices are built.
pub const DENSE_QUBIT_LIMIT: u32 = 10;

const SYMBOLS: [char; 4] = ['I', 'X', 'Y', 'Z'];

/// One tensor-product Pauli observable `σ_{ℓ1} ⊗ … ⊗ σ_{ℓb}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PauliLabel {
    qubits: u32,
    // j - 1, base-4 big-endian
    code: u64,
}

pub(crate) fn check_qubits(qubits: u32) -> Result<()> {
    if qubits == 0 || qubits > MAX_QUBITS {
        return Err(Error::QubitCount(qubits));
    }
    Ok(())
}

impl PauliLabel {
    pub fn identity(qubits: u32) -> Result<Self> {
        check_qubits(qubits)?;
        Ok(Self { qubits, code: 0 })
    }

    /// Builds a label from symbols `0 = I, 1 = X, 2 = Y, 3 = Z`, leftmost qubit first.
    pub fn from_symbols(symbols: &[u8]) -> Result<Self> {
        let qubits = u32::try_from(symbols.len()).map_err(|_| Error::QubitCount(u32::MAX))?;
        check_qubits(qubits)?;
        let mut code = 0u64;
        for &s in symbols {
            if s > 3 {
                return Err(Error::InvalidParameter("pauli symbol must be 0..=3"));
            }
            code = (code << 2) | u64::from(s);
        }
        Ok(Self { qubits, code })
    }

    /// Inverse of [`PauliLabel::index`].
    pub fn from_index(index: u64, qubits: u32) -> Result<Self> {
        check_qubits(qubits)?;
        let count = label_count(qubits);
        if index == 0 || index > count {
            return Err(Error::IndexOutOfRange { index, qubits });
        }
        Ok(Self { qubits, code: index - 1 })
    }

    /// One-based basis index `j ∈ [1, 4^b]`.
    pub fn index(&self) -> u64 {
        self.code + 1
    }

    pub fn qubits(&self) -> u32 {
        self.qubits
    }

    /// Hilbert-space dimension `d = 2^b`.
    pub fn dim(&self) -> usize {
        1usize << self.qubits
    }

    pub fn is_identity(&self) -> bool {
        self.code == 0
    }

    /// Symbol of qubit `k` (zero-based, leftmost first).
    pub fn symbol(&self, k: u32) -> u8 {
        debug_assert!(k < self.qubits);
        ((self.code >> (2 * (self.qubits - 1 - k))) & 3) as u8
    }

    pub fn symbols(&self) -> Vec<u8> {
        (0..self.qubits).map(|k| self.symbol(k)).collect()
    }

    /// Bit pattern flipped by the operator (X or Y factors).
    pub fn x_mask(&self) -> usize {
        self.masks().0
    }

    /// Bit pattern picking up a sign (Y or Z factors).
    pub fn z_mask(&self) -> usize {
        self.masks().1
    }

    fn masks(&self) -> (usize, usize) {
        let (mut x, mut z) = (0usize, 0usize);
        for bit in 0..self.qubits {
            let s = (self.code >> (2 * bit)) & 3;
            if s == 1 || s == 2 {
                x |= 1 << bit;
            }
            if s == 2 || s == 3 {
                z |= 1 << bit;
            }
        }
        (x, z)
    }

    /// Number of Y factors.
    pub fn y_count(&self) -> u32 {
        (0..self.qubits).filter(|&k| self.symbol(k) == 2).count() as u32
    }

    /// Global phase `(-i)^{#Y}` of the nonzero entries.
    fn phase(&self) -> Complex64 {
        match self.y_count() % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, -1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, 1.0),
        }
    }
}

pub(crate) fn pauli_matvec_entry_phase(label: &PauliLabel) -> Complex64 {
    label.phase()
}

impl fmt::Display for PauliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in 0..self.qubits {
            write!(f, "{}", SYMBOLS[self.symbol(k) as usize])?;
        }
        Ok(())
    }
}

impl FromStr for PauliLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let symbols = s
            .chars()
            .map(|c| match c {
                'I' => Ok(0),
                'X' => Ok(1),
                'Y' => Ok(2),
                'Z' => Ok(3),
                other => Err(Error::InvalidSymbol(other)),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::from_symbols(&symbols)
    }
}

impl PauliLabel {
    pub fn to_word(&self) -> String {
        alloc::format!("{self}")
    }
}

/// `4^b`, the size of the Pauli basis.
pub fn label_count(qubits: u32) -> u64 {
    if qubits >= 32 {
        u64::MAX
    } else {
        1u64 << (2 * qubits)
    }
}

/// Computes `B_j v`.
pub fn pauli_matvec(label: &PauliLabel, v: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
    accumulate_pauli(label, Complex64::new(1.0, 0.0), v, &mut out)?;
    Ok(out)
}

/// `out += weight · B_j v`, the shared kernel of every matrix-free product.
pub fn accumulate_pauli(
    label: &PauliLabel,
    weight: Complex64,
    v: &[Complex64],
    out: &mut [Complex64],
) -> Result<()> {
    let d = label.dim();
    if v.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: v.len() });
    }
    if out.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: out.len() });
    }
    let (x, z) = label.masks();
    let w = weight * label.phase();
    for (row, slot) in out.iter_mut().enumerate() {
        let term = w * v[row ^ x];
        if (row & z).count_ones() & 1 == 1 {
            *slot -= term;
        } else {
            *slot += term;
        }
    }
    Ok(())
}

/// Computes `scale · Σ_j c_j B_j v` for the stored terms of `coeffs`.
pub fn expansion_matvec(
    coeffs: &PauliExpansion,
    scale: f64,
    v: &[Complex64],
) -> Result<Vec<Complex64>> {
    let d = coeffs.dim();
    if v.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: v.len() });
    }
    let mut out = vec![Complex64::new(0.0, 0.0); d];
    for (label, &c) in coeffs.iter() {
        accumulate_pauli(label, Complex64::new(c * scale, 0.0), v, &mut out)?;
    }
    Ok(out)
}

/// Explicit `d × d` matrix of a Pauli word.
pub fn pauli_dense(label: &PauliLabel) -> Result<DenseHermitian> {
    check_dense(label.qubits)?;
    let d = label.dim();
    let mut m = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
    add_pauli_dense(&mut m, label, Complex64::new(1.0, 0.0));
    Ok(DenseHermitian(m))
}

pub(crate) fn check_dense(qubits: u32) -> Result<()> {
    if qubits > DENSE_QUBIT_LIMIT {
        return Err(Error::DenseLimit { qubits, limit: DENSE_QUBIT_LIMIT });
    }
    Ok(())
}

/// `m += weight · B_j`.
pub(crate) fn add_pauli_dense(m: &mut DMatrix<Complex64>, label: &PauliLabel, weight: Complex64) {
    let (x, z) = label.masks();
    let w = weight * label.phase();
    for row in 0..m.nrows() {
        let col = row ^ x;
        if (row & z).count_ones() & 1 == 1 {
            m[(row, col)] -= w;
        } else {
            m[(row, col)] += w;
        }
    }
}

/// `tr(B_a B_b)`, which is `d` for equal labels and zero otherwise.
pub fn trace_product(a: &PauliLabel, b: &PauliLabel) -> Result<f64> {
    if a.qubits != b.qubits {
        return Err(Error::QubitMismatch { left: a.qubits, right: b.qubits });
    }
    Ok(if a == b { a.dim() as f64 } else { 0.0 })
}

/// Iterates over the `4^b - 1` non-identity labels in index order.
pub fn nonidentity_labels(qubits: u32) -> Result<impl Iterator<Item = PauliLabel>> {
    check_qubits(qubits)?;
    Ok((1..label_count(qubits)).map(move |code| PauliLabel { qubits, code }))
}

/// An explicit Hermitian matrix, used as the dense reference representation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHermitian(DMatrix<Complex64>);

/// Absolute Hermitian-symmetry tolerance for [`DenseHermitian::new`].
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

impl DenseHermitian {
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        let d = m.nrows();
        if d == 0 || !d.is_power_of_two() {
            return Err(Error::InvalidParameter("matrix dimension must be a power of two"));
        }
        let asym = hermitian_defect(&m);
        if asym > HERMITIAN_TOLERANCE {
            return Err(Error::NotHermitian(asym));
        }
        Ok(Self(m))
    }

    pub(crate) fn from_trusted(m: DMatrix<Complex64>) -> Self {
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn qubits(&self) -> u32 {
        self.dim().trailing_zeros()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        crate::spectrum::hermitian_eigenvalues(&self.0)
    }
}

/// Largest `|m_ij - conj(m_ji)|`.
pub fn hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn index_examples() {
        assert_eq!(PauliLabel::from_symbols(&[0, 0]).unwrap().index(), 1);
        assert_eq!(PauliLabel::from_symbols(&[0, 1]).unwrap().index(), 2);
        assert_eq!(PauliLabel::from_index(1, 3).unwrap().symbols(), vec![0, 0, 0]);
        assert_eq!(PauliLabel::from_index(16, 2).unwrap().symbols(), vec![3, 3]);
        assert_eq!(PauliLabel::from_index(5, 2).unwrap().symbols(), vec![1, 0]);
        for j in 1..=16 {
            let l = PauliLabel::from_index(j, 2).unwrap();
            assert_eq!(PauliLabel::from_symbols(&l.symbols()).unwrap().index(), j);
        }
    }

    #[test]
    fn index_out_of_range() {
        assert!(matches!(PauliLabel::from_index(0, 2), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(PauliLabel::from_index(17, 2), Err(Error::IndexOutOfRange { .. })));
        assert!(PauliLabel::from_index(1, 0).is_err());
    }

    #[test]
    fn text_roundtrip() {
        let l: PauliLabel = "XZIY".parse().unwrap();
        assert_eq!(l.symbols(), vec![1, 3, 0, 2]);
        assert_eq!(l.to_word(), "XZIY");
        assert_eq!("xz".parse::<PauliLabel>(), Err(Error::InvalidSymbol('x')));
        assert!("".parse::<PauliLabel>().is_err());
    }

    #[test]
    fn single_qubit_matvec() {
        let x = PauliLabel::from_symbols(&[1]).unwrap();
        let y = PauliLabel::from_symbols(&[2]).unwrap();
        let v = [c(1.0, 0.0), c(0.0, 0.0)];
        assert_eq!(pauli_matvec(&x, &v).unwrap(), vec![c(0.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(pauli_matvec(&y, &v).unwrap(), vec![c(0.0, 0.0), c(0.0, 1.0)]);
        assert!(matches!(
            pauli_matvec(&x, &[c(1.0, 0.0)]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn dense_single_qubit() {
        let i = pauli_dense(&PauliLabel::from_symbols(&[0]).unwrap()).unwrap();
        assert_eq!(i.matrix(), &DMatrix::<Complex64>::identity(2, 2));
        let z = pauli_dense(&PauliLabel::from_symbols(&[3]).unwrap()).unwrap();
        assert_eq!(z.matrix()[(0, 0)], c(1.0, 0.0));
        assert_eq!(z.matrix()[(1, 1)], c(-1.0, 0.0));
        assert_eq!(z.matrix()[(0, 1)], c(0.0, 0.0));
    }

    #[test]
    fn dense_limit() {
        let l = PauliLabel::identity(11).unwrap();
        assert!(matches!(pauli_dense(&l), Err(Error::DenseLimit { .. })));
    }

    #[test]
    fn trace_product_examples() {
        let a = PauliLabel::from_symbols(&[1, 2]).unwrap();
        assert_eq!(trace_product(&a, &a).unwrap(), 4.0);
        let x1 = PauliLabel::from_symbols(&[1, 0]).unwrap();
        let x2 = PauliLabel::from_symbols(&[0, 1]).unwrap();
        assert_eq!(trace_product(&x1, &x2).unwrap(), 0.0);
        let short = PauliLabel::from_symbols(&[1]).unwrap();
        assert!(trace_product(&a, &short).is_err());
    }

    #[test]
    fn label_enumeration() {
        let all: Vec<_> = nonidentity_labels(3).unwrap().collect();
        assert_eq!(all.len(), 63);
        assert_eq!(all[0].to_word(), "IIX");
        assert_eq!(nonidentity_labels(1).unwrap().count(), 3);
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut m = DMatrix::from_element(2, 2, c(0.0, 0.0));
        m[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(DenseHermitian::new(m), Err(Error::NotHermitian(_))));
    }
}
