use thiserror::Error;

/// Failures raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("qubit count {0} is outside the supported range 1..={max}", max = crate::pauli::MAX_QUBITS)]
    QubitCount(u32),
    #[error("pauli index {index} is out of range 1..=4^{qubits}")]
    IndexOutOfRange { index: u64, qubits: u32 },
    #[error("invalid pauli symbol {0:?}, expected one of I, X, Y, Z")]
    InvalidSymbol(char),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("qubit count mismatch: {left} vs {right}")]
    QubitMismatch { left: u32, right: u32 },
    #[error("dense path limited to {limit} qubits, requested {qubits}")]
    DenseLimit { qubits: u32, limit: u32 },
    #[error("identity label is not a free coefficient")]
    IdentityLabel,
    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("matrix trace {0} differs from 1")]
    WrongTrace(f64),
    #[error("coefficient {value} on {label} has magnitude above 1")]
    Unphysical { label: alloc::string::String, value: f64 },
    #[error("no positive semidefinite state after {0} attempts")]
    RetryLimit(u32),
    #[error("support size {requested} exceeds the {available} non-identity labels")]
    SupportTooLarge { requested: u64, available: u64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("count {count} exceeds shots {shots} for {label}")]
    CountExceedsShots { label: alloc::string::String, count: u64, shots: u64 },
    #[error("eigensolver did not converge after {iterations} iterations (best {best}, residual {residual:e})")]
    NoConvergence { iterations: usize, best: f64, residual: f64 },
    #[error("optimal-grid policy needs the true state; use the grid search instead")]
    GridPolicyNeedsTruth,
    #[error("no replicate records supplied")]
    EmptyRecords,
}

pub type Result<T> = core::result::Result<T, Error>;
