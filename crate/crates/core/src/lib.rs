//! Density-matrix estimation from Pauli measurement counts.
//!
//! A `b`-qubit state `ρ` is stored by its coefficients in the Pauli basis,
//! `ρ = (I + Σ_j β_j B_j) / d` with `d = 2^b`. Measuring each `B_j` on `n`
//! copies gives averages `N_j`; thresholding those averages (hard or soft)
//! yields a sparse estimate of `ρ`. This crate holds the algorithms and is
//! `no_std` (it needs `alloc`); file formats, the experiment harness and the
//! command line live in the `qtomo` crate.

#![no_std]

extern crate alloc;

pub mod density;
pub mod error;
pub mod estimator;
pub mod measurement;
pub mod norms;
pub mod pauli;
pub mod seed;
pub mod spectrum;

pub use density::{DensityState, GeneratedState, LogBase, PauliExpansion, SparsityModel, SupportRule};
pub use error::{Error, Result};
pub use estimator::{EstimateReport, ThresholdPolicy, ThresholdRule};
pub use measurement::{AverageOutcomes, MeasurementRecord};
pub use norms::{ErrorReport, NormKind};
pub use pauli::{DenseHermitian, PauliLabel};
pub use spectrum::EigenMethod;

pub use num_complex::Complex64;
