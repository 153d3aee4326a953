//! File formats, experiment harness and command-line front end for
//! sparse Pauli-basis state tomography.

pub mod cli;
pub mod error;
pub mod formats;
pub mod harness;

pub use error::{QtomoError, Result};

/// File formats this build reads and writes.
pub const FORMATS: &str = "pauli-state v1, pauli-counts v1, mse-csv v1";
