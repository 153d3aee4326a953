//! Line-oriented text formats for states and measurement counts.
//!
//! ```text
//! pauli-state v1 qubits=3
//! XIZ 1.2500000000000000e-1
//! ZZY -3.0000000000000001e-2
//! ```
//!
//! ```text
//! pauli-counts v1 qubits=3 shots=200
//! XIZ 137
//! ZZY 94
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Terms are written in
//! label-index order; coefficients use 17 significant digits so that every
//! `f64` survives a write/read cycle unchanged.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use qtomo_core::{DensityState, MeasurementRecord, PauliExpansion, PauliLabel};

use crate::error::{QtomoError, Result};

pub const STATE_MAGIC: &str = "pauli-state";
pub const COUNTS_MAGIC: &str = "pauli-counts";
pub const FORMAT_VERSION: &str = "v1";

/// Formats a coefficient with 17 significant digits.
pub fn format_coefficient(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_state(state: &DensityState) -> String {
    let mut out = format!("{STATE_MAGIC} {FORMAT_VERSION} qubits={}\n", state.qubits());
    for (label, v) in state.expansion().iter() {
        out.push_str(&format!("{label} {}\n", format_coefficient(*v)));
    }
    out
}

pub fn write_record(record: &MeasurementRecord) -> String {
    let mut out = format!(
        "{COUNTS_MAGIC} {FORMAT_VERSION} qubits={} shots={}\n",
        record.qubits(),
        record.shots()
    );
    for (label, count) in record.iter() {
        out.push_str(&format!("{label} {count}\n"));
    }
    out
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses `magic v1 key=value ...`, returning the key/value pairs.
fn parse_header<'a>(
    line_no: usize,
    line: &'a str,
    magic: &str,
) -> Result<Vec<(&'a str, &'a str)>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(magic) {
        return Err(QtomoError::parse(line_no, format!("expected `{magic}` header")));
    }
    match parts.next() {
        Some(FORMAT_VERSION) => {}
        Some(other) => {
            return Err(QtomoError::parse(line_no, format!("unsupported version `{other}`")))
        }
        None => return Err(QtomoError::parse(line_no, "missing format version")),
    }
    parts
        .map(|kv| {
            kv.split_once('=')
                .ok_or_else(|| QtomoError::parse(line_no, format!("expected key=value, got `{kv}`")))
        })
        .collect()
}

fn header_value<T: std::str::FromStr>(
    pairs: &[(&str, &str)],
    key: &str,
    line_no: usize,
) -> Result<T> {
    let raw = pairs
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| QtomoError::parse(line_no, format!("header is missing `{key}`")))?;
    raw.parse()
        .map_err(|_| QtomoError::parse(line_no, format!("invalid `{key}` value `{raw}`")))
}

fn split_term(line_no: usize, line: &str) -> Result<(PauliLabel, &str)> {
    let mut parts = line.split_whitespace();
    let (word, value) = match (parts.next(), parts.next(), parts.next()) {
        (Some(w), Some(v), None) => (w, v),
        _ => return Err(QtomoError::parse(line_no, "expected `<LABEL> <value>`")),
    };
    let label = word
        .parse::<PauliLabel>()
        .map_err(|e| QtomoError::parse(line_no, format!("label `{word}`: {e}")))?;
    Ok((label, value))
}

pub fn parse_state(text: &str) -> Result<DensityState> {
    let mut lines = content_lines(text);
    let (hno, header) = lines.next().ok_or_else(|| QtomoError::parse(1, "empty state file"))?;
    let pairs = parse_header(hno, header, STATE_MAGIC)?;
    let qubits: u32 = header_value(&pairs, "qubits", hno)?;
    let mut expansion =
        PauliExpansion::new(qubits).map_err(|e| QtomoError::parse(hno, e.to_string()))?;
    for (no, line) in lines {
        let (label, raw) = split_term(no, line)?;
        let value: f64 = raw
            .parse()
            .map_err(|_| QtomoError::parse(no, format!("invalid coefficient `{raw}`")))?;
        if !value.is_finite() {
            return Err(QtomoError::parse(no, "coefficient must be finite"));
        }
        if expansion.get(&label) != 0.0 {
            return Err(QtomoError::parse(no, format!("duplicate label {label}")));
        }
        expansion.insert(label, value).map_err(|e| QtomoError::parse(no, e.to_string()))?;
    }
    Ok(DensityState::new(expansion))
}

pub fn parse_record(text: &str) -> Result<MeasurementRecord> {
    let mut lines = content_lines(text);
    let (hno, header) = lines.next().ok_or_else(|| QtomoError::parse(1, "empty counts file"))?;
    let pairs = parse_header(hno, header, COUNTS_MAGIC)?;
    let qubits: u32 = header_value(&pairs, "qubits", hno)?;
    let shots: u64 = header_value(&pairs, "shots", hno)?;
    let mut record =
        MeasurementRecord::new(qubits, shots).map_err(|e| QtomoError::parse(hno, e.to_string()))?;
    for (no, line) in lines {
        let (label, raw) = split_term(no, line)?;
        let count: u64 = raw
            .parse()
            .map_err(|_| QtomoError::parse(no, format!("invalid count `{raw}`")))?;
        if record.count(&label).is_some() {
            return Err(QtomoError::parse(no, format!("duplicate label {label}")));
        }
        record.insert(label, count).map_err(|e| QtomoError::parse(no, e.to_string()))?;
    }
    Ok(record)
}

/// Reads a file, or standard input for `-`.
pub fn read_input(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).map_err(|e| QtomoError::io(path, e))?;
        return Ok(s);
    }
    fs::read_to_string(path).map_err(|e| QtomoError::io(path, e))
}

/// Writes a file, or standard output for `-`.
pub fn write_output(path: &Path, text: &str) -> Result<()> {
    if path.as_os_str() == "-" {
        let mut out = io::stdout().lock();
        out.write_all(text.as_bytes()).map_err(|e| QtomoError::io(path, e))?;
        return out.flush().map_err(|e| QtomoError::io(path, e));
    }
    fs::write(path, text).map_err(|e| QtomoError::io(path, e))
}

pub fn load_state(path: &Path) -> Result<DensityState> {
    parse_state(&read_input(path)?)
}

pub fn save_state(state: &DensityState, path: &Path) -> Result<()> {
    write_output(path, &write_state(state))
}

pub fn load_record(path: &Path) -> Result<MeasurementRecord> {
    parse_record(&read_input(path)?)
}

pub fn save_record(record: &MeasurementRecord, path: &Path) -> Result<()> {
    write_output(path, &write_record(record))
}
