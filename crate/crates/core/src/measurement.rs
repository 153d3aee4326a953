//! Pauli measurement counts and their exact binomial simulation.
//!
//! Measuring `B_j` on `n` copies yields `+1` with probability `(1 + β_j)/2`,
//! so the `+1` count is `Binomial(n, (1 + β_j)/2)` and
//! `N_j = 2·count/n - 1` is an unbiased estimate of `β_j` with variance
//! `(1 - β_j²)/n`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::density::DensityState;
use crate::error::{Error, Result};
use crate::pauli::{self, check_qubits, PauliLabel};
use crate::seed::mix_seed;

/// Per-observable `+1` counts out of `shots` measurements each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementRecord {
    qubits: u32,
    shots: u64,
    counts: BTreeMap<PauliLabel, u64>,
}

impl MeasurementRecord {
    pub fn new(qubits: u32, shots: u64) -> Result<Self> {
        check_qubits(qubits)?;
        if shots == 0 {
            return Err(Error::InvalidParameter("shots must be at least 1"));
        }
        Ok(Self { qubits, shots, counts: BTreeMap::new() })
    }

    /// Records the `+1` count of one observable, replacing any earlier value.
    pub fn insert(&mut self, label: PauliLabel, count: u64) -> Result<()> {
        if label.qubits() != self.qubits {
            return Err(Error::QubitMismatch { left: self.qubits, right: label.qubits() });
        }
        if label.is_identity() {
            return Err(Error::IdentityLabel);
        }
        if count > self.shots {
            return Err(Error::CountExceedsShots {
                label: label.to_word(),
                count,
                shots: self.shots,
            });
        }
        self.counts.insert(label, count);
        Ok(())
    }

    pub fn qubits(&self) -> u32 {
        self.qubits
    }

    pub fn shots(&self) -> u64 {
        self.shots
    }

    pub fn dim(&self) -> usize {
        1usize << self.qubits
    }

    pub fn count(&self, label: &PauliLabel) -> Option<u64> {
        self.counts.get(label).copied()
    }

    /// Measured labels in index order.
    pub fn iter(&self) -> impl Iterator<Item = (&PauliLabel, &u64)> + '_ {
        self.counts.iter()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `N_j = 2·count_j/n - 1` for every measured label.
    pub fn averages(&self) -> AverageOutcomes {
        let n = self.shots as f64;
        AverageOutcomes {
            values: self
                .counts
                .iter()
                .map(|(l, &c)| (*l, 2.0 * c as f64 / n - 1.0))
                .collect(),
        }
    }
}

/// Empirical means `N_j ∈ [-1, 1]` of the `±1` outcomes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AverageOutcomes {
    values: BTreeMap<PauliLabel, f64>,
}

impl AverageOutcomes {
    pub fn get(&self, label: &PauliLabel) -> Option<f64> {
        self.values.get(label).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PauliLabel, &f64)> + '_ {
        self.values.iter()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Every non-identity label of a `b`-qubit system, in index order.
pub fn all_nonidentity_labels(qubits: u32) -> Result<Vec<PauliLabel>> {
    check_qubits(qubits)?;
    // 4^b - 1 entries must be addressable
    if qubits > (usize::BITS / 2).min(pauli::MAX_QUBITS) - 1 {
        return Err(Error::QubitCount(qubits));
    }
    Ok(pauli::nonidentity_labels(qubits)?.collect())
}

/// Draws a binomial count for each requested label.
///
/// One master value is taken from `rng`; each label then gets its own
/// generator seeded from `(master, label index)`, so the counts do not
/// depend on the order, multiplicity, or partitioning of `labels`.
pub fn sample_measurements<R: Rng + ?Sized>(
    state: &DensityState,
    shots: u64,
    labels: &[PauliLabel],
    rng: &mut R,
) -> Result<MeasurementRecord> {
    let master = rng.next_u64();
    let mut record = MeasurementRecord::new(state.qubits(), shots)?;
    let mut ordered: Vec<PauliLabel> = labels.to_vec();
    ordered.sort_unstable();
    ordered.dedup();
    for label in ordered {
        if label.is_identity() {
            return Err(Error::IdentityLabel);
        }
        let beta = state.coefficient(&label)?;
        let count = draw_count(master, &label, beta, shots)?;
        record.insert(label, count)?;
    }
    Ok(record)
}

/// The `+1` count for one label, from its own derived stream.
pub fn draw_count(master: u64, label: &PauliLabel, beta: f64, shots: u64) -> Result<u64> {
    let p = plus_probability(label, beta)?;
    let mut stream = ChaCha8Rng::seed_from_u64(mix_seed(&[master, label.index()]));
    let dist = Binomial::new(shots, p).map_err(|_| Error::InvalidParameter("binomial parameters"))?;
    Ok(dist.sample(&mut stream))
}

fn plus_probability(label: &PauliLabel, beta: f64) -> Result<f64> {
    const SLACK: f64 = 1e-12;
    if !beta.is_finite() || beta.abs() > 1.0 + SLACK {
        return Err(Error::Unphysical { label: label.to_word(), value: beta });
    }
    Ok(((1.0 + beta) / 2.0).clamp(0.0, 1.0))
}

/// Counts set to the rounded expectation `n(1 + β_j)/2`; a noise-free stand-in
/// for very large `n`.
pub fn expected_record(
    state: &DensityState,
    shots: u64,
    labels: &[PauliLabel],
) -> Result<MeasurementRecord> {
    let mut record = MeasurementRecord::new(state.qubits(), shots)?;
    for label in labels {
        let p = plus_probability(label, state.coefficient(label)?)?;
        record.insert(*label, libm::round(p * shots as f64) as u64)?;
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::PauliExpansion;

    fn label(s: &str) -> PauliLabel {
        s.parse().unwrap()
    }

    #[test]
    fn averages_arithmetic() {
        let mut r = MeasurementRecord::new(2, 200).unwrap();
        r.insert(label("XI"), 137).unwrap();
        r.insert(label("ZZ"), 200).unwrap();
        r.insert(label("YX"), 0).unwrap();
        let a = r.averages();
        assert!((a.get(&label("XI")).unwrap() - 0.37).abs() < 1e-15);
        assert_eq!(a.get(&label("ZZ")), Some(1.0));
        assert_eq!(a.get(&label("YX")), Some(-1.0));
        assert_eq!(a.get(&label("IZ")), None);
    }

    #[test]
    fn record_validation() {
        let mut r = MeasurementRecord::new(1, 200).unwrap();
        assert!(matches!(r.insert(label("X"), 201), Err(Error::CountExceedsShots { .. })));
        assert_eq!(r.insert(label("I"), 3), Err(Error::IdentityLabel));
        assert!(MeasurementRecord::new(1, 0).is_err());
    }

    #[test]
    fn degenerate_binomial() {
        let s = DensityState::new(PauliExpansion::from_terms(1, [(label("Z"), 1.0)]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = sample_measurements(&s, 500, &[label("Z")], &mut rng).unwrap();
        assert_eq!(r.count(&label("Z")), Some(500));
        assert_eq!(r.averages().get(&label("Z")), Some(1.0));
    }

    #[test]
    fn identity_and_unphysical_rejected() {
        let s = DensityState::new(PauliExpansion::from_terms(1, [(label("X"), 1.5)]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            sample_measurements(&s, 10, &[label("I")], &mut rng),
            Err(Error::IdentityLabel)
        );
        assert!(matches!(
            sample_measurements(&s, 10, &[label("X")], &mut rng),
            Err(Error::Unphysical { .. })
        ));
    }

    #[test]
    fn label_order_does_not_matter() {
        let s = DensityState::new(
            PauliExpansion::from_terms(2, [(label("XY"), 0.3), (label("ZI"), -0.2)]).unwrap(),
        );
        let mut labels = all_nonidentity_labels(2).unwrap();
        let a = sample_measurements(&s, 100, &labels, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        labels.reverse();
        let b = sample_measurements(&s, 100, &labels, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        // a subset sees the same counts as the full run
        let c = sample_measurements(&s, 100, &labels[3..7], &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        for (l, n) in c.iter() {
            assert_eq!(a.count(l), Some(*n));
        }
    }

    #[test]
    fn enumeration_sizes() {
        assert_eq!(all_nonidentity_labels(1).unwrap().len(), 3);
        assert_eq!(all_nonidentity_labels(2).unwrap().len(), 15);
        let three = all_nonidentity_labels(3).unwrap();
        assert_eq!(three.len(), 63);
        assert_eq!(three[0].to_word(), "IIX");
        assert!(all_nonidentity_labels(40).is_err());
    }

    #[test]
    fn zero_coefficient_moments() {
        let s = DensityState::maximally_mixed(1).unwrap();
        let n = 100_000u64;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let reps = 10_000;
        let draws: Vec<f64> = (0..reps)
            .map(|_| {
                let r = sample_measurements(&s, n, &[label("X")], &mut rng).unwrap();
                r.averages().get(&label("X")).unwrap()
            })
            .collect();
        let bound = 4.0 * libm::sqrt(1.0 / n as f64);
        assert!(draws[0].abs() <= bound);
        let mean = draws.iter().sum::<f64>() / reps as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (reps - 1) as f64;
        assert!((var * n as f64 - 1.0).abs() < 0.1, "variance ratio {}", var * n as f64);
    }
}
