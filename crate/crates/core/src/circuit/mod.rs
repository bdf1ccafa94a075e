//! Emulation of the sampling-oracle construction and the reversible
//! arithmetic behind the gradient oracles.
//!
//! Two paths produce `(ξ, w)` samples. [`StateVector`] holds every amplitude
//! and is exact but limited to [`MAX_STATEVECTOR_QUBITS`]; [`pipeline_sample`]
//! draws the measured bitstrings directly and has the same output
//! distribution at any size. [`emulate_u_g`] and [`emulate_v_g`] run the
//! two-point estimator through fixed-point registers.

mod fixed;
mod pipeline;
mod statevector;

pub use fixed::Fixed;
pub use pipeline::{
    emulate_u_g, emulate_v_g, fixed_point_bound, pipeline_distribution, pipeline_sample,
    pipeline_sample_valid, pipeline_sample_with, PipelineOutput, ValidSample,
};
pub use statevector::{measure_sample, BornSampler, StateVector};

use crate::error::{Error, Result};
use crate::stats::{chi_square_uniform, ks_uniform, total_variation, TestOutcome};
use rand::Rng;
use std::collections::BTreeMap;

/// Largest register the amplitude-vector simulator accepts.
pub const MAX_STATEVECTOR_QUBITS: usize = 22;
/// Width of the emulated arithmetic registers.
pub const REGISTER_BITS: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegisterLayout {
    pub m1: usize,
    pub m2: usize,
    pub d: usize,
    pub frac_bits: u32,
}

impl RegisterLayout {
    pub fn new(m1: usize, m2: usize, d: usize) -> Result<Self> {
        if m1 == 0 || m1 > 63 {
            return Err(Error::param("m1", "must lie in 1..=63"));
        }
        if m2 == 0 {
            return Err(Error::param("m2", "must be at least 1"));
        }
        if d == 0 {
            return Err(Error::ZeroDimension);
        }
        Ok(Self {
            m1,
            m2,
            d,
            frac_bits: 32,
        })
    }

    pub fn with_frac_bits(mut self, frac_bits: u32) -> Result<Self> {
        if frac_bits == 0 || frac_bits >= REGISTER_BITS - 2 {
            return Err(Error::param("frac_bits", "must lie in 1..=61"));
        }
        self.frac_bits = frac_bits;
        Ok(self)
    }

    /// Qubits in the ξ register plus the coordinate registers.
    pub fn total_qubits(&self) -> usize {
        self.m1 + self.d * self.m2
    }

    pub fn check_statevector(&self) -> Result<()> {
        let qubits = self.total_qubits();
        if qubits > MAX_STATEVECTOR_QUBITS {
            return Err(Error::RegisterTooLarge {
                qubits,
                limit: MAX_STATEVECTOR_QUBITS,
            });
        }
        Ok(())
    }
}

/// Map from the `m₂` bits of one coordinate register to a real value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HForm {
    /// `(2Σb − m₂)/√m₂`: zero mean, unit variance.
    #[default]
    Corrected,
    /// `2Σb − √m₂`, kept for comparison; it is not centred.
    Verbatim,
}

pub(crate) fn h_from_count(ones: u32, m2: usize, form: HForm) -> f64 {
    let m = m2 as f64;
    match form {
        HForm::Corrected => (2.0 * ones as f64 - m) / m.sqrt(),
        HForm::Verbatim => 2.0 * ones as f64 - m.sqrt(),
    }
}

pub fn h_standardize(bits: &[bool]) -> f64 {
    h_standardize_with(bits, HForm::Corrected)
}

pub fn h_standardize_with(bits: &[bool], form: HForm) -> f64 {
    let ones = bits.iter().filter(|b| **b).count() as u32;
    h_from_count(ones, bits.len(), form)
}

/// A decoded measurement.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Valid { xi: u64, w: Vec<f64> },
    /// Every coordinate register mapped to zero, so `w′ = 0` cannot be normalized.
    Invalid { xi: u64 },
}

impl Outcome {
    pub fn xi(&self) -> u64 {
        match self {
            Outcome::Valid { xi, .. } | Outcome::Invalid { xi } => *xi,
        }
    }

    /// A hashable identity: `w` rounded to 10⁻⁹.
    pub fn key(&self) -> OutcomeKey {
        match self {
            Outcome::Valid { xi, w } => OutcomeKey {
                xi: *xi,
                w: Some(w.iter().map(|v| (v * 1e9).round() as i64).collect()),
            },
            Outcome::Invalid { xi } => OutcomeKey { xi: *xi, w: None },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OutcomeKey {
    pub xi: u64,
    pub w: Option<Vec<i64>>,
}

/// Builds the outcome from the per-coordinate popcounts.
pub(crate) fn decode_counts(xi: u64, counts: &[u32], m2: usize, form: HForm) -> Outcome {
    let h: Vec<f64> = counts.iter().map(|c| h_from_count(*c, m2, form)).collect();
    let n = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n == 0.0 {
        Outcome::Invalid { xi }
    } else {
        Outcome::Valid {
            xi,
            w: h.into_iter().map(|v| v / n).collect(),
        }
    }
}

/// Statistics printed by the `circuit-demo` command.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitDemoReport {
    pub layout: RegisterLayout,
    pub samples: usize,
    pub rejections: u64,
    pub rejection_rate: f64,
    /// χ² test of uniform `ξ` (only when `m1 ≤ 16`).
    pub xi_uniformity: Option<TestOutcome>,
    /// KS test of the last coordinate of `w` against `U[−1, 1]`; meaningful for `d = 3`.
    pub last_coordinate_uniformity: TestOutcome,
    /// Two-sample TV distance to the state-vector path when it fits.
    pub statevector_tv: Option<f64>,
}

pub fn circuit_demo<R: Rng + ?Sized>(
    layout: RegisterLayout,
    n: usize,
    rng: &mut R,
) -> Result<CircuitDemoReport> {
    if n == 0 {
        return Err(Error::param("n", "need at least one sample"));
    }
    let mut rejections = 0;
    let mut xi_counts = (layout.m1 <= 16).then(|| vec![0u64; 1 << layout.m1]);
    let mut last = Vec::with_capacity(n);
    let mut pipeline_hist: BTreeMap<OutcomeKey, u64> = BTreeMap::new();
    for _ in 0..n {
        let s = pipeline_sample_valid(&layout, HForm::Corrected, rng);
        rejections += s.rejections;
        if let Some(c) = xi_counts.as_mut() {
            c[s.xi as usize] += 1;
        }
        last.push(*s.w.as_slice().last().expect("d ≥ 1"));
        let key = Outcome::Valid {
            xi: s.xi,
            w: s.w.into_inner(),
        }
        .key();
        *pipeline_hist.entry(key).or_default() += 1;
    }
    let statevector_tv = if layout.check_statevector().is_ok() {
        let mut state = StateVector::prepare(layout)?;
        state.apply_h_and_norm()?;
        let sampler = BornSampler::new(&state);
        let mut hist: BTreeMap<OutcomeKey, u64> = BTreeMap::new();
        let mut drawn = 0;
        while drawn < n {
            let o = sampler.sample(rng);
            if matches!(o, Outcome::Valid { .. }) {
                *hist.entry(o.key()).or_default() += 1;
                drawn += 1;
            }
        }
        Some(total_variation(&pipeline_hist, &hist))
    } else {
        None
    };
    Ok(CircuitDemoReport {
        layout,
        samples: n,
        rejections,
        rejection_rate: rejections as f64 / (rejections as f64 + n as f64),
        xi_uniformity: xi_counts.map(|c| chi_square_uniform(&c)),
        last_coordinate_uniformity: ks_uniform(&last, -1.0, 1.0),
        statevector_tv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_guards() {
        assert!(RegisterLayout::new(0, 1, 1).is_err());
        assert!(RegisterLayout::new(1, 0, 1).is_err());
        assert!(RegisterLayout::new(1, 1, 0).is_err());
        let big = RegisterLayout::new(2, 8, 3).unwrap();
        assert_eq!(big.total_qubits(), 26);
        assert_eq!(
            big.check_statevector(),
            Err(Error::RegisterTooLarge {
                qubits: 26,
                limit: 22
            })
        );
        assert_eq!(RegisterLayout::new(1, 1, 1).unwrap().frac_bits, 32);
        assert!(RegisterLayout::new(1, 1, 1).unwrap().with_frac_bits(70).is_err());
    }

    #[test]
    fn h_examples() {
        assert_eq!(h_standardize(&[true, true, false, false]), 0.0);
        assert_eq!(h_standardize(&[true, true, true, true]), 2.0);
        assert_eq!(h_standardize(&[false, false, false, false]), -2.0);
        assert_eq!(h_standardize_with(&[true, true, false, false], HForm::Verbatim), 2.0);
    }

    #[test]
    fn invalid_outcomes_are_reported() {
        assert_eq!(decode_counts(1, &[1], 2, HForm::Corrected), Outcome::Invalid { xi: 1 });
        let o = decode_counts(0, &[2, 0], 2, HForm::Corrected);
        let Outcome::Valid { w, .. } = o else { panic!() };
        assert!((w[0] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((w[1] + 0.5f64.sqrt()).abs() < 1e-15);
    }
}
