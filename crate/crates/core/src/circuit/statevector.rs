use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;

use super::{decode_counts, HForm, Outcome, OutcomeKey, RegisterLayout};
use crate::error::{Error, Result};

/// Amplitudes over the ξ register (low `m1` bits) and the `d` coordinate
/// registers of `m2` bits each.
///
/// The h, norm and divide stages are reversible classical maps
/// `|s⟩|0⟩ ↦ |s⟩|h(s)⟩|‖h‖⟩|w⟩`. They permute basis states without touching
/// amplitudes, so the ancilla registers are not stored: each basis index is
/// decoded to its ancilla contents on measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
    layout: RegisterLayout,
    form: HForm,
    normalized: bool,
    invalid_probability: Option<f64>,
}

impl StateVector {
    /// `|0…0⟩` followed by a Hadamard on every qubit.
    pub fn prepare(layout: RegisterLayout) -> Result<Self> {
        Self::prepare_with(layout, HForm::Corrected)
    }

    pub fn prepare_with(layout: RegisterLayout, form: HForm) -> Result<Self> {
        let mut s = Self::basis(layout, 0)?;
        s.form = form;
        for q in 0..layout.total_qubits() {
            s.apply_hadamard(q);
        }
        Ok(s)
    }

    pub fn basis(layout: RegisterLayout, index: usize) -> Result<Self> {
        layout.check_statevector()?;
        let len = 1usize << layout.total_qubits();
        if index >= len {
            return Err(Error::param("index", "basis index outside the register"));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); len];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(Self {
            amplitudes,
            layout,
            form: HForm::Corrected,
            normalized: false,
            invalid_probability: None,
        })
    }

    pub fn from_amplitudes(layout: RegisterLayout, amplitudes: Vec<Complex64>) -> Result<Self> {
        layout.check_statevector()?;
        if amplitudes.len() != 1usize << layout.total_qubits() {
            return Err(Error::DimensionMismatch {
                expected: 1 << layout.total_qubits(),
                actual: amplitudes.len(),
            });
        }
        let s = Self {
            amplitudes,
            layout,
            form: HForm::Corrected,
            normalized: false,
            invalid_probability: None,
        };
        if (s.norm_sq() - 1.0).abs() > 1e-10 {
            return Err(Error::param("amplitudes", "state must have unit norm"));
        }
        Ok(s)
    }

    pub fn layout(&self) -> RegisterLayout {
        self.layout
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn apply_hadamard(&mut self, qubit: usize) {
        let bit = 1usize << qubit;
        for i in 0..self.amplitudes.len() {
            if i & bit == 0 {
                let (a, b) = (self.amplitudes[i], self.amplitudes[i | bit]);
                self.amplitudes[i] = (a + b) * FRAC_1_SQRT_2;
                self.amplitudes[i | bit] = (a - b) * FRAC_1_SQRT_2;
            }
        }
    }

    pub fn apply_x(&mut self, qubit: usize) {
        let bit = 1usize << qubit;
        for i in 0..self.amplitudes.len() {
            if i & bit == 0 {
                self.amplitudes.swap(i, i | bit);
            }
        }
    }

    /// Runs the h, norm and divide stages and records the weight of invalid outcomes.
    pub fn apply_h_and_norm(&mut self) -> Result<()> {
        let mut invalid = 0.0;
        for (i, a) in self.amplitudes.iter().enumerate() {
            if matches!(self.decode(i), Outcome::Invalid { .. }) {
                invalid += a.norm_sqr();
            }
        }
        self.normalized = true;
        self.invalid_probability = Some(invalid);
        Ok(())
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Probability that a measurement lands on `w′ = 0`.
    pub fn invalid_probability(&self) -> Option<f64> {
        self.invalid_probability
    }

    pub fn decode(&self, index: usize) -> Outcome {
        let l = &self.layout;
        let xi = (index & ((1usize << l.m1) - 1)) as u64;
        let counts: Vec<u32> = (0..l.d)
            .map(|k| {
                let shift = l.m1 + k * l.m2;
                ((index >> shift) & ((1usize << l.m2) - 1)).count_ones()
            })
            .collect();
        decode_counts(xi, &counts, l.m2, self.form)
    }

    /// Born probabilities aggregated by decoded outcome.
    pub fn outcome_distribution(&self) -> BTreeMap<OutcomeKey, f64> {
        let mut out = BTreeMap::new();
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            if p > 0.0 {
                *out.entry(self.decode(i).key()).or_insert(0.0) += p;
            }
        }
        out
    }
}

/// Inverse-CDF sampler over basis states.
#[derive(Debug, Clone)]
pub struct BornSampler<'a> {
    state: &'a StateVector,
    cdf: Vec<f64>,
}

impl<'a> BornSampler<'a> {
    pub fn new(state: &'a StateVector) -> Self {
        let mut acc = 0.0;
        let cdf = state
            .amplitudes
            .iter()
            .map(|a| {
                acc += a.norm_sqr();
                acc
            })
            .collect();
        Self { state, cdf }
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().expect("non-empty state");
        let u = rng.random::<f64>() * total;
        self.cdf.partition_point(|c| *c <= u).min(self.cdf.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Outcome {
        self.state.decode(self.sample_index(rng))
    }
}

/// One measurement of all registers.
pub fn measure_sample<R: Rng + ?Sized>(state: &StateVector, rng: &mut R) -> Outcome {
    BornSampler::new(state).sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;

    #[test]
    fn prepare_is_uniform() {
        let l = RegisterLayout::new(1, 1, 1).unwrap();
        let s = StateVector::prepare(l).unwrap();
        assert_eq!(s.amplitudes().len(), 4);
        for a in s.amplitudes() {
            assert!((a.re - 0.5).abs() < 1e-15 && a.im == 0.0);
        }
        assert!((s.norm_sq() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn xi_register_is_uniform() {
        let l = RegisterLayout::new(2, 1, 1).unwrap();
        let s = StateVector::prepare(l).unwrap();
        let mut p = [0.0; 4];
        for (i, a) in s.amplitudes().iter().enumerate() {
            p[s.decode(i).xi() as usize] += a.norm_sqr();
        }
        for v in p {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn gates_preserve_norm() {
        let l = RegisterLayout::new(2, 3, 2).unwrap();
        let mut s = StateVector::prepare(l).unwrap();
        s.apply_x(3);
        s.apply_hadamard(5);
        s.apply_hadamard(0);
        s.apply_h_and_norm().unwrap();
        assert!((s.norm_sq() - 1.0).abs() < 1e-10);
        // a second Hadamard undoes the first
        let mut t = StateVector::basis(l, 9).unwrap();
        t.apply_hadamard(4);
        t.apply_hadamard(4);
        assert!((t.amplitudes()[9].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_coordinate_two_bits() {
        let l = RegisterLayout::new(1, 2, 1).unwrap();
        let mut s = StateVector::prepare(l).unwrap();
        s.apply_h_and_norm().unwrap();
        assert!((s.invalid_probability().unwrap() - 0.5).abs() < 1e-12);
        for (k, p) in s.outcome_distribution() {
            match k.w {
                None => assert!((p - 0.25).abs() < 1e-12),
                Some(w) => {
                    assert!(w == vec![1_000_000_000] || w == vec![-1_000_000_000]);
                    assert!((p - 0.125).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn measurement_frequencies() {
        let l = RegisterLayout::new(1, 1, 1).unwrap();
        let mut s = StateVector::prepare(l).unwrap();
        s.apply_h_and_norm().unwrap();
        let sampler = BornSampler::new(&s);
        let mut r = Streams::new(1).stream("measure");
        let ones = (0..10_000).filter(|_| sampler.sample(&mut r).xi() == 1).count();
        assert!((ones as f64 / 1e4 - 0.5).abs() < 0.02);
        for _ in 0..100 {
            if let Outcome::Valid { w, .. } = sampler.sample(&mut r) {
                assert!((w.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        let point = StateVector::basis(l, 0b11).unwrap();
        let expected = point.decode(0b11);
        for _ in 0..50 {
            assert_eq!(measure_sample(&point, &mut r), expected);
        }
    }

    #[test]
    fn rejects_bad_states() {
        let l = RegisterLayout::new(1, 1, 1).unwrap();
        assert!(StateVector::from_amplitudes(l, vec![Complex64::new(1.0, 0.0); 4]).is_err());
        assert!(StateVector::from_amplitudes(l, vec![Complex64::new(1.0, 0.0); 3]).is_err());
        let big = RegisterLayout::new(1, 8, 3).unwrap();
        assert!(matches!(StateVector::prepare(big), Err(Error::RegisterTooLarge { .. })));
    }
}
