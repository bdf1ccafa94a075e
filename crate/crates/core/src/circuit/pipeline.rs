use std::collections::BTreeMap;

use rand::Rng;
use statrs::function::factorial::binomial;

use super::{decode_counts, Fixed, HForm, Outcome, OutcomeKey, RegisterLayout};
use crate::error::{Error, Result};
use crate::objectives::{ObjectiveSpec, XiSample};
use crate::smoothing::{SmoothingParams, SphereDirection};
use crate::vecops::norm;

fn random_popcount<R: Rng + ?Sized>(bits: usize, rng: &mut R) -> u32 {
    let mut left = bits;
    let mut ones = 0;
    while left > 0 {
        let take = left.min(64);
        let word: u64 = rng.random();
        let masked = if take == 64 { word } else { word & ((1u64 << take) - 1) };
        ones += masked.count_ones();
        left -= take;
    }
    ones
}

/// Draws the register contents a measurement would produce, without amplitudes.
pub fn pipeline_sample<R: Rng + ?Sized>(layout: &RegisterLayout, rng: &mut R) -> Outcome {
    pipeline_sample_with(layout, HForm::Corrected, rng)
}

pub fn pipeline_sample_with<R: Rng + ?Sized>(
    layout: &RegisterLayout,
    form: HForm,
    rng: &mut R,
) -> Outcome {
    let xi = random_bits(layout.m1, rng);
    let counts: Vec<u32> = (0..layout.d).map(|_| random_popcount(layout.m2, rng)).collect();
    decode_counts(xi, &counts, layout.m2, form)
}

fn random_bits<R: Rng + ?Sized>(m1: usize, rng: &mut R) -> u64 {
    let word: u64 = rng.random();
    if m1 >= 64 {
        word
    } else {
        word & ((1u64 << m1) - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidSample {
    pub xi: u64,
    pub w: SphereDirection,
    /// Invalid outcomes discarded before this one.
    pub rejections: u64,
}

/// Resamples until the outcome is valid.
pub fn pipeline_sample_valid<R: Rng + ?Sized>(
    layout: &RegisterLayout,
    form: HForm,
    rng: &mut R,
) -> ValidSample {
    let mut rejections = 0;
    loop {
        match pipeline_sample_with(layout, form, rng) {
            Outcome::Valid { xi, w } => {
                return ValidSample {
                    xi,
                    w: SphereDirection::from_vec(w).expect("valid outcomes have unit norm"),
                    rejections,
                }
            }
            Outcome::Invalid { .. } => rejections += 1,
        }
    }
}

/// Exact output distribution of [`pipeline_sample`], from binomial counts.
pub fn pipeline_distribution(layout: &RegisterLayout, form: HForm) -> Result<BTreeMap<OutcomeKey, f64>> {
    let cells = (layout.m2 as f64 + 1.0).powi(layout.d as i32);
    if layout.m1 > 16 || cells > 1e7 {
        return Err(Error::param("layout", "too large to enumerate"));
    }
    let scale = (layout.m2 as f64).exp2();
    let pmf: Vec<f64> = (0..=layout.m2)
        .map(|s| binomial(layout.m2 as u64, s as u64) / scale)
        .collect();
    let xi_count = 1u64 << layout.m1;
    let mut out = BTreeMap::new();
    let mut counts = vec![0u32; layout.d];
    loop {
        let p: f64 = counts.iter().map(|c| pmf[*c as usize]).product();
        for xi in 0..xi_count {
            let key = decode_counts(xi, &counts, layout.m2, form).key();
            *out.entry(key).or_insert(0.0) += p / xi_count as f64;
        }
        // odometer over counts ∈ [0, m2]^d
        let mut k = 0;
        loop {
            if k == layout.d {
                return Ok(out);
            }
            if (counts[k] as usize) < layout.m2 {
                counts[k] += 1;
                break;
            }
            counts[k] = 0;
            k += 1;
        }
    }
}

/// Result of a fixed-point oracle emulation.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub value: Vec<Fixed>,
    /// Number of `U_F` stages the pipeline passed through.
    pub uf_calls: u32,
}

impl PipelineOutput {
    pub fn to_f64(&self) -> Vec<f64> {
        self.value.iter().map(|v| v.to_f64()).collect()
    }
}

/// Per-coordinate error bound of [`emulate_u_g`] against the floating-point estimator.
pub fn fixed_point_bound(spec: &ObjectiveSpec, x: &[f64], delta: f64, frac_bits: u32) -> f64 {
    (1.0 - frac_bits as f64).exp2() * spec.d() as f64 / (2.0 * delta)
        * (1.0 + norm(x) + spec.lipschitz())
}

struct Registers<'a> {
    spec: &'a ObjectiveSpec,
    xi: &'a XiSample,
    f: u32,
    delta: Fixed,
    w: Vec<Fixed>,
    scale: Fixed,
    uf_calls: u32,
}

impl<'a> Registers<'a> {
    fn load(
        spec: &'a ObjectiveSpec,
        params: SmoothingParams,
        xi: &'a XiSample,
        w: &SphereDirection,
        layout: &RegisterLayout,
    ) -> Result<Self> {
        if layout.d != spec.d() {
            return Err(Error::DimensionMismatch {
                expected: spec.d(),
                actual: layout.d,
            });
        }
        spec.check_point(w.as_slice())?;
        let f = layout.frac_bits;
        let delta = params.delta();
        Ok(Self {
            spec,
            xi,
            f,
            delta: Fixed::from_f64(delta, f, "load")?,
            w: w
                .as_slice()
                .iter()
                .map(|v| Fixed::from_f64(*v, f, "load"))
                .collect::<Result<_>>()?,
            scale: Fixed::from_f64(spec.d() as f64 / (2.0 * delta), f, "load")?,
            uf_calls: 0,
        })
    }

    /// `A±`: the probe point `x ± δw`.
    fn shift(&self, x: &[Fixed], sign: f64) -> Result<Vec<Fixed>> {
        x.iter()
            .zip(&self.w)
            .map(|(xv, wv)| {
                let step = self.delta.mul(*wv, "A±")?;
                if sign > 0.0 {
                    xv.add(step, "A±")
                } else {
                    xv.sub(step, "A±")
                }
            })
            .collect()
    }

    /// `U_F`: one stochastic function value, written back into a register.
    fn u_f(&mut self, point: &[Fixed]) -> Result<Fixed> {
        self.uf_calls += 1;
        let p: Vec<f64> = point.iter().map(|v| v.to_f64()).collect();
        Fixed::from_f64(self.spec.value(&p, self.xi), self.f, "U_F")
    }

    /// `d/(2δ) · (F(x+δw) − F(x−δw))`.
    fn coefficient(&mut self, x: &[f64]) -> Result<Fixed> {
        let xf: Vec<Fixed> = x
            .iter()
            .map(|v| Fixed::from_f64(*v, self.f, "load"))
            .collect::<Result<_>>()?;
        let plus = self.shift(&xf, 1.0)?;
        let minus = self.shift(&xf, -1.0)?;
        let fp = self.u_f(&plus)?;
        let fm = self.u_f(&minus)?;
        fp.sub(fm, "sub")?.mul(self.scale, "Fmul")
    }

    /// `U_mul`: the scalar times each coordinate of `w`.
    fn times_w(&self, c: Fixed) -> Result<Vec<Fixed>> {
        self.w.iter().map(|wv| c.mul(*wv, "U_mul")).collect()
    }
}

/// `g_δ(x; w, ξ)` through the reversible fixed-point pipeline
/// `A± → U_F → sub → Fmul → U_mul`.
pub fn emulate_u_g(
    spec: &ObjectiveSpec,
    x: &[f64],
    params: SmoothingParams,
    xi: &XiSample,
    w: &SphereDirection,
    layout: &RegisterLayout,
) -> Result<PipelineOutput> {
    spec.check_point(x)?;
    let mut regs = Registers::load(spec, params, xi, w, layout)?;
    let c = regs.coefficient(x)?;
    Ok(PipelineOutput {
        value: regs.times_w(c)?,
        uf_calls: regs.uf_calls,
    })
}

/// `g_δ(x; w, ξ) − g_δ(y; w, ξ)` with one shared `(w, ξ)`: both coefficients,
/// a subtraction, then a single multiply by `w`.
#[allow(clippy::too_many_arguments)]
pub fn emulate_v_g(
    spec: &ObjectiveSpec,
    x: &[f64],
    y: &[f64],
    params: SmoothingParams,
    xi: &XiSample,
    w: &SphereDirection,
    layout: &RegisterLayout,
) -> Result<PipelineOutput> {
    spec.check_point(x)?;
    spec.check_point(y)?;
    let mut regs = Registers::load(spec, params, xi, w, layout)?;
    let cx = regs.coefficient(x)?;
    let cy = regs.coefficient(y)?;
    let c = cx.sub(cy, "sub")?;
    Ok(PipelineOutput {
        value: regs.times_w(c)?,
        uf_calls: regs.uf_calls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::StateVector;
    use crate::objectives::catalog_make;
    use crate::rng::Streams;
    use crate::smoothing::g_delta;

    #[test]
    fn pipeline_enumeration_matches_statevector() {
        for (m1, m2, d) in [(1, 2, 2), (2, 3, 1), (1, 2, 3), (2, 4, 2)] {
            let layout = RegisterLayout::new(m1, m2, d).unwrap();
            let mut s = StateVector::prepare(layout).unwrap();
            s.apply_h_and_norm().unwrap();
            let a = s.outcome_distribution();
            let b = pipeline_distribution(&layout, HForm::Corrected).unwrap();
            assert_eq!(a.len(), b.len());
            for (k, p) in &a {
                assert!((p - b[k]).abs() < 1e-12, "{k:?}");
            }
        }
    }

    #[test]
    fn valid_samples_are_unit_vectors() {
        let layout = RegisterLayout::new(1, 2, 2).unwrap();
        let mut r = Streams::new(4).stream("pipe");
        let mut rejections = 0;
        for _ in 0..1000 {
            let s = pipeline_sample_valid(&layout, HForm::Corrected, &mut r);
            assert!((norm(s.w.as_slice()) - 1.0).abs() < 1e-15);
            rejections += s.rejections;
        }
        // P(invalid) = 1/4 for m2 = 2, d = 2
        let rate = rejections as f64 / (rejections as f64 + 1000.0);
        assert!((rate - 0.25).abs() < 0.05);
    }

    #[test]
    fn u_g_examples() {
        let a = ObjectiveSpec::abs_linear_with(vec![1.0, 0.0]).unwrap();
        let layout = RegisterLayout::new(1, 1, 2).unwrap();
        let w = SphereDirection::from_vec(vec![1.0, 0.0]).unwrap();
        let p = SmoothingParams::new(0.5).unwrap();
        let out = emulate_u_g(&a, &[5.0, 0.0], p, &XiSample::Degenerate, &w, &layout).unwrap();
        let v = out.to_f64();
        assert!((v[0] - 2.0).abs() < 1e-6 && v[1].abs() < 1e-6);
        assert_eq!(out.uf_calls, 2);

        let c = catalog_make("constant", 2, 0.0).unwrap();
        let out = emulate_u_g(&c, &[0.3, 0.1], p, &XiSample::Degenerate, &w, &layout).unwrap();
        assert!(out.value.iter().all(|v| v.raw() == 0));
    }

    #[test]
    fn v_g_examples() {
        let s = catalog_make("sawtooth", 3, 0.0).unwrap();
        let layout = RegisterLayout::new(1, 1, 3).unwrap();
        let p = SmoothingParams::new(0.2).unwrap();
        let mut r = Streams::new(8).stream("vg");
        for _ in 0..50 {
            let w = crate::smoothing::sample_sphere(3, &mut r).unwrap();
            let x: Vec<f64> = (0..3).map(|_| r.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..3).map(|_| r.random_range(-2.0..2.0)).collect();
            let xi = XiSample::Degenerate;
            let v = emulate_v_g(&s, &x, &y, p, &xi, &w, &layout).unwrap();
            assert_eq!(v.uf_calls, 4);
            let same = emulate_v_g(&s, &x, &x, p, &xi, &w, &layout).unwrap();
            assert!(same.value.iter().all(|v| v.raw() == 0));
            let ux = emulate_u_g(&s, &x, p, &xi, &w, &layout).unwrap().to_f64();
            let uy = emulate_u_g(&s, &y, p, &xi, &w, &layout).unwrap().to_f64();
            let tol = 2.0 * fixed_point_bound(&s, &x, 0.2, 32).max(fixed_point_bound(&s, &y, 0.2, 32));
            for i in 0..3 {
                assert!((v.to_f64()[i] - (ux[i] - uy[i])).abs() <= tol);
            }
            let exact = g_delta(&s, &x, p, &w, &xi).unwrap();
            for i in 0..3 {
                assert!((ux[i] - exact[i]).abs() <= fixed_point_bound(&s, &x, 0.2, 32));
            }
        }
    }

    #[test]
    fn error_bound_halves_per_extra_bit() {
        let q = ObjectiveSpec::quadratic(2).unwrap();
        let p = SmoothingParams::new(0.3).unwrap();
        let mut r = Streams::new(12).stream("bits");
        for _ in 0..100 {
            let w = crate::smoothing::sample_sphere(2, &mut r).unwrap();
            let x: Vec<f64> = (0..2).map(|_| r.random_range(-1.0..1.0)).collect();
            let exact = g_delta(&q, &x, p, &w, &XiSample::Degenerate).unwrap();
            for f in [20u32, 21] {
                let layout = RegisterLayout::new(1, 1, 2).unwrap().with_frac_bits(f).unwrap();
                let out = emulate_u_g(&q, &x, p, &XiSample::Degenerate, &w, &layout).unwrap();
                let bound = fixed_point_bound(&q, &x, 0.3, f);
                for (a, b) in out.to_f64().iter().zip(&exact) {
                    assert!((a - b).abs() <= bound);
                }
            }
            assert_eq!(
                fixed_point_bound(&q, &x, 0.3, 20) / fixed_point_bound(&q, &x, 0.3, 21),
                2.0
            );
        }
    }

    #[test]
    fn overflow_and_layout_mismatch() {
        let a = ObjectiveSpec::abs_linear(2).unwrap();
        let w = SphereDirection::from_vec(vec![1.0, 0.0]).unwrap();
        let p = SmoothingParams::new(0.5).unwrap();
        let layout = RegisterLayout::new(1, 1, 2).unwrap();
        assert!(matches!(
            emulate_u_g(&a, &[1e12, 0.0], p, &XiSample::Degenerate, &w, &layout),
            Err(Error::FixedPointOverflow(_))
        ));
        let wrong = RegisterLayout::new(1, 1, 3).unwrap();
        assert!(emulate_u_g(&a, &[0.0, 0.0], p, &XiSample::Degenerate, &w, &wrong).is_err());
    }
}
