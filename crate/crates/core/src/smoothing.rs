//! Randomized smoothing over the unit ball.
//!
//! `f_δ(x) = E_u[f(x + δu)]` with `u` uniform on the unit ball, and its
//! two-point estimator `g_δ(x; w, ξ) = d/(2δ) · (F(x+δw; ξ) − F(x−δw; ξ)) · w`
//! with `w` uniform on the unit sphere.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::beta::{beta, beta_reg};

use crate::error::{Error, Result};
use crate::objectives::{dist_to_integer, sample_xi, ObjectiveSpec, Problem, XiSample};
use crate::stats::RunningMoments;
use crate::vecops::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingParams {
    delta: f64,
}

impl SmoothingParams {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::param("delta", "smoothing radius must be positive"));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// A unit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereDirection(Vec<f64>);

impl SphereDirection {
    /// Normalizes `v`; fails on a zero or non-finite vector.
    pub fn from_vec(v: Vec<f64>) -> Result<Self> {
        let n = norm(&v);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::param("w", "direction must be non-zero"));
        }
        Ok(Self(v.into_iter().map(|x| x / n).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn d(&self) -> usize {
        self.0.len()
    }
}

/// Gaussian-normalized draw into `buf`; zero-norm draws are resampled.
pub(crate) fn fill_sphere<R: Rng + ?Sized>(buf: &mut [f64], rng: &mut R) {
    loop {
        let mut sq = 0.0;
        for v in buf.iter_mut() {
            *v = StandardNormal.sample(rng);
            sq += *v * *v;
        }
        if sq > 0.0 {
            let inv = 1.0 / sq.sqrt();
            buf.iter_mut().for_each(|v| *v *= inv);
            return;
        }
    }
}

pub fn sample_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<SphereDirection> {
    if d == 0 {
        return Err(Error::ZeroDimension);
    }
    let mut w = vec![0.0; d];
    fill_sphere(&mut w, rng);
    Ok(SphereDirection(w))
}

/// Uniform on the unit ball: a sphere direction scaled by `U^{1/d}`.
pub fn sample_ball<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Vec<f64>> {
    let mut u = sample_sphere(d, rng)?.into_inner();
    let r = rng.random::<f64>().powf(1.0 / d as f64);
    u.iter_mut().for_each(|v| *v *= r);
    Ok(u)
}

/// Scratch space for repeated two-point evaluations.
pub(crate) struct TwoPoint {
    probe: Vec<f64>,
}

impl TwoPoint {
    pub(crate) fn new(d: usize) -> Self {
        Self {
            probe: vec![0.0; d],
        }
    }

    /// The scalar `d/(2δ) · (F(x+δw) − F(x−δw))`; the estimate is this times `w`.
    pub(crate) fn coefficient(
        &mut self,
        spec: &ObjectiveSpec,
        x: &[f64],
        delta: f64,
        w: &[f64],
        xi: &XiSample,
    ) -> f64 {
        for ((p, xv), wv) in self.probe.iter_mut().zip(x).zip(w) {
            *p = xv + delta * wv;
        }
        let plus = spec.value(&self.probe, xi);
        for ((p, xv), wv) in self.probe.iter_mut().zip(x).zip(w) {
            *p = xv - delta * wv;
        }
        let minus = spec.value(&self.probe, xi);
        spec.d() as f64 / (2.0 * delta) * (plus - minus)
    }
}

/// One two-point estimate for a given direction and stochastic index.
pub fn g_delta(
    spec: &ObjectiveSpec,
    x: &[f64],
    params: SmoothingParams,
    w: &SphereDirection,
    xi: &XiSample,
) -> Result<Vec<f64>> {
    spec.check_point(x)?;
    spec.check_point(w.as_slice())?;
    let c = TwoPoint::new(spec.d()).coefficient(spec, x, params.delta, w.as_slice(), xi);
    Ok(w.as_slice().iter().map(|v| c * v).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FDeltaMode {
    Closed,
    MonteCarlo(usize),
}

/// A scalar estimate; `std_error` is zero for closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarEstimate {
    pub value: f64,
    pub std_error: f64,
}

pub fn f_delta<R: Rng + ?Sized>(
    spec: &ObjectiveSpec,
    x: &[f64],
    params: SmoothingParams,
    mode: FDeltaMode,
    rng: &mut R,
) -> Result<ScalarEstimate> {
    spec.check_point(x)?;
    match mode {
        FDeltaMode::Closed => f_delta_closed(spec, x, params.delta)
            .map(|value| ScalarEstimate {
                value,
                std_error: 0.0,
            })
            .ok_or_else(|| Error::NoClosedForm(spec.name().to_string())),
        FDeltaMode::MonteCarlo(n) => {
            if n == 0 {
                return Err(Error::param("n", "need at least one sample"));
            }
            let mut acc = RunningMoments::new(1);
            let mut point = vec![0.0; spec.d()];
            for _ in 0..n {
                let u = sample_ball(spec.d(), rng)?;
                for ((p, xv), uv) in point.iter_mut().zip(x).zip(&u) {
                    *p = xv + params.delta * uv;
                }
                acc.push(&[spec.eval_f_unchecked(&point)]);
            }
            let se = if n > 1 { acc.std_error()[0] } else { f64::INFINITY };
            Ok(ScalarEstimate {
                value: acc.mean()[0],
                std_error: se,
            })
        }
    }
}

/// Mean of `n` two-point draws with fresh `(w, ξ)` and its per-coordinate standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReference {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

pub fn grad_f_delta_ref<R: Rng + ?Sized>(
    spec: &ObjectiveSpec,
    x: &[f64],
    params: SmoothingParams,
    n: usize,
    rng: &mut R,
) -> Result<GradientReference> {
    spec.check_point(x)?;
    if n == 0 {
        return Err(Error::param("n", "need at least one sample"));
    }
    let acc = accumulate_g_delta(spec, x, params.delta, n, rng);
    Ok(GradientReference {
        std_error: acc.std_error(),
        mean: acc.into_mean(),
    })
}

pub(crate) fn accumulate_g_delta<R: Rng + ?Sized>(
    spec: &ObjectiveSpec,
    x: &[f64],
    delta: f64,
    n: usize,
    rng: &mut R,
) -> RunningMoments {
    let d = spec.d();
    let mut acc = RunningMoments::new(d);
    let mut tp = TwoPoint::new(d);
    let mut w = vec![0.0; d];
    for _ in 0..n {
        fill_sphere(&mut w, rng);
        let xi = sample_xi(spec, rng);
        let c = tp.coefficient(spec, x, delta, &w, &xi);
        acc.push_scaled(c, &w);
    }
    acc
}

/// Density of `⟨e, u⟩` for `u` uniform on the unit ball in `ℝ^d` is
/// proportional to `(1 − t²)^{(d−1)/2}`; `t = 2B − 1` with `B ~ Beta(α, α)`, `α = (d+1)/2`.
fn projection_cdf(d: usize, c: f64) -> f64 {
    if c <= -1.0 {
        return 0.0;
    }
    if c >= 1.0 {
        return 1.0;
    }
    let alpha = (d as f64 + 1.0) / 2.0;
    beta_reg(alpha, alpha, (1.0 + c) / 2.0)
}

/// `E[t · 1{t > c}]` for the projected coordinate above.
fn projection_upper_moment(d: usize, c: f64) -> f64 {
    let alpha = (d as f64 + 1.0) / 2.0;
    let c = c.clamp(-1.0, 1.0);
    (1.0 - c * c).powf(alpha) / ((d as f64 + 1.0) * beta(0.5, alpha))
}

/// Antiderivative of `dist(·, ℤ)`.
fn sawtooth_antiderivative(y: f64) -> f64 {
    let n = y.floor();
    let r = y - n;
    let part = if r <= 0.5 {
        r * r / 2.0
    } else {
        r - r * r / 2.0 - 0.25
    };
    n / 4.0 + part
}

/// Exact `f_δ(x)` where the problem admits it.
pub fn f_delta_closed(spec: &ObjectiveSpec, x: &[f64], delta: f64) -> Option<f64> {
    let d = spec.d();
    match spec.problem() {
        Problem::Constant => Some(0.0),
        Problem::AbsLinear { a } => {
            let s = dot(a, x);
            if s.abs() >= delta {
                return Some(s.abs());
            }
            let c = -s / delta;
            let sign_mean = 1.0 - 2.0 * projection_cdf(d, c);
            Some(s * sign_mean + 2.0 * delta * projection_upper_moment(d, c))
        }
        Problem::Sawtooth if d == 1 => Some(
            (sawtooth_antiderivative(x[0] + delta) - sawtooth_antiderivative(x[0] - delta))
                / (2.0 * delta),
        ),
        Problem::Sawtooth => None,
        Problem::QuadraticSmooth { lambda } => {
            let trace: f64 = lambda.iter().sum();
            Some(spec.eval_f_unchecked(x) + delta * delta * trace / (2.0 * (d as f64 + 2.0)))
        }
    }
}

/// Exact `∇f_δ(x)` where the problem admits it.
pub fn grad_f_delta_closed(spec: &ObjectiveSpec, x: &[f64], delta: f64) -> Option<Vec<f64>> {
    let d = spec.d();
    match spec.problem() {
        Problem::Constant => Some(vec![0.0; d]),
        Problem::AbsLinear { a } => {
            let s = dot(a, x);
            let sign_mean = if s.abs() >= delta {
                s.signum()
            } else {
                1.0 - 2.0 * projection_cdf(d, -s / delta)
            };
            Some(a.iter().map(|v| v * sign_mean).collect())
        }
        Problem::Sawtooth if d == 1 => Some(vec![
            (dist_to_integer(x[0] + delta) - dist_to_integer(x[0] - delta)) / (2.0 * delta),
        ]),
        Problem::Sawtooth => None,
        Problem::QuadraticSmooth { lambda } => {
            Some(lambda.iter().zip(x).map(|(l, v)| l * v).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::catalog_make;
    use crate::rng::Streams;
    use approx::assert_abs_diff_eq;

    fn rng(label: &str) -> crate::rng::StreamRng {
        Streams::new(2024).stream(label)
    }

    #[test]
    fn sphere_basics() {
        let mut r = rng("sphere");
        let (mut plus, mut total) = (0, 0);
        for _ in 0..2000 {
            let w = sample_sphere(1, &mut r).unwrap();
            assert_abs_diff_eq!(w.as_slice()[0].abs(), 1.0, epsilon = 1e-15);
            plus += (w.as_slice()[0] > 0.0) as u32;
            total += 1;
        }
        // binomial(2000, 1/2): sd ≈ 22
        assert!((plus as i64 - total / 2).abs() < 110);
        for d in [2, 5, 40] {
            let w = sample_sphere(d, &mut r).unwrap();
            assert_abs_diff_eq!(norm(w.as_slice()), 1.0, epsilon = 1e-12);
        }
        assert_eq!(sample_sphere(0, &mut r), Err(Error::ZeroDimension));
    }

    #[test]
    fn sphere_mean_is_zero() {
        let mut r = rng("sphere-mean");
        let n = 100_000;
        let mut acc = RunningMoments::new(3);
        for _ in 0..n {
            acc.push(sample_sphere(3, &mut r).unwrap().as_slice());
        }
        for m in acc.mean() {
            assert!(m.abs() < 4.0 / (n as f64).sqrt());
        }
    }

    #[test]
    fn ball_radius_distribution() {
        let mut r = rng("ball");
        let n = 100_000;
        let mut inside = 0;
        for _ in 0..n {
            let u = sample_ball(2, &mut r).unwrap();
            let rr = norm(&u);
            assert!(rr <= 1.0);
            inside += (rr <= 0.5) as u32;
        }
        assert!((inside as f64 / n as f64 - 0.25).abs() < 0.01);

        let mut sum = 0.0;
        for _ in 0..n {
            let u = sample_ball(1, &mut r).unwrap();
            assert!(u[0].abs() <= 1.0);
            sum += u[0];
        }
        let bound = 4.0 * (1.0 / 3f64.sqrt()) / (n as f64).sqrt();
        assert!((sum / n as f64).abs() < bound);
    }

    #[test]
    fn g_delta_examples() {
        let a = ObjectiveSpec::abs_linear_with(vec![1.0, 0.0]).unwrap();
        let p = SmoothingParams::new(0.5).unwrap();
        let w = SphereDirection::from_vec(vec![0.0, 1.0]).unwrap();
        let g = g_delta(&a, &[5.0, 0.0], p, &w, &XiSample::Degenerate).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        let w = SphereDirection::from_vec(vec![1.0, 0.0]).unwrap();
        let g = g_delta(&a, &[5.0, 0.0], p, &w, &XiSample::Degenerate).unwrap();
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-12);
        assert_eq!(g[1], 0.0);

        let s = catalog_make("sawtooth", 1, 0.0).unwrap();
        let w = SphereDirection::from_vec(vec![1.0]).unwrap();
        let p = SmoothingParams::new(0.25).unwrap();
        assert_eq!(
            g_delta(&s, &[0.0], p, &w, &XiSample::Degenerate).unwrap(),
            vec![0.0]
        );
        assert!(g_delta(&s, &[0.0, 1.0], p, &w, &XiSample::Degenerate).is_err());
        assert!(SmoothingParams::new(0.0).is_err());
    }

    #[test]
    fn f_delta_examples() {
        let mut r = rng("fdelta");
        // Away from the kink the ball average of a linear piece is exact.
        let a = ObjectiveSpec::abs_linear_with(vec![1.0, 0.0]).unwrap();
        let p = SmoothingParams::new(0.5).unwrap();
        let v = f_delta(&a, &[3.0, -1.0], p, FDeltaMode::Closed, &mut r).unwrap();
        assert_eq!(v.value, 3.0);

        let q = ObjectiveSpec::quadratic_with(vec![1.0, 1.0]).unwrap();
        let p1 = SmoothingParams::new(1.0).unwrap();
        let v = f_delta(&q, &[0.0, 0.0], p1, FDeltaMode::Closed, &mut r).unwrap();
        assert_abs_diff_eq!(v.value, 0.25, epsilon = 1e-15);
        // Monte Carlo oracle: E‖u‖² = d/(d+2) on the unit ball.
        let mc = f_delta(&q, &[0.0, 0.0], p1, FDeltaMode::MonteCarlo(200_000), &mut r).unwrap();
        assert!((mc.value - 0.25).abs() < 4.0 * mc.std_error);

        // Sawtooth, d = 1, δ = 1: the average of dist(u, ℤ) over [−1, 1] is 1/4.
        let s = catalog_make("sawtooth", 1, 0.0).unwrap();
        let v = f_delta(&s, &[0.0], p1, FDeltaMode::Closed, &mut r).unwrap();
        assert_abs_diff_eq!(v.value, 0.25, epsilon = 1e-15);
        let quad = midpoint(dist_to_integer, -1.0, 1.0, 200_000) / 2.0;
        assert_abs_diff_eq!(v.value, quad, epsilon = 1e-9);

        let s8 = catalog_make("sawtooth", 8, 0.0).unwrap();
        assert_eq!(
            f_delta(&s8, &[0.0; 8], p1, FDeltaMode::Closed, &mut r),
            Err(Error::NoClosedForm("sawtooth".into()))
        );
    }

    fn midpoint(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
    }

    #[test]
    fn abs_linear_closed_form_matches_monte_carlo() {
        let mut r = rng("abs-closed");
        for d in [1, 2, 5] {
            let a = ObjectiveSpec::abs_linear(d).unwrap();
            let p = SmoothingParams::new(0.4).unwrap();
            let mut x = vec![0.0; d];
            x[0] = 0.1;
            let exact = f_delta_closed(&a, &x, 0.4).unwrap();
            let mc = f_delta(&a, &x, p, FDeltaMode::MonteCarlo(200_000), &mut r).unwrap();
            assert!(
                (exact - mc.value).abs() < 4.0 * mc.std_error,
                "d={d}: {exact} vs {mc:?}"
            );
            let g = grad_f_delta_closed(&a, &x, 0.4).unwrap();
            let reference = grad_f_delta_ref(&a, &x, p, 200_000, &mut r).unwrap();
            for i in 0..d {
                assert!(
                    (g[i] - reference.mean[i]).abs() < (4.0 * reference.std_error[i]).max(1e-12),
                    "d={d} i={i}: {} vs {} ± {}",
                    g[i],
                    reference.mean[i],
                    reference.std_error[i]
                );
            }
        }
    }

    #[test]
    fn sawtooth_closed_gradient_is_derivative_of_closed_value() {
        let s = catalog_make("sawtooth", 1, 0.0).unwrap();
        for x in [-0.7, -0.1, 0.05, 0.3, 0.5, 0.93] {
            let h = 1e-7;
            let fd = (f_delta_closed(&s, &[x + h], 0.2).unwrap()
                - f_delta_closed(&s, &[x - h], 0.2).unwrap())
                / (2.0 * h);
            assert_abs_diff_eq!(grad_f_delta_closed(&s, &[x], 0.2).unwrap()[0], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn reference_gradient_examples() {
        let mut r = rng("ref");
        let c = catalog_make("constant", 4, 0.3).unwrap();
        let p = SmoothingParams::new(0.5).unwrap();
        let g = grad_f_delta_ref(&c, &[1.0; 4], p, 100, &mut r).unwrap();
        assert!(g.mean.iter().all(|v| *v == 0.0));

        let a = ObjectiveSpec::abs_linear_with(vec![1.0, 0.0]).unwrap();
        let g = grad_f_delta_ref(&a, &[5.0, 0.0], p, 100_000, &mut r).unwrap();
        assert!((g.mean[0] - 1.0).abs() < 4.0 * g.std_error[0]);
        assert!(g.mean[1].abs() < 4.0 * g.std_error[1]);

        let s = catalog_make("sawtooth", 1, 0.0).unwrap();
        let g = grad_f_delta_ref(&s, &[0.0], SmoothingParams::new(0.25).unwrap(), 100_000, &mut r)
            .unwrap();
        assert!(g.mean[0].abs() <= 4.0 * g.std_error[0]);
    }
}
