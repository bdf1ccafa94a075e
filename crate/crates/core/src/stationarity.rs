//! Checking returned points: residual estimates with confidence bounds and
//! exact Goldstein distances for the catalog problems that admit them.

use rand::Rng;

use crate::error::{Error, Result};
use crate::objectives::{dist_to_integer, ObjectiveSpec, Problem};
use crate::smoothing::{accumulate_g_delta, SmoothingParams};
use crate::stats::{normal_two_sided_quantile, RunningMoments};
use crate::vecops::{dot, norm};

/// Sample cap of [`verify_stationary`].
pub const VERIFY_MAX_SAMPLES: usize = 10_000_000;
/// Initial batch of [`verify_stationary`].
pub const VERIFY_INITIAL_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub point: Vec<f64>,
    pub delta: f64,
    /// `‖mean of the g_δ draws‖`.
    pub estimate: f64,
    /// `|estimate − ‖∇f_δ(x)‖| ≤ half_width` with probability at least `confidence`.
    pub half_width: f64,
    pub confidence: f64,
    pub n: usize,
    pub exact: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accepted,
    Rejected,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Accepted => "accepted",
            Verdict::Rejected => "rejected",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

impl Verdict {
    pub fn judge(estimate: f64, half_width: f64, eps: f64) -> Verdict {
        if estimate + half_width <= eps {
            Verdict::Accepted
        } else if estimate - half_width > eps {
            Verdict::Rejected
        } else {
            Verdict::Inconclusive
        }
    }
}

fn check_confidence(confidence: f64) -> Result<()> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::param("confidence", "must lie in (0, 1)"));
    }
    Ok(())
}

/// Half-width of the norm of a mean from per-coordinate standard errors, with a
/// union bound over coordinates.
fn norm_half_width(acc: &RunningMoments, confidence: f64) -> f64 {
    let se = acc.std_error();
    let d = se.len() as f64;
    let z = normal_two_sided_quantile(1.0 - (1.0 - confidence) / d);
    z * norm(&se)
}

fn report(
    spec: &ObjectiveSpec,
    x: &[f64],
    delta: f64,
    confidence: f64,
    acc: &RunningMoments,
) -> ResidualReport {
    ResidualReport {
        point: x.to_vec(),
        delta,
        estimate: norm(acc.mean()),
        half_width: norm_half_width(acc, confidence),
        confidence,
        n: acc.count() as usize,
        exact: exact_goldstein_distance(spec, x, delta),
    }
}

/// Estimates `‖∇f_δ(x)‖` from `n` reference draws of the two-point estimator.
pub fn goldstein_residual<R: Rng + ?Sized>(
    spec: &ObjectiveSpec,
    x: &[f64],
    params: SmoothingParams,
    n: usize,
    confidence: f64,
    rng: &mut R,
) -> Result<ResidualReport> {
    spec.check_point(x)?;
    check_confidence(confidence)?;
    if n < 2 {
        return Err(Error::param("n", "need at least two samples"));
    }
    let acc = accumulate_g_delta(spec, x, params.delta(), n, rng);
    Ok(report(spec, x, params.delta(), confidence, &acc))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub verdict: Verdict,
    pub report: ResidualReport,
}

/// Decides whether `x` is a `(δ, ε)`-Goldstein stationary point, doubling the
/// sample count up to [`VERIFY_MAX_SAMPLES`] while the interval straddles `ε`.
pub fn verify_stationary<R: Rng + ?Sized>(
    spec: &ObjectiveSpec,
    x: &[f64],
    params: SmoothingParams,
    eps: f64,
    confidence: f64,
    rng: &mut R,
) -> Result<Verification> {
    spec.check_point(x)?;
    check_confidence(confidence)?;
    if !(eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    let d = spec.d();
    let mut acc = RunningMoments::new(d);
    let mut n = VERIFY_INITIAL_SAMPLES;
    loop {
        let more = accumulate_g_delta(spec, x, params.delta(), n - acc.count() as usize, rng);
        acc.merge(&more);
        let rep = report(spec, x, params.delta(), confidence, &acc);
        let verdict = Verdict::judge(rep.estimate, rep.half_width, eps);
        if verdict != Verdict::Inconclusive || n >= VERIFY_MAX_SAMPLES {
            return Ok(Verification {
                verdict,
                report: rep,
            });
        }
        n = (2 * n).min(VERIFY_MAX_SAMPLES);
    }
}

/// `dist(0, ∂_δ f(x))` where the piecewise structure makes it computable.
pub fn exact_goldstein_distance(spec: &ObjectiveSpec, x: &[f64], delta: f64) -> Option<f64> {
    if x.len() != spec.d() {
        return None;
    }
    match spec.problem() {
        Problem::Constant => Some(0.0),
        Problem::AbsLinear { a } => Some(if dot(a, x).abs() <= delta { 0.0 } else { norm(a) }),
        Problem::Sawtooth => {
            // Kinks of dist(·, ℤ) sit on the half-integers.
            let crosses = |v: f64| dist_to_half_grid(v) <= delta;
            match (spec.d(), x.iter().any(|v| crosses(*v))) {
                (_, false) => Some(1.0),
                (1, true) => Some(0.0),
                _ => None,
            }
        }
        Problem::QuadraticSmooth { lambda } => Some(quadratic_distance(lambda, x, delta)),
    }
}

fn dist_to_half_grid(v: f64) -> f64 {
    dist_to_integer(2.0 * v) / 2.0
}

/// `min ‖Λy‖` over `‖y − x‖ ≤ δ`. The minimizer is `y_i = μx_i/(λ_i² + μ)` with the
/// multiplier `μ` making the constraint tight; `‖y(μ) − x‖` decreases in `μ`.
fn quadratic_distance(lambda: &[f64], x: &[f64], delta: f64) -> f64 {
    if norm(x) <= delta {
        return 0.0;
    }
    let y_of = |mu: f64| -> Vec<f64> {
        lambda
            .iter()
            .zip(x)
            .map(|(l, v)| mu * v / (l * l + mu))
            .collect()
    };
    let gap = |mu: f64| -> f64 {
        let y = y_of(mu);
        y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while gap(hi) > delta {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let y = y_of(hi);
    lambda
        .iter()
        .zip(&y)
        .map(|(l, v)| (l * v) * (l * v))
        .sum::<f64>()
        .sqrt()
}
