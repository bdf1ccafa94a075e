//! Problem catalog.
//!
//! Every problem has an analytically known Lipschitz constant, infimum and
//! canonical start point, so optimizer output can be checked against exact
//! quantities rather than against another estimate.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::vecops::{dot, norm};

pub const CATALOG: [&str; 4] = ["abs-linear", "sawtooth", "quadratic-smooth", "constant"];

/// Lipschitz bound used for the constant problem, where any positive value is valid.
pub const CONSTANT_LIPSCHITZ: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    /// `f ≡ 0`.
    Constant,
    /// `f(x) = |⟨a, x⟩|` with `‖a‖ = 1`.
    AbsLinear { a: Vec<f64> },
    /// `f(x) = d^{-1/2} Σ dist(x_i, ℤ)`.
    Sawtooth,
    /// `f(x) = ½ Σ λ_i x_i²`.
    QuadraticSmooth { lambda: Vec<f64> },
}

/// How `F(x; ξ)` departs from `f(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    /// `F = f + r`, `r ~ U[-s, s]`.
    AdditiveOffset,
    /// Sawtooth only: `F = √d · dist(x_ξ, ℤ)` with `ξ` a uniform coordinate.
    ComponentSubsample,
    /// Quadratic only: `F = f + ⟨z, x⟩` with `z` uniform on the sphere of radius `σ`.
    LinearPerturbation,
}

/// Constants of the smooth (stochastic gradient) track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothParams {
    /// Mean-square smoothness of `∇F(·; ξ)`.
    pub l: f64,
    /// Bound on `E‖∇F(x; ξ) − ∇f(x)‖²` is `sigma²`.
    pub sigma: f64,
}

/// One stochastic index drawn from `p_ξ`.
#[derive(Debug, Clone, PartialEq)]
pub enum XiSample {
    Degenerate,
    Offset(f64),
    Component(usize),
    Direction(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    problem: Problem,
    d: usize,
    lipschitz: f64,
    noise_kind: NoiseKind,
    noise_scale: f64,
    f_star: f64,
    delta_0: f64,
    x0: Vec<f64>,
}

impl ObjectiveSpec {
    pub fn constant(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(Self::assemble(Problem::Constant, d, vec![0.0; d]))
    }

    /// Canonical direction `a = (1, …, 1)/√d`, start `(1, …, 1)/√d`, so `Δ = 1` in every dimension.
    pub fn abs_linear(d: usize) -> Result<Self> {
        check_dim(d)?;
        Self::abs_linear_with(vec![1.0 / (d as f64).sqrt(); d])
    }

    /// `a` is normalized to unit length. The start point is `(1, …, 1)/√d`.
    pub fn abs_linear_with(a: Vec<f64>) -> Result<Self> {
        let d = a.len();
        check_dim(d)?;
        let n = norm(&a);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::param("a", "direction must be finite and non-zero"));
        }
        let a = a.into_iter().map(|v| v / n).collect();
        let x0 = vec![1.0 / (d as f64).sqrt(); d];
        Ok(Self::assemble(Problem::AbsLinear { a }, d, x0))
    }

    /// Start point has every coordinate at `0.3`.
    pub fn sawtooth(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(Self::assemble(Problem::Sawtooth, d, vec![0.3; d]))
    }

    /// Default spectrum is evenly spaced on `[1, 2]`; start point is `(1, …, 1)`.
    pub fn quadratic(d: usize) -> Result<Self> {
        check_dim(d)?;
        let lambda = if d == 1 {
            vec![1.0]
        } else {
            (0..d).map(|i| 1.0 + i as f64 / (d - 1) as f64).collect()
        };
        Self::quadratic_with(lambda)
    }

    pub fn quadratic_with(lambda: Vec<f64>) -> Result<Self> {
        let d = lambda.len();
        check_dim(d)?;
        if lambda.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::param("lambda", "eigenvalues must be positive"));
        }
        Ok(Self::assemble(
            Problem::QuadraticSmooth { lambda },
            d,
            vec![1.0; d],
        ))
    }

    fn assemble(problem: Problem, d: usize, x0: Vec<f64>) -> Self {
        let mut spec = Self {
            problem,
            d,
            lipschitz: 0.0,
            noise_kind: NoiseKind::None,
            noise_scale: 0.0,
            f_star: 0.0,
            delta_0: 0.0,
            x0,
        };
        spec.refresh();
        spec
    }

    fn refresh(&mut self) {
        self.lipschitz = match (&self.problem, self.noise_kind) {
            (Problem::Constant, _) => CONSTANT_LIPSCHITZ,
            (Problem::AbsLinear { .. }, _) => 1.0,
            (Problem::Sawtooth, NoiseKind::ComponentSubsample) => (self.d as f64).sqrt(),
            (Problem::Sawtooth, _) => 1.0,
            (Problem::QuadraticSmooth { lambda }, _) => {
                let lmax = lambda.iter().cloned().fold(0.0, f64::max);
                let sigma = match self.noise_kind {
                    NoiseKind::LinearPerturbation => self.noise_scale,
                    _ => 0.0,
                };
                lmax * self.domain_radius() + sigma
            }
        };
        self.delta_0 = self.eval_f_unchecked(&self.x0) - self.f_star;
    }

    /// Adds stochasticity of the problem's natural kind at the given scale.
    pub fn with_noise(self, scale: f64) -> Result<Self> {
        let kind = if scale == 0.0 {
            NoiseKind::None
        } else {
            match self.problem {
                Problem::QuadraticSmooth { .. } => NoiseKind::LinearPerturbation,
                _ => NoiseKind::AdditiveOffset,
            }
        };
        self.with_noise_kind(kind, scale)
    }

    pub fn with_noise_kind(mut self, kind: NoiseKind, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::param("noise_scale", "must be finite and non-negative"));
        }
        match (kind, &self.problem) {
            (NoiseKind::ComponentSubsample, Problem::Sawtooth) => {}
            (NoiseKind::ComponentSubsample, _) => {
                return Err(Error::param(
                    "noise_kind",
                    "component subsampling is defined for the sawtooth only",
                ))
            }
            (NoiseKind::LinearPerturbation, Problem::QuadraticSmooth { .. }) => {}
            (NoiseKind::LinearPerturbation, _) => {
                return Err(Error::param(
                    "noise_kind",
                    "linear perturbation is defined for the quadratic only",
                ))
            }
            _ => {}
        }
        self.noise_kind = kind;
        self.noise_scale = if kind == NoiseKind::None { 0.0 } else { scale };
        self.refresh();
        Ok(self)
    }

    /// Replaces the canonical start point (and with it `Δ`).
    pub fn with_start(mut self, x0: Vec<f64>) -> Result<Self> {
        self.check_point(&x0)?;
        self.x0 = x0;
        self.refresh();
        Ok(self)
    }

    pub fn name(&self) -> &'static str {
        match self.problem {
            Problem::Constant => "constant",
            Problem::AbsLinear { .. } => "abs-linear",
            Problem::Sawtooth => "sawtooth",
            Problem::QuadraticSmooth { .. } => "quadratic-smooth",
        }
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn noise_kind(&self) -> NoiseKind {
        self.noise_kind
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    /// `f(x₀) − f*`.
    pub fn delta_0(&self) -> f64 {
        self.delta_0
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    /// For the quadratic, the Lipschitz constant holds on the ball of this
    /// radius around the origin (`‖x₀‖ + 1`). Other problems are globally Lipschitz.
    pub fn domain_radius(&self) -> f64 {
        match self.problem {
            Problem::QuadraticSmooth { .. } => norm(&self.x0) + 1.0,
            _ => f64::INFINITY,
        }
    }

    pub fn has_closed_f_delta(&self) -> bool {
        match self.problem {
            Problem::Sawtooth => self.d == 1,
            _ => true,
        }
    }

    pub fn smooth_params(&self) -> Option<SmoothParams> {
        match &self.problem {
            Problem::QuadraticSmooth { lambda } => Some(SmoothParams {
                l: lambda.iter().cloned().fold(0.0, f64::max),
                sigma: match self.noise_kind {
                    NoiseKind::LinearPerturbation => self.noise_scale,
                    _ => 0.0,
                },
            }),
            _ => None,
        }
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn eval_f_unchecked(&self, x: &[f64]) -> f64 {
        match &self.problem {
            Problem::Constant => 0.0,
            Problem::AbsLinear { a } => dot(a, x).abs(),
            Problem::Sawtooth => {
                x.iter().map(|v| dist_to_integer(*v)).sum::<f64>() / (self.d as f64).sqrt()
            }
            Problem::QuadraticSmooth { lambda } => {
                0.5 * lambda.iter().zip(x).map(|(l, v)| l * v * v).sum::<f64>()
            }
        }
    }

    /// `F(x; ξ)` without dimension checks; the hot path of every estimator.
    pub(crate) fn value(&self, x: &[f64], xi: &XiSample) -> f64 {
        match xi {
            XiSample::Degenerate => self.eval_f_unchecked(x),
            XiSample::Offset(r) => self.eval_f_unchecked(x) + r,
            XiSample::Component(i) => match self.problem {
                Problem::Sawtooth => (self.d as f64).sqrt() * dist_to_integer(x[*i]),
                _ => self.eval_f_unchecked(x),
            },
            XiSample::Direction(z) => self.eval_f_unchecked(x) + dot(z, x),
        }
    }
}

pub(crate) fn dist_to_integer(v: f64) -> f64 {
    (v - v.round()).abs()
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        Err(Error::ZeroDimension)
    } else {
        Ok(())
    }
}

/// Builds a catalog problem by name with its default parameters.
pub fn catalog_make(name: &str, d: usize, noise_scale: f64) -> Result<ObjectiveSpec> {
    let spec = match name {
        "constant" => ObjectiveSpec::constant(d)?,
        "abs-linear" => ObjectiveSpec::abs_linear(d)?,
        "sawtooth" => ObjectiveSpec::sawtooth(d)?,
        "quadratic-smooth" => ObjectiveSpec::quadratic(d)?,
        other => return Err(Error::UnknownProblem(other.to_string())),
    };
    spec.with_noise(noise_scale)
}

pub fn sample_xi<R: Rng + ?Sized>(spec: &ObjectiveSpec, rng: &mut R) -> XiSample {
    match spec.noise_kind {
        NoiseKind::None => XiSample::Degenerate,
        NoiseKind::AdditiveOffset => {
            let s = spec.noise_scale;
            XiSample::Offset(rng.random_range(-s..=s))
        }
        NoiseKind::ComponentSubsample => XiSample::Component(rng.random_range(0..spec.d)),
        NoiseKind::LinearPerturbation => {
            let mut z: Vec<f64> = (0..spec.d).map(|_| StandardNormal.sample(rng)).collect();
            let n = norm(&z);
            if n == 0.0 {
                z[0] = spec.noise_scale;
            } else {
                z.iter_mut().for_each(|v| *v *= spec.noise_scale / n);
            }
            XiSample::Direction(z)
        }
    }
}

#[allow(non_snake_case)]
pub fn eval_F(spec: &ObjectiveSpec, x: &[f64], xi: &XiSample) -> Result<f64> {
    spec.check_point(x)?;
    if let XiSample::Direction(z) = xi {
        spec.check_point(z)?;
    }
    if let XiSample::Component(i) = xi {
        if *i >= spec.d {
            return Err(Error::param("xi", "component index out of range"));
        }
    }
    Ok(spec.value(x, xi))
}

pub fn eval_f(spec: &ObjectiveSpec, x: &[f64]) -> Result<f64> {
    spec.check_point(x)?;
    Ok(spec.eval_f_unchecked(x))
}

/// `∇F(x; ξ) = Λx + z` for the quadratic.
pub fn eval_grad_smooth(spec: &ObjectiveSpec, x: &[f64], xi: &XiSample) -> Result<Vec<f64>> {
    spec.check_point(x)?;
    let Problem::QuadraticSmooth { lambda } = &spec.problem else {
        return Err(Error::NotSmooth(spec.name().to_string()));
    };
    let mut g: Vec<f64> = lambda.iter().zip(x).map(|(l, v)| l * v).collect();
    if let XiSample::Direction(z) = xi {
        spec.check_point(z)?;
        g.iter_mut().zip(z).for_each(|(gi, zi)| *gi += zi);
    }
    Ok(g)
}

/// Exact `∇f(x)` for the quadratic.
pub fn grad_f(spec: &ObjectiveSpec, x: &[f64]) -> Result<Vec<f64>> {
    eval_grad_smooth(spec, x, &XiSample::Degenerate)
}
