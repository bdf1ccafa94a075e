//! Sampling oracles, mini-batch estimators and their query accounting.
//!
//! Estimators are realized classically: a mean of `n` independent oracle
//! draws where `n` guarantees the requested mean-square error. The
//! [`CostModel`] only decides what gets written to the [`QueryLedger`]:
//! in quantum mode the charge follows the quantum mean-estimation cost
//! `⌈c_q · √d · L̂ / σ̂⌉` per oracle, in classical mode the batch is charged
//! draw by draw.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};

use rand::Rng;

use crate::error::{Error, Result};
use crate::objectives::{eval_grad_smooth, sample_xi, ObjectiveSpec};
use crate::smoothing::{fill_sphere, SmoothingParams, TwoPoint};
use crate::stats::RunningMoments;
use crate::vecops::dist;

/// `16√2π`, the variance constant of the two-point estimator.
pub const TWO_POINT_VARIANCE: f64 = 16.0 * SQRT_2 * PI;

/// `U_F` calls per `O_{g_δ}` draw.
pub const GRAD_ORACLE_UF: u64 = 2;
/// `U_F` calls per `O_{Δg_δ}` draw.
pub const GRAD_DIFF_ORACLE_UF: u64 = 4;

/// Oracle calls of each kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Charge {
    pub uf: u64,
    pub classical: u64,
    pub grad_oracle: u64,
}

impl Charge {
    pub const ZERO: Charge = Charge {
        uf: 0,
        classical: 0,
        grad_oracle: 0,
    };

    pub fn total(&self) -> u64 {
        self.uf + self.classical + self.grad_oracle
    }
}

impl std::ops::Add for Charge {
    type Output = Charge;
    fn add(self, o: Charge) -> Charge {
        Charge {
            uf: self.uf + o.uf,
            classical: self.classical + o.classical,
            grad_oracle: self.grad_oracle + o.grad_oracle,
        }
    }
}

impl std::ops::Sub for Charge {
    type Output = Charge;
    fn sub(self, o: Charge) -> Charge {
        Charge {
            uf: self.uf - o.uf,
            classical: self.classical - o.classical,
            grad_oracle: self.grad_oracle - o.grad_oracle,
        }
    }
}

impl std::ops::AddAssign for Charge {
    fn add_assign(&mut self, o: Charge) {
        *self = *self + o;
    }
}

/// Additive oracle-call counters, with a per-phase breakdown.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryLedger {
    totals: Charge,
    phases: BTreeMap<String, Charge>,
}

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&mut self, phase: &str, c: Charge) {
        self.totals += c;
        *self.phases.entry(phase.to_string()).or_default() += c;
    }

    pub fn merge(&mut self, other: &QueryLedger) {
        self.totals += other.totals;
        for (k, v) in &other.phases {
            *self.phases.entry(k.clone()).or_default() += *v;
        }
    }

    pub fn totals(&self) -> Charge {
        self.totals
    }

    pub fn uf_queries(&self) -> u64 {
        self.totals.uf
    }

    pub fn classical_queries(&self) -> u64 {
        self.totals.classical
    }

    pub fn grad_oracle_queries(&self) -> u64 {
        self.totals.grad_oracle
    }

    pub fn phase(&self, label: &str) -> Charge {
        self.phases.get(label).copied().unwrap_or_default()
    }

    pub fn phases(&self) -> impl Iterator<Item = (&str, Charge)> {
        self.phases.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostMode {
    Quantum,
    Classical,
}

impl std::str::FromStr for CostMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantum" => Ok(CostMode::Quantum),
            "classical" => Ok(CostMode::Classical),
            other => Err(Error::Config(format!("unknown cost mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for CostMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CostMode::Quantum => "quantum",
            CostMode::Classical => "classical",
        })
    }
}

/// What to do with the polylogarithmic factors hidden in `Õ(·)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogFactorPolicy {
    Ignored,
    /// Multiply quantum charges by `max(1, ⌈log₂(1/σ̂)⌉)^k`.
    Explicit(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub mode: CostMode,
    pub c_q: f64,
    pub log_factor: LogFactorPolicy,
}

impl Default for CostModel {
    fn default() -> Self {
        Self::quantum()
    }
}

impl CostModel {
    pub fn quantum() -> Self {
        Self {
            mode: CostMode::Quantum,
            c_q: 1.0,
            log_factor: LogFactorPolicy::Ignored,
        }
    }

    pub fn classical() -> Self {
        Self {
            mode: CostMode::Classical,
            ..Self::quantum()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_q.is_finite() && self.c_q > 0.0) {
            return Err(Error::param("c_q", "must be positive"));
        }
        Ok(())
    }

    fn log_multiplier(&self, sigma_hat: f64) -> u64 {
        match self.log_factor {
            LogFactorPolicy::Ignored => 1,
            LogFactorPolicy::Explicit(k) => {
                let base = (1.0 / sigma_hat).log2().ceil().max(1.0) as u64;
                base.pow(k)
            }
        }
    }

    /// A charge of `oracle_calls` draws of an oracle that costs `per_call` units of
    /// the mode's primary counter.
    fn charge_for(&self, calls: u64, per_call: u64, smooth_track: bool) -> Charge {
        let units = calls * per_call;
        match (self.mode, smooth_track) {
            (_, true) => Charge {
                grad_oracle: units,
                ..Charge::ZERO
            },
            (CostMode::Quantum, false) => Charge {
                uf: units,
                ..Charge::ZERO
            },
            (CostMode::Classical, false) => Charge {
                classical: units,
                ..Charge::ZERO
            },
        }
    }
}

/// `⌈v⌉`, except that values within `1e-9` (relative) of an integer round to it.
fn ceil_count(v: f64) -> u64 {
    if !v.is_finite() {
        return u64::MAX;
    }
    let r = v.round();
    let c = if (v - r).abs() <= 1e-9 * r.abs().max(1.0) { r } else { v.ceil() };
    (c as u64).max(1)
}

/// Oracle calls needed to estimate a `d`-dimensional mean with per-sample
/// deviation `l_hat` to root-mean-square error `sigma_hat`.
///
/// Quantum: `max(1, ⌈c_q √d L̂ / σ̂⌉)` (times the log factor). Classical:
/// `max(1, ⌈L̂² / σ̂²⌉)`, where `L̂²` bounds the full-vector variance.
pub fn quantum_mean_cost(l_hat: f64, d: usize, sigma_hat: f64, model: &CostModel) -> Result<u64> {
    if !(sigma_hat > 0.0) {
        return Err(Error::param("sigma_hat", "target deviation must be positive"));
    }
    if !(l_hat >= 0.0) {
        return Err(Error::param("l_hat", "deviation bound must be non-negative"));
    }
    Ok(match model.mode {
        CostMode::Quantum => {
            ceil_count(model.c_q * (d as f64).sqrt() * l_hat / sigma_hat)
                .saturating_mul(model.log_multiplier(sigma_hat))
        }
        CostMode::Classical => classical_batch(l_hat * l_hat / (sigma_hat * sigma_hat)),
    })
}

fn classical_batch(ratio: f64) -> u64 {
    ceil_count(ratio)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateKind {
    Grad,
    GradDiff,
}

/// An unbiased estimate together with what it cost.
#[derive(Debug, Clone, PartialEq)]
pub struct GradEstimate {
    pub value: Vec<f64>,
    /// `σ̂²`, the guaranteed bound on the mean-square error.
    pub target_variance: f64,
    pub queries_charged: u64,
    /// Number of oracle draws actually averaged.
    pub draws: u64,
    pub kind: EstimateKind,
}

/// Batch size of the classical realization of [`estimate_grad`].
pub fn grad_batch_size(d: usize, lipschitz: f64, sigma_hat: f64) -> u64 {
    classical_batch(TWO_POINT_VARIANCE * d as f64 * lipschitz * lipschitz / (sigma_hat * sigma_hat))
}

/// Batch size of the classical realization of [`estimate_grad_diff`].
pub fn grad_diff_batch_size(d: usize, lipschitz: f64, distance: f64, delta: f64, sigma_hat: f64) -> u64 {
    let dl = d as f64 * lipschitz * distance / delta;
    classical_batch(dl * dl / (sigma_hat * sigma_hat))
}

/// Ledger charge of one [`estimate_grad`] call.
pub fn grad_charge(d: usize, lipschitz: f64, sigma_hat: f64, model: &CostModel) -> Result<Charge> {
    let calls = match model.mode {
        // L̂ = √d·L; the √(16√2π) factor is folded into c_q.
        CostMode::Quantum => quantum_mean_cost((d as f64).sqrt() * lipschitz, d, sigma_hat, model)?,
        CostMode::Classical => grad_batch_size(d, lipschitz, sigma_hat),
    };
    Ok(model.charge_for(calls, GRAD_ORACLE_UF, false))
}

/// Ledger charge of one [`estimate_grad_diff`] call for points `distance` apart.
pub fn grad_diff_charge(
    d: usize,
    lipschitz: f64,
    distance: f64,
    delta: f64,
    sigma_hat: f64,
    model: &CostModel,
) -> Result<Charge> {
    if distance == 0.0 {
        return Ok(Charge::ZERO);
    }
    if !(sigma_hat > 0.0) {
        return Err(Error::UnachievableVariance);
    }
    let calls = match model.mode {
        CostMode::Quantum => {
            let l_hat = d as f64 * lipschitz * distance / delta;
            quantum_mean_cost(l_hat, d, sigma_hat, model)?
        }
        CostMode::Classical => grad_diff_batch_size(d, lipschitz, distance, delta, sigma_hat),
    };
    Ok(model.charge_for(calls, GRAD_DIFF_ORACLE_UF, false))
}

/// Ledger charge of one [`estimate_sgrad`] call.
pub fn sgrad_charge(d: usize, sigma: f64, sigma_hat: f64, model: &CostModel) -> Result<Charge> {
    let calls = match model.mode {
        CostMode::Quantum => quantum_mean_cost(sigma, d, sigma_hat, model)?,
        CostMode::Classical => classical_batch(sigma * sigma / (sigma_hat * sigma_hat)),
    };
    Ok(model.charge_for(calls, 1, true))
}

/// Ledger charge of one [`estimate_sgrad_diff`] call.
pub fn sgrad_diff_charge(
    d: usize,
    l: f64,
    distance: f64,
    sigma_hat: f64,
    model: &CostModel,
) -> Result<Charge> {
    if distance == 0.0 {
        return Ok(Charge::ZERO);
    }
    if !(sigma_hat > 0.0) {
        return Err(Error::UnachievableVariance);
    }
    let l_hat = l * distance;
    let calls = match model.mode {
        CostMode::Quantum => quantum_mean_cost(l_hat, d, sigma_hat, model)?,
        CostMode::Classical => classical_batch(l_hat * l_hat / (sigma_hat * sigma_hat)),
    };
    Ok(model.charge_for(calls, 1, true))
}

fn single_draw_charge(model: &CostModel, per_call: u64) -> Charge {
    model.charge_for(1, per_call, false)
}

/// One draw of `O_{g_δ}`: `g_δ(x; w, ξ)` with fresh `(w, ξ)`.
pub fn o_g_delta<R: Rng + ?Sized>(
    spec: &ObjectiveSpec,
    x: &[f64],
    params: SmoothingParams,
    model: &CostModel,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<Vec<f64>> {
    spec.check_point(x)?;
    let d = spec.d();
    let mut w = vec![0.0; d];
    fill_sphere(&mut w, rng);
    let xi = sample_xi(spec, rng);
    let c = TwoPoint::new(d).coefficient(spec, x, params.delta(), &w, &xi);
    ledger.charge("o_g_delta", single_draw_charge(model, GRAD_ORACLE_UF));
    Ok(w.into_iter().map(|v| c * v).collect())
}

/// One draw of `O_{Δg_δ}`: `g_δ(x; w, ξ) − g_δ(y; w, ξ)` with one shared `(w, ξ)`.
pub fn o_delta_g<R: Rng + ?Sized>(
    spec: &ObjectiveSpec,
    x: &[f64],
    y: &[f64],
    params: SmoothingParams,
    model: &CostModel,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<Vec<f64>> {
    spec.check_point(x)?;
    spec.check_point(y)?;
    let d = spec.d();
    let mut w = vec![0.0; d];
    fill_sphere(&mut w, rng);
    let xi = sample_xi(spec, rng);
    let mut tp = TwoPoint::new(d);
    let c = tp.coefficient(spec, x, params.delta(), &w, &xi)
        - tp.coefficient(spec, y, params.delta(), &w, &xi);
    ledger.charge("o_delta_g", single_draw_charge(model, GRAD_DIFF_ORACLE_UF));
    Ok(w.into_iter().map(|v| c * v).collect())
}

fn check_sigma(sigma_hat: f64) -> Result<()> {
    if !(sigma_hat > 0.0 && sigma_hat.is_finite()) {
        return Err(Error::param("sigma_hat", "target deviation must be positive"));
    }
    Ok(())
}

/// Unbiased estimate of `∇f_δ(x)` with `E‖ĝ − ∇f_δ(x)‖² ≤ σ̂²`.
pub fn estimate_grad<R: Rng + ?Sized>(
    spec: &ObjectiveSpec,
    x: &[f64],
    params: SmoothingParams,
    sigma_hat: f64,
    model: &CostModel,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<GradEstimate> {
    spec.check_point(x)?;
    check_sigma(sigma_hat)?;
    let d = spec.d();
    let n = grad_batch_size(d, spec.lipschitz(), sigma_hat);
    let charge = grad_charge(d, spec.lipschitz(), sigma_hat, model)?;
    let mut tp = TwoPoint::new(d);
    let mut w = vec![0.0; d];
    let mut sum = vec![0.0; d];
    for _ in 0..n {
        fill_sphere(&mut w, rng);
        let xi = sample_xi(spec, rng);
        let c = tp.coefficient(spec, x, params.delta(), &w, &xi);
        sum.iter_mut().zip(&w).for_each(|(s, wi)| *s += c * wi);
    }
    let inv = 1.0 / n as f64;
    sum.iter_mut().for_each(|s| *s *= inv);
    ledger.charge("estimate_grad", charge);
    Ok(GradEstimate {
        value: sum,
        target_variance: sigma_hat * sigma_hat,
        queries_charged: charge.total(),
        draws: n,
        kind: EstimateKind::Grad,
    })
}

/// Unbiased estimate of `∇f_δ(x) − ∇f_δ(y)` with mean-square error at most `σ̂²`.
///
/// Coincident points return the exact zero vector at no cost; `σ̂ = 0` is only
/// achievable in that case.
#[allow(clippy::too_many_arguments)]
pub fn estimate_grad_diff<R: Rng + ?Sized>(
    spec: &ObjectiveSpec,
    x: &[f64],
    y: &[f64],
    params: SmoothingParams,
    sigma_hat: f64,
    model: &CostModel,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<GradEstimate> {
    spec.check_point(x)?;
    spec.check_point(y)?;
    let d = spec.d();
    let distance = dist(x, y);
    if distance == 0.0 {
        return Ok(GradEstimate {
            value: vec![0.0; d],
            target_variance: sigma_hat * sigma_hat,
            queries_charged: 0,
            draws: 0,
            kind: EstimateKind::GradDiff,
        });
    }
    if sigma_hat == 0.0 {
        return Err(Error::UnachievableVariance);
    }
    check_sigma(sigma_hat)?;
    let delta = params.delta();
    let n = grad_diff_batch_size(d, spec.lipschitz(), distance, delta, sigma_hat);
    let charge = grad_diff_charge(d, spec.lipschitz(), distance, delta, sigma_hat, model)?;
    let mut tp = TwoPoint::new(d);
    let mut w = vec![0.0; d];
    let mut sum = vec![0.0; d];
    for _ in 0..n {
        fill_sphere(&mut w, rng);
        let xi = sample_xi(spec, rng);
        let c = tp.coefficient(spec, x, delta, &w, &xi) - tp.coefficient(spec, y, delta, &w, &xi);
        sum.iter_mut().zip(&w).for_each(|(s, wi)| *s += c * wi);
    }
    let inv = 1.0 / n as f64;
    sum.iter_mut().for_each(|s| *s *= inv);
    ledger.charge("estimate_grad_diff", charge);
    Ok(GradEstimate {
        value: sum,
        target_variance: sigma_hat * sigma_hat,
        queries_charged: charge.total(),
        draws: n,
        kind: EstimateKind::GradDiff,
    })
}

/// Unbiased estimate of `∇f(x)` from stochastic gradients (smooth track).
pub fn estimate_sgrad<R: Rng + ?Sized>(
    spec: &ObjectiveSpec,
    x: &[f64],
    sigma_hat: f64,
    model: &CostModel,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<GradEstimate> {
    spec.check_point(x)?;
    let sp = spec
        .smooth_params()
        .ok_or_else(|| Error::NotSmooth(spec.name().to_string()))?;
    check_sigma(sigma_hat)?;
    let d = spec.d();
    let n = classical_batch(sp.sigma * sp.sigma / (sigma_hat * sigma_hat));
    let charge = sgrad_charge(d, sp.sigma, sigma_hat, model)?;
    let mut acc = RunningMoments::new(d);
    for _ in 0..n {
        let xi = sample_xi(spec, rng);
        acc.push(&eval_grad_smooth(spec, x, &xi)?);
    }
    ledger.charge("estimate_sgrad", charge);
    Ok(GradEstimate {
        value: acc.into_mean(),
        target_variance: sigma_hat * sigma_hat,
        queries_charged: charge.total(),
        draws: n,
        kind: EstimateKind::Grad,
    })
}

/// Unbiased estimate of `∇f(x) − ∇f(y)` from shared-index stochastic gradients.
#[allow(clippy::too_many_arguments)]
pub fn estimate_sgrad_diff<R: Rng + ?Sized>(
    spec: &ObjectiveSpec,
    x: &[f64],
    y: &[f64],
    sigma_hat: f64,
    model: &CostModel,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<GradEstimate> {
    spec.check_point(x)?;
    spec.check_point(y)?;
    let sp = spec
        .smooth_params()
        .ok_or_else(|| Error::NotSmooth(spec.name().to_string()))?;
    let d = spec.d();
    let distance = dist(x, y);
    if distance == 0.0 {
        return Ok(GradEstimate {
            value: vec![0.0; d],
            target_variance: sigma_hat * sigma_hat,
            queries_charged: 0,
            draws: 0,
            kind: EstimateKind::GradDiff,
        });
    }
    if sigma_hat == 0.0 {
        return Err(Error::UnachievableVariance);
    }
    check_sigma(sigma_hat)?;
    let l_hat = sp.l * distance;
    let n = classical_batch(l_hat * l_hat / (sigma_hat * sigma_hat));
    let charge = sgrad_diff_charge(d, sp.l, distance, sigma_hat, model)?;
    let mut acc = RunningMoments::new(d);
    for _ in 0..n {
        let xi = sample_xi(spec, rng);
        let gx = eval_grad_smooth(spec, x, &xi)?;
        let gy = eval_grad_smooth(spec, y, &xi)?;
        let diff: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a - b).collect();
        acc.push(&diff);
    }
    ledger.charge("estimate_sgrad_diff", charge);
    Ok(GradEstimate {
        value: acc.into_mean(),
        target_variance: sigma_hat * sigma_hat,
        queries_charged: charge.total(),
        draws: n,
        kind: EstimateKind::GradDiff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{catalog_make, ObjectiveSpec};
    use crate::rng::Streams;
    use proptest::prelude::*;

    fn rng() -> crate::rng::StreamRng {
        Streams::new(99).stream("qoracle")
    }

    #[test]
    fn integral_ratios_are_not_rounded_up() {
        // √8 · √8 / 0.1 evaluates to 80.00000000000001
        let c = grad_charge(8, 1.0, 0.1, &CostModel::quantum()).unwrap();
        assert_eq!(c.uf, 160);
        assert_eq!(ceil_count(2.5), 3);
        assert_eq!(ceil_count(0.0), 1);
    }

    #[test]
    fn quantum_mean_cost_examples() {
        let q = CostModel::quantum();
        assert_eq!(quantum_mean_cost(2.0, 4, 0.5, &q).unwrap(), 8);
        assert_eq!(quantum_mean_cost(0.0, 4, 0.5, &q).unwrap(), 1);
        assert_eq!(quantum_mean_cost(2.0, 4, 1.0, &q).unwrap(), 4);
        assert!(quantum_mean_cost(1.0, 4, 0.0, &q).is_err());
        let c = CostModel::classical();
        assert_eq!(quantum_mean_cost(2.0, 4, 0.5, &c).unwrap(), 16);
    }

    #[test]
    fn log_factor_policy() {
        let m = CostModel {
            log_factor: LogFactorPolicy::Explicit(2),
            ..CostModel::quantum()
        };
        // ⌈log₂(1/0.1)⌉ = 4
        assert_eq!(quantum_mean_cost(1.0, 1, 0.1, &m).unwrap(), 10 * 16);
        assert_eq!(quantum_mean_cost(1.0, 1, 0.9, &m).unwrap(), 2);
    }

    #[test]
    fn oracle_charge_rules() {
        let spec = catalog_make("constant", 3, 0.0).unwrap();
        let p = SmoothingParams::new(0.1).unwrap();
        let mut ledger = QueryLedger::new();
        let mut r = rng();
        let g = o_g_delta(&spec, &[1.0; 3], p, &CostModel::quantum(), &mut r, &mut ledger).unwrap();
        assert_eq!(g, vec![0.0; 3]);
        assert_eq!(ledger.uf_queries(), 2);
        o_g_delta(&spec, &[1.0; 3], p, &CostModel::quantum(), &mut r, &mut ledger).unwrap();
        assert_eq!(ledger.uf_queries(), 4);
        o_delta_g(&spec, &[1.0; 3], &[0.0; 3], p, &CostModel::quantum(), &mut r, &mut ledger)
            .unwrap();
        assert_eq!(ledger.uf_queries(), 8);
        o_g_delta(&spec, &[1.0; 3], p, &CostModel::classical(), &mut r, &mut ledger).unwrap();
        assert_eq!(ledger.classical_queries(), 2);
        assert_eq!(ledger.phase("o_delta_g").uf, 4);
    }

    #[test]
    fn delta_g_of_identical_points_is_zero() {
        let spec = catalog_make("sawtooth", 4, 0.2).unwrap();
        let p = SmoothingParams::new(0.1).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4];
        let mut ledger = QueryLedger::new();
        let v = o_delta_g(&spec, &x, &x, p, &CostModel::quantum(), &mut rng(), &mut ledger).unwrap();
        assert_eq!(v, vec![0.0; 4]);
    }

    #[test]
    fn delta_g_shares_randomness() {
        // Replaying the same stream through g_δ at x and y must reproduce o_delta_g exactly.
        let spec = catalog_make("sawtooth", 3, 0.2).unwrap();
        let p = SmoothingParams::new(0.1).unwrap();
        let (x, y) = ([0.1, 0.7, -0.3], [0.15, 0.6, -0.2]);
        let mut ledger = QueryLedger::new();
        let streams = Streams::new(5);
        let v = o_delta_g(&spec, &x, &y, p, &CostModel::quantum(), &mut streams.stream("s"), &mut ledger)
            .unwrap();
        let mut r = streams.stream("s");
        let w = crate::smoothing::sample_sphere(3, &mut r).unwrap();
        let xi = sample_xi(&spec, &mut r);
        let gx = crate::smoothing::g_delta(&spec, &x, p, &w, &xi).unwrap();
        let gy = crate::smoothing::g_delta(&spec, &y, p, &w, &xi).unwrap();
        for i in 0..3 {
            approx::assert_abs_diff_eq!(v[i], gx[i] - gy[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn estimate_grad_batch_floor_and_constant() {
        let spec = ObjectiveSpec::abs_linear(2).unwrap();
        let p = SmoothingParams::new(0.1).unwrap();
        let big = (TWO_POINT_VARIANCE * 2.0).sqrt() * spec.lipschitz();
        let mut ledger = QueryLedger::new();
        let e = estimate_grad(&spec, &[0.3, 0.4], p, big, &CostModel::quantum(), &mut rng(), &mut ledger)
            .unwrap();
        assert_eq!(e.draws, 1);
        // same stream, one oracle draw
        let single = o_g_delta(&spec, &[0.3, 0.4], p, &CostModel::quantum(), &mut rng(), &mut ledger)
            .unwrap();
        assert_eq!(e.value, single);

        let c = catalog_make("constant", 5, 0.5).unwrap();
        let e = estimate_grad(&c, &[0.0; 5], p, 1e-3, &CostModel::quantum(), &mut rng(), &mut ledger)
            .unwrap();
        assert_eq!(e.value, vec![0.0; 5]);
        assert!(estimate_grad(&c, &[0.0; 5], p, 0.0, &CostModel::quantum(), &mut rng(), &mut ledger)
            .is_err());
    }

    #[test]
    fn estimate_grad_diff_examples() {
        let spec = ObjectiveSpec::abs_linear(2).unwrap();
        let p = SmoothingParams::new(0.1).unwrap();
        let mut ledger = QueryLedger::new();
        let x = [0.3, 0.4];
        let e = estimate_grad_diff(&spec, &x, &x, p, 0.5, &CostModel::quantum(), &mut rng(), &mut ledger)
            .unwrap();
        assert_eq!(e.value, vec![0.0, 0.0]);
        assert_eq!(e.queries_charged, 0);
        assert_eq!(ledger.totals(), Charge::ZERO);
        let e = estimate_grad_diff(&spec, &x, &x, p, 0.0, &CostModel::quantum(), &mut rng(), &mut ledger)
            .unwrap();
        assert_eq!(e.queries_charged, 0);

        let y = [0.4, 0.4];
        let e = estimate_grad_diff(&spec, &x, &y, p, 1.0, &CostModel::quantum(), &mut rng(), &mut ledger)
            .unwrap();
        assert_eq!(e.queries_charged, 12);
        assert_eq!(
            estimate_grad_diff(&spec, &x, &y, p, 0.0, &CostModel::quantum(), &mut rng(), &mut ledger),
            Err(Error::UnachievableVariance)
        );
    }

    #[test]
    fn smooth_estimator_examples() {
        let q = ObjectiveSpec::quadratic(4).unwrap();
        let mut ledger = QueryLedger::new();
        let x = [1.0, -1.0, 0.5, 2.0];
        let e = estimate_sgrad(&q, &x, 0.5, &CostModel::quantum(), &mut rng(), &mut ledger).unwrap();
        assert_eq!(e.value, crate::objectives::grad_f(&q, &x).unwrap());
        assert_eq!(e.queries_charged, 1);

        let noisy = q.clone().with_noise(1.0).unwrap();
        let e = estimate_sgrad(&noisy, &x, 0.5, &CostModel::quantum(), &mut rng(), &mut ledger).unwrap();
        assert_eq!(e.queries_charged, 4);
        assert_eq!(e.draws, 4);

        let l1 = ObjectiveSpec::quadratic_with(vec![1.0; 4]).unwrap().with_noise(1.0).unwrap();
        let y = [1.2, -1.0, 0.5, 2.0];
        let e = estimate_sgrad_diff(&l1, &x, &y, 0.1, &CostModel::quantum(), &mut rng(), &mut ledger)
            .unwrap();
        assert_eq!(e.queries_charged, 4);
        let e = estimate_sgrad_diff(&l1, &x, &x, 0.1, &CostModel::quantum(), &mut rng(), &mut ledger)
            .unwrap();
        assert_eq!((e.queries_charged, e.value), (0, vec![0.0; 4]));
        let s = catalog_make("sawtooth", 4, 0.0).unwrap();
        assert!(matches!(
            estimate_sgrad(&s, &x, 0.5, &CostModel::quantum(), &mut rng(), &mut ledger),
            Err(Error::NotSmooth(_))
        ));
    }

    #[test]
    fn ledger_phases_sum_to_totals() {
        let mut a = QueryLedger::new();
        a.charge("x", Charge { uf: 3, ..Charge::ZERO });
        a.charge("y", Charge { classical: 2, ..Charge::ZERO });
        let mut b = QueryLedger::new();
        b.charge("x", Charge { grad_oracle: 5, uf: 1, ..Charge::ZERO });
        let mut ab = a.clone();
        ab.merge(&b);
        let mut ba = b.clone();
        ba.merge(&a);
        assert_eq!(ab, ba);
        assert_eq!(ab.totals(), Charge { uf: 4, classical: 2, grad_oracle: 5 });
        let sum = ab.phases().fold(Charge::ZERO, |acc, (_, c)| acc + c);
        assert_eq!(sum, ab.totals());
    }

    proptest! {
        #[test]
        fn ledger_merge_is_associative(xs in proptest::collection::vec((0u64..1000, 0u64..1000, 0u64..1000, 0usize..3), 0..12)) {
            let labels = ["a", "b", "c"];
            let ledgers: Vec<QueryLedger> = xs.chunks(4).map(|chunk| {
                let mut l = QueryLedger::new();
                for (u, c, g, k) in chunk {
                    l.charge(labels[*k], Charge { uf: *u, classical: *c, grad_oracle: *g });
                }
                l
            }).collect();
            let mut left = QueryLedger::new();
            ledgers.iter().for_each(|l| left.merge(l));
            let mut right = QueryLedger::new();
            ledgers.iter().rev().for_each(|l| right.merge(l));
            prop_assert_eq!(left, right);
        }

        #[test]
        fn quantum_charge_is_monotone_in_sigma(l_hat in 0.0f64..100.0, d in 1usize..64, s in 1e-3f64..10.0) {
            let q = CostModel::quantum();
            let a = quantum_mean_cost(l_hat, d, s, &q).unwrap();
            let b = quantum_mean_cost(l_hat, d, 2.0 * s, &q).unwrap();
            prop_assert!(b <= a);
            // doubling σ̂ halves the cost up to the ceiling
            prop_assert!(a <= 2 * b);
        }
    }
}
