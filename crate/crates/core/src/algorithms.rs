//! QGFM, QGFM+ and QGM+, with their parameter schedules.
//!
//! All three share one loop. QGFM estimates the gradient afresh every
//! iteration; the `+` variants flip a coin and, on tails, update the previous
//! estimate with a cheap difference estimate. QGM+ runs the same loop on the
//! exact stochastic gradient instead of the smoothed surrogate.
//!
//! Every run draws from separate labelled streams (`estimates`, `coins`,
//! `select`, `diagnostics`, `residual`), so a [`Realization::LedgerOnly`]
//! replay sees the same coins and output index as the full run.

use rand::Rng;

use crate::error::{Error, Result};
use crate::objectives::{eval_f, grad_f, ObjectiveSpec, SmoothParams};
use crate::qoracle::{
    estimate_grad, estimate_grad_diff, estimate_sgrad, estimate_sgrad_diff, grad_charge,
    grad_diff_charge, sgrad_charge, sgrad_diff_charge, Charge, CostModel, LogFactorPolicy,
    QueryLedger,
};
use crate::rng::{StreamRng, Streams};
use crate::smoothing::{
    accumulate_g_delta, f_delta, f_delta_closed, grad_f_delta_closed, FDeltaMode, SmoothingParams,
};
use crate::stationarity::goldstein_residual;
use crate::vecops::{axpy, dist, norm};

/// Runs abort once the ledger would exceed this many charges.
pub const DEFAULT_BUDGET_CAP: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QgfmParams {
    pub eta: f64,
    pub iterations: usize,
    pub sigma1_sq: f64,
}

impl QgfmParams {
    pub fn validate(&self) -> Result<()> {
        positive("eta", self.eta)?;
        positive("sigma1_sq", self.sigma1_sq)?;
        if self.iterations == 0 {
            return Err(Error::param("iterations", "need at least one iteration"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QgfmPlusParams {
    pub eta: f64,
    pub iterations: usize,
    pub p: f64,
    pub sigma1_sq: f64,
    /// `σ̂₂² = κ · ‖x_t − x_{t−1}‖²`.
    pub kappa: f64,
}

impl QgfmPlusParams {
    pub fn validate(&self) -> Result<()> {
        QgfmParams::from(*self).validate()?;
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::param("p", "coin probability must lie in (0, 1]"));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::param("kappa", "must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn sigma2_sq(&self, step: f64) -> f64 {
        self.kappa * step * step
    }
}

impl From<QgfmPlusParams> for QgfmParams {
    fn from(p: QgfmPlusParams) -> Self {
        QgfmParams {
            eta: p.eta,
            iterations: p.iterations,
            sigma1_sq: p.sigma1_sq,
        }
    }
}

impl From<QgfmParams> for QgfmPlusParams {
    fn from(p: QgfmParams) -> Self {
        QgfmPlusParams {
            eta: p.eta,
            iterations: p.iterations,
            p: 1.0,
            sigma1_sq: p.sigma1_sq,
            kappa: 0.0,
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, "must be positive"))
    }
}

fn non_negative(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, "must be non-negative"))
    }
}

/// `⌈v⌉`, ignoring representation error just above an integer.
fn ceil_iterations(v: f64) -> Result<usize> {
    if !(v.is_finite() && v < 1e15) {
        return Err(Error::param("iterations", format!("schedule length {v} is not representable")));
    }
    let r = v.round();
    let c = if (v - r).abs() <= 1e-9 * r.abs().max(1.0) { r } else { v.ceil() };
    Ok((c as usize).max(1))
}

/// Schedule of QGFM for target `ε`, initial gap `Δ`.
pub fn derive_params_qgfm(d: usize, l: f64, delta: f64, eps: f64, big_delta: f64) -> Result<QgfmParams> {
    if d == 0 {
        return Err(Error::ZeroDimension);
    }
    positive("L", l)?;
    positive("delta", delta)?;
    positive("eps", eps)?;
    non_negative("Delta", big_delta)?;
    let sd = (d as f64).sqrt();
    let eta = delta / (2.0 * sd * l);
    let t = 2.0 / (eps * eps) * (4.0 * sd * l * l + 2.0 * sd * l * big_delta / delta);
    Ok(QgfmParams {
        eta,
        iterations: ceil_iterations(t)?,
        sigma1_sq: eps * eps / 2.0,
    })
}

/// Schedule of QGFM+; requires `ε ≤ L` so that the coin probability is at most one.
pub fn derive_params_qgfm_plus(
    d: usize,
    l: f64,
    delta: f64,
    eps: f64,
    big_delta: f64,
) -> Result<QgfmPlusParams> {
    if d == 0 {
        return Err(Error::ZeroDimension);
    }
    positive("L", l)?;
    positive("delta", delta)?;
    positive("eps", eps)?;
    non_negative("Delta", big_delta)?;
    if eps > l {
        return Err(Error::param("eps", "must not exceed L (coin probability above one)"));
    }
    let sd = (d as f64).sqrt();
    let p = (eps / l).powf(2.0 / 3.0);
    let l_delta = sd * l / delta;
    let t = 8.0 * l_delta / (eps * eps) * (big_delta + 2.0 * delta * l) + 4.0 / p;
    Ok(QgfmPlusParams {
        eta: delta / (2.0 * sd * l),
        iterations: ceil_iterations(t)?,
        p,
        sigma1_sq: eps * eps / 2.0,
        kappa: eps.powf(2.0 / 3.0) * l.powf(4.0 / 3.0) * d as f64 / (delta * delta),
    })
}

/// Schedule of QGM+ on an `l`-mean-square-smooth problem with gradient noise `σ`.
/// With `σ = 0` every estimate is exact and the coin always lands heads.
pub fn derive_params_qgm_plus(
    l: f64,
    sigma: f64,
    eps: f64,
    big_delta: f64,
    d: usize,
) -> Result<QgfmPlusParams> {
    if d == 0 {
        return Err(Error::ZeroDimension);
    }
    positive("l", l)?;
    non_negative("sigma", sigma)?;
    positive("eps", eps)?;
    non_negative("Delta", big_delta)?;
    let (p, kappa, tail) = if sigma == 0.0 {
        (1.0, 0.0, 0.0)
    } else {
        let p = (eps / sigma).powf(2.0 / 3.0);
        if p > 1.0 {
            return Err(Error::param("eps", "must not exceed sigma (coin probability above one)"));
        }
        let s23 = sigma.powf(2.0 / 3.0);
        (
            p,
            l * l * eps.powf(2.0 / 3.0) / s23,
            4.0 * s23 * eps.powf(-4.0 / 3.0),
        )
    };
    let t = 8.0 * l * big_delta / (eps * eps) + tail;
    Ok(QgfmPlusParams {
        eta: 1.0 / (2.0 * l),
        iterations: ceil_iterations(t)?,
        p,
        sigma1_sq: eps * eps / 2.0,
        kappa,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Realization {
    /// Sample every estimate and move the iterate.
    Full,
    /// Replay coins and charges only. Tails charges assume `x_{t+1} ≠ x_t`, so
    /// the totals bound a full run from above and match it while steps are non-zero.
    LedgerOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualOptions {
    pub n: usize,
    pub confidence: f64,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        Self {
            n: 100_000,
            confidence: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub realization: Realization,
    pub trace: bool,
    /// Monte Carlo samples for the reference quantities in `Φ_t` when no closed form exists.
    pub phi_samples: usize,
    pub budget_cap: u64,
    pub residual: Option<ResidualOptions>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            realization: Realization::Full,
            trace: false,
            phi_samples: 2000,
            budget_cap: DEFAULT_BUDGET_CAP,
            residual: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    /// Charge of the estimate `g_t`.
    pub charge: Charge,
    /// The coin that decided how `g_t` was built; `None` for `g_0` and for QGFM.
    pub coin: Option<bool>,
    /// `NaN` in ledger-only runs.
    pub grad_norm: f64,
    /// `‖x_{t+1} − x_t‖`; `NaN` in ledger-only runs.
    pub step_norm: f64,
    /// `Φ_t` from reference oracles (full runs with tracing only).
    pub phi: Option<f64>,
    /// `‖∇f_δ(x_t)‖²` from the same reference.
    pub ref_grad_sq: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalResidual {
    pub estimate: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub x_out: Vec<f64>,
    pub out_index: usize,
    pub iterations_run: usize,
    pub final_residual: Option<FinalResidual>,
    pub ledger: QueryLedger,
    pub trace: Option<Vec<TraceRecord>>,
    pub seed: u64,
    pub aborted: bool,
    pub realization: Realization,
}

enum Track<'a> {
    Smoothed {
        spec: &'a ObjectiveSpec,
        smoothing: SmoothingParams,
    },
    Smooth {
        spec: &'a ObjectiveSpec,
        sp: SmoothParams,
    },
}

impl Track<'_> {
    fn spec(&self) -> &ObjectiveSpec {
        match self {
            Track::Smoothed { spec, .. } | Track::Smooth { spec, .. } => spec,
        }
    }

    fn full_charge(&self, sigma1: f64, model: &CostModel) -> Result<Charge> {
        match self {
            Track::Smoothed { spec, .. } => grad_charge(spec.d(), spec.lipschitz(), sigma1, model),
            Track::Smooth { spec, sp } => sgrad_charge(spec.d(), sp.sigma, sigma1, model),
        }
    }

    fn diff_charge(&self, distance: f64, sigma2: f64, model: &CostModel) -> Result<Charge> {
        match self {
            Track::Smoothed { spec, smoothing } => grad_diff_charge(
                spec.d(),
                spec.lipschitz(),
                distance,
                smoothing.delta(),
                sigma2,
                model,
            ),
            Track::Smooth { spec, sp } => sgrad_diff_charge(spec.d(), sp.l, distance, sigma2, model),
        }
    }

    fn phases(&self) -> (&'static str, &'static str) {
        match self {
            Track::Smoothed { .. } => ("estimate_grad", "estimate_grad_diff"),
            Track::Smooth { .. } => ("estimate_sgrad", "estimate_sgrad_diff"),
        }
    }

    fn full(
        &self,
        x: &[f64],
        sigma1: f64,
        model: &CostModel,
        rng: &mut StreamRng,
        ledger: &mut QueryLedger,
    ) -> Result<Vec<f64>> {
        Ok(match self {
            Track::Smoothed { spec, smoothing } => {
                estimate_grad(spec, x, *smoothing, sigma1, model, rng, ledger)?.value
            }
            Track::Smooth { spec, .. } => estimate_sgrad(spec, x, sigma1, model, rng, ledger)?.value,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn diff(
        &self,
        x: &[f64],
        y: &[f64],
        sigma2: f64,
        model: &CostModel,
        rng: &mut StreamRng,
        ledger: &mut QueryLedger,
    ) -> Result<Vec<f64>> {
        Ok(match self {
            Track::Smoothed { spec, smoothing } => {
                estimate_grad_diff(spec, x, y, *smoothing, sigma2, model, rng, ledger)?.value
            }
            Track::Smooth { spec, .. } => {
                estimate_sgrad_diff(spec, x, y, sigma2, model, rng, ledger)?.value
            }
        })
    }

    /// Reference `(f_δ(x), ∇f_δ(x))`, or `(f(x), ∇f(x))` on the smooth track.
    fn reference(&self, x: &[f64], samples: usize, rng: &mut StreamRng) -> Result<(f64, Vec<f64>)> {
        match self {
            Track::Smoothed { spec, smoothing } => {
                let delta = smoothing.delta();
                let value = match f_delta_closed(spec, x, delta) {
                    Some(v) => v,
                    None => f_delta(spec, x, *smoothing, FDeltaMode::MonteCarlo(samples), rng)?.value,
                };
                let grad = match grad_f_delta_closed(spec, x, delta) {
                    Some(g) => g,
                    None => accumulate_g_delta(spec, x, delta, samples, rng).into_mean(),
                };
                Ok((value, grad))
            }
            Track::Smooth { spec, .. } => Ok((eval_f(spec, x)?, grad_f(spec, x)?)),
        }
    }

    fn residual(&self, x: &[f64], opts: ResidualOptions, rng: &mut StreamRng) -> Result<FinalResidual> {
        match self {
            Track::Smoothed { spec, smoothing } => {
                let rep = goldstein_residual(spec, x, *smoothing, opts.n, opts.confidence, rng)?;
                Ok(FinalResidual {
                    estimate: rep.estimate,
                    half_width: rep.half_width,
                })
            }
            Track::Smooth { spec, .. } => Ok(FinalResidual {
                estimate: norm(&grad_f(spec, x)?),
                half_width: 0.0,
            }),
        }
    }
}

struct Schedule {
    eta: f64,
    iterations: usize,
    p: f64,
    sigma1: f64,
    kappa: f64,
    coins: bool,
}

fn run_loop(
    track: Track<'_>,
    x0: &[f64],
    s: Schedule,
    model: &CostModel,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunResult> {
    model.validate()?;
    let spec = track.spec();
    spec.check_point(x0)?;
    let ledger_only = opts.realization == Realization::LedgerOnly;
    if ledger_only && s.coins && model.log_factor != LogFactorPolicy::Ignored {
        return Err(Error::param(
            "realization",
            "ledger-only replay of difference estimates needs the log factor ignored",
        ));
    }
    let streams = Streams::new(seed);
    let mut est_rng = streams.stream("estimates");
    let mut coin_rng = streams.stream("coins");
    let out_index = streams.stream("select").random_range(0..s.iterations);
    let (full_phase, diff_phase) = track.phases();
    let sqrt_kappa = s.kappa.sqrt();
    let tails_charge_unit = if ledger_only && s.coins && s.p < 1.0 {
        Some(track.diff_charge(1.0, sqrt_kappa, model)?)
    } else {
        None
    };

    let mut ledger = QueryLedger::new();
    let mut trace = opts.trace.then(Vec::new);
    let mut x = x0.to_vec();
    let mut prev: Vec<f64> = x0.to_vec();
    let mut g = vec![0.0; spec.d()];
    let mut x_out = x0.to_vec();
    let mut coin: Option<bool> = None;
    let mut aborted = false;
    let mut iterations_run = 0;

    for t in 0..s.iterations {
        let heads = coin.unwrap_or(true);
        let before = ledger.totals();
        let step_prev = if heads || ledger_only { 0.0 } else { dist(&x, &prev) };
        let planned = if heads {
            track.full_charge(s.sigma1, model)?
        } else if let Some(c) = tails_charge_unit {
            c
        } else {
            track.diff_charge(step_prev, sqrt_kappa * step_prev, model)?
        };
        if before.total().saturating_add(planned.total()) > opts.budget_cap {
            aborted = true;
            break;
        }
        if ledger_only {
            ledger.charge(if heads { full_phase } else { diff_phase }, planned);
        } else if heads {
            g = track.full(&x, s.sigma1, model, &mut est_rng, &mut ledger)?;
        } else {
            let dg = track.diff(&x, &prev, sqrt_kappa * step_prev, model, &mut est_rng, &mut ledger)?;
            axpy(1.0, &dg, &mut g);
        }
        if t == out_index {
            x_out.clone_from(&x);
        }
        if let Some(records) = trace.as_mut() {
            let (grad_norm, step_norm) = if ledger_only {
                (f64::NAN, f64::NAN)
            } else {
                let gn = norm(&g);
                (gn, s.eta * gn)
            };
            let (phi, ref_grad_sq) = if ledger_only {
                (None, None)
            } else {
                let mut diag = streams.stream_at("diagnostics", t as u64);
                let (fv, gref) = track.reference(&x, opts.phi_samples, &mut diag)?;
                let err_sq: f64 = g.iter().zip(&gref).map(|(a, b)| (a - b) * (a - b)).sum();
                let p = if s.coins { s.p } else { 1.0 };
                (
                    Some(fv - spec.f_star() + s.eta / (2.0 * p) * err_sq),
                    Some(gref.iter().map(|v| v * v).sum()),
                )
            };
            records.push(TraceRecord {
                t,
                charge: ledger.totals() - before,
                coin,
                grad_norm,
                step_norm,
                phi,
                ref_grad_sq,
            });
        }
        iterations_run = t + 1;
        if t + 1 < s.iterations {
            if !ledger_only {
                prev.clone_from(&x);
                axpy(-s.eta, &g, &mut x);
            }
            if s.coins {
                coin = Some(coin_rng.random::<f64>() < s.p);
            }
        }
    }
    if aborted && iterations_run <= out_index {
        x_out.clone_from(&x);
    }

    let final_residual = match opts.residual {
        Some(r) if !ledger_only && !aborted => {
            Some(track.residual(&x_out, r, &mut streams.stream("residual"))?)
        }
        _ => None,
    };
    Ok(RunResult {
        x_out,
        out_index,
        iterations_run,
        final_residual,
        ledger,
        trace,
        seed,
        aborted,
        realization: opts.realization,
    })
}

/// Quantum gradient-free method: fresh gradient estimates every iteration.
pub fn qgfm(
    spec: &ObjectiveSpec,
    x0: &[f64],
    params: &QgfmParams,
    smoothing: SmoothingParams,
    model: &CostModel,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunResult> {
    params.validate()?;
    run_loop(
        Track::Smoothed { spec, smoothing },
        x0,
        Schedule {
            eta: params.eta,
            iterations: params.iterations,
            p: 1.0,
            sigma1: params.sigma1_sq.sqrt(),
            kappa: 0.0,
            coins: false,
        },
        model,
        seed,
        opts,
    )
}

/// Variance-reduced QGFM: full estimates on heads, difference updates on tails.
pub fn qgfm_plus(
    spec: &ObjectiveSpec,
    x0: &[f64],
    params: &QgfmPlusParams,
    smoothing: SmoothingParams,
    model: &CostModel,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunResult> {
    params.validate()?;
    run_loop(
        Track::Smoothed { spec, smoothing },
        x0,
        plus_schedule(params),
        model,
        seed,
        opts,
    )
}

/// The QGFM+ loop on stochastic gradients of a smooth problem.
pub fn qgm_plus(
    spec: &ObjectiveSpec,
    x0: &[f64],
    params: &QgfmPlusParams,
    model: &CostModel,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunResult> {
    params.validate()?;
    let sp = spec
        .smooth_params()
        .ok_or_else(|| Error::NotSmooth(spec.name().to_string()))?;
    run_loop(Track::Smooth { spec, sp }, x0, plus_schedule(params), model, seed, opts)
}

fn plus_schedule(params: &QgfmPlusParams) -> Schedule {
    Schedule {
        eta: params.eta,
        iterations: params.iterations,
        p: params.p,
        sigma1: params.sigma1_sq.sqrt(),
        kappa: params.kappa,
        coins: true,
    }
}

/// The QGFM+ estimates `g_0, …, g_k` along a given trajectory with given coins.
///
/// `coins[t]` decides how `g_{t+1}` is built. Used to check the recursion
/// independently of the iterates it would otherwise produce.
pub fn recursive_estimates_along(
    spec: &ObjectiveSpec,
    trajectory: &[Vec<f64>],
    coins: &[bool],
    params: &QgfmPlusParams,
    smoothing: SmoothingParams,
    model: &CostModel,
    rng: &mut StreamRng,
) -> Result<Vec<Vec<f64>>> {
    if trajectory.is_empty() || coins.len() + 1 != trajectory.len() {
        return Err(Error::param("coins", "need one coin per step of the trajectory"));
    }
    let track = Track::Smoothed { spec, smoothing };
    let sigma1 = params.sigma1_sq.sqrt();
    let mut ledger = QueryLedger::new();
    let mut g = track.full(&trajectory[0], sigma1, model, rng, &mut ledger)?;
    let mut out = vec![g.clone()];
    for (t, heads) in coins.iter().enumerate() {
        let (x, y) = (&trajectory[t + 1], &trajectory[t]);
        if *heads {
            g = track.full(x, sigma1, model, rng, &mut ledger)?;
        } else {
            let sigma2 = params.sigma2_sq(dist(x, y)).sqrt();
            let dg = track.diff(x, y, sigma2, model, rng, &mut ledger)?;
            axpy(1.0, &dg, &mut g);
        }
        out.push(g.clone());
    }
    Ok(out)
}
