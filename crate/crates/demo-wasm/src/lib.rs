//! Browser bindings for the demo page in `www/`.
//!
//! Each export has a plain Rust counterpart so the logic can be tested natively.

use goldstein::algorithms::{
    derive_params_qgfm, derive_params_qgfm_plus, qgfm, qgfm_plus, Realization, RunOptions,
};
use goldstein::circuit::{pipeline_sample_valid, HForm, RegisterLayout};
use goldstein::objectives::{catalog_make, eval_f};
use goldstein::qoracle::{estimate_grad, CostMode, CostModel, QueryLedger};
use goldstein::rng::Streams;
use goldstein::smoothing::SmoothingParams;
use goldstein::Result;
use wasm_bindgen::prelude::*;

const DELTA: f64 = 0.1;

/// QGFM iterates on a 2-d problem, flattened as `[x0, y0, x1, y1, …]`.
pub fn trajectory(problem: &str, eps: f64, start_x: f64, start_y: f64, seed: u64, max_steps: usize) -> Result<Vec<f64>> {
    let spec = catalog_make(problem, 2, 0.0)?.with_start(vec![start_x, start_y])?;
    let params = derive_params_qgfm(2, spec.lipschitz(), DELTA, eps, spec.delta_0())?;
    let smoothing = SmoothingParams::new(DELTA)?;
    let model = CostModel::quantum();
    let mut rng = Streams::new(seed).stream("trajectory");
    let mut ledger = QueryLedger::default();
    let mut x = spec.x0().to_vec();
    let mut path = x.clone();
    let sigma_hat = params.sigma1_sq.sqrt();
    for _ in 0..params.iterations.min(max_steps) {
        let g = estimate_grad(&spec, &x, smoothing, sigma_hat, &model, &mut rng, &mut ledger)?;
        x.iter_mut().zip(&g.value).for_each(|(xi, gi)| *xi -= params.eta * gi);
        path.extend_from_slice(&x);
    }
    Ok(path)
}

/// `f` on an `n × n` grid over `[lo, hi]²`, row-major with `y` varying slowest.
pub fn landscape(problem: &str, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    let spec = catalog_make(problem, 2, 0.0)?;
    let step = (hi - lo) / (n.max(2) - 1) as f64;
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            out.push(eval_f(&spec, &[lo + i as f64 * step, lo + j as f64 * step])?);
        }
    }
    Ok(out)
}

/// Directions from the emulated preparation circuit in `d = 2`, flattened, with
/// the number of rejected `w′ = 0` outcomes appended.
pub fn circuit_directions(m2: usize, n: usize, seed: u64) -> Result<Vec<f64>> {
    let layout = RegisterLayout::new(1, m2, 2)?;
    let mut rng = Streams::new(seed).stream("directions");
    let mut out = Vec::with_capacity(2 * n + 1);
    let mut rejections = 0;
    for _ in 0..n {
        let s = pipeline_sample_valid(&layout, HForm::Corrected, &mut rng);
        rejections += s.rejections;
        out.extend_from_slice(s.w.as_slice());
    }
    out.push(rejections as f64);
    Ok(out)
}

/// Ledger totals over a geometric ε grid on the `d`-dimensional sawtooth,
/// flattened as `[ε, queries, …]`.
pub fn ledger_curve(plus: bool, classical: bool, d: usize, eps_hi: f64, eps_lo: f64, points: usize) -> Result<Vec<f64>> {
    let spec = catalog_make("sawtooth", d, 0.0)?;
    let smoothing = SmoothingParams::new(DELTA)?;
    let model = CostModel {
        mode: if classical { CostMode::Classical } else { CostMode::Quantum },
        ..CostModel::quantum()
    };
    let opts = RunOptions {
        realization: Realization::LedgerOnly,
        ..RunOptions::default()
    };
    let points = points.max(2);
    let ratio = (eps_lo / eps_hi).powf(1.0 / (points - 1) as f64);
    let mut out = Vec::with_capacity(2 * points);
    for k in 0..points {
        let eps = eps_hi * ratio.powi(k as i32);
        let r = if plus {
            let p = derive_params_qgfm_plus(d, spec.lipschitz(), DELTA, eps, spec.delta_0())?;
            qgfm_plus(&spec, spec.x0(), &p, smoothing, &model, 0, &opts)?
        } else {
            let p = derive_params_qgfm(d, spec.lipschitz(), DELTA, eps, spec.delta_0())?;
            qgfm(&spec, spec.x0(), &p, smoothing, &model, 0, &opts)?
        };
        let t = r.ledger.totals();
        out.push(eps);
        out.push((t.uf + t.classical) as f64);
    }
    Ok(out)
}

fn js(e: goldstein::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = trajectory)]
pub fn trajectory_js(problem: &str, eps: f64, start_x: f64, start_y: f64, seed: u32, max_steps: u32) -> std::result::Result<Vec<f64>, JsError> {
    trajectory(problem, eps, start_x, start_y, seed as u64, max_steps as usize).map_err(js)
}

#[wasm_bindgen(js_name = landscape)]
pub fn landscape_js(problem: &str, lo: f64, hi: f64, n: u32) -> std::result::Result<Vec<f64>, JsError> {
    landscape(problem, lo, hi, n as usize).map_err(js)
}

#[wasm_bindgen(js_name = circuitDirections)]
pub fn circuit_directions_js(m2: u32, n: u32, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    circuit_directions(m2 as usize, n as usize, seed as u64).map_err(js)
}

#[wasm_bindgen(js_name = ledgerCurve)]
pub fn ledger_curve_js(plus: bool, classical: bool, d: u32, eps_hi: f64, eps_lo: f64, points: u32) -> std::result::Result<Vec<f64>, JsError> {
    ledger_curve(plus, classical, d as usize, eps_hi, eps_lo, points as usize).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_moves_downhill() {
        let p = trajectory("abs-linear", 0.3, 0.8, 0.6, 1, 400).unwrap();
        assert_eq!(p.len() % 2, 0);
        let f = |x: f64, y: f64| ((x + y) / 2f64.sqrt()).abs();
        let n = p.len();
        assert!(f(p[n - 2], p[n - 1]) < f(p[0], p[1]));
    }

    #[test]
    fn landscape_shape() {
        let l = landscape("sawtooth", 0.0, 1.0, 3).unwrap();
        assert_eq!(l.len(), 9);
        assert_eq!(l[0], 0.0);
        assert!((l[4] - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn directions_are_unit() {
        let v = circuit_directions(4, 50, 3).unwrap();
        assert_eq!(v.len(), 101);
        for c in v[..100].chunks(2) {
            assert!((c[0].hypot(c[1]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quantum_curve_is_cheaper() {
        let q = ledger_curve(false, false, 4, 0.4, 0.1, 3).unwrap();
        let c = ledger_curve(false, true, 4, 0.4, 0.1, 3).unwrap();
        assert_eq!(q.len(), 6);
        assert!(q[5] < c[5] && q[1] < q[5]);
    }
}
