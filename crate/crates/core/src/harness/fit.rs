use crate::error::{Error, Result};

/// Least-squares line through `(log(1/ε), log queries)` points.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

/// Ordinary least squares on points that are already log-transformed.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if points.len() < 2 || !(sxx > 0.0) {
        return Err(Error::param("points", "need at least two distinct abscissae"));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
        points: points.to_vec(),
    })
}

/// Fits `q ≈ C · x^{−slope}` from raw `(x, q)` pairs, e.g. `(ε, queries)`.
pub fn fit_power_law(raw: &[(f64, f64)]) -> Result<SlopeFit> {
    if raw.iter().any(|(x, q)| !(*x > 0.0 && *q > 0.0)) {
        return Err(Error::param("points", "power-law fits need positive values"));
    }
    let pts: Vec<(f64, f64)> = raw.iter().map(|(x, q)| ((1.0 / x).ln(), q.ln())).collect();
    fit_loglog(&pts)
}
