use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::config::{Algorithm, ExperimentConfig};
use super::fit::{fit_power_law, SlopeFit};
use crate::algorithms::{
    derive_params_qgfm, derive_params_qgfm_plus, derive_params_qgm_plus, qgfm, qgfm_plus, qgm_plus,
    RunOptions, RunResult, TraceRecord,
};
use crate::error::{Error, Result};
use crate::objectives::{catalog_make, ObjectiveSpec};
use crate::smoothing::SmoothingParams;
use crate::stationarity::Verdict;

pub const CSV_HEADER: [&str; 16] = [
    "algorithm",
    "problem",
    "d",
    "L",
    "delta",
    "eps",
    "seed",
    "T",
    "p",
    "uf_queries",
    "classical_queries",
    "grad_oracle_queries",
    "residual_est",
    "residual_halfwidth",
    "verdict",
    "wall_ms",
];

pub const TRACE_HEADER: [&str; 11] = [
    "eps",
    "seed",
    "t",
    "coin",
    "grad_norm",
    "step_norm",
    "phi",
    "ref_grad_sq",
    "uf",
    "classical",
    "grad_oracle",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Verified(Verdict),
    /// No residual was requested or the run was ledger-only.
    Unverified,
    Aborted,
}

impl std::fmt::Display for RowStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RowStatus::Verified(v) => v.fmt(f),
            RowStatus::Unverified => f.write_str("unverified"),
            RowStatus::Aborted => f.write_str("aborted"),
        }
    }
}

/// Shortest round-trip form, switching to exponent notation for extreme magnitudes.
fn num(v: f64) -> String {
    format!("{v:?}")
}

/// One run of one `(eps, seed)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub algorithm: Algorithm,
    pub problem: String,
    pub d: usize,
    pub lipschitz: f64,
    pub delta: Option<f64>,
    pub eps: f64,
    pub seed: u64,
    pub iterations: usize,
    pub p: f64,
    pub uf_queries: u64,
    pub classical_queries: u64,
    pub grad_oracle_queries: u64,
    pub residual_est: Option<f64>,
    pub residual_halfwidth: Option<f64>,
    pub status: RowStatus,
    pub wall_ms: u64,
}

impl Row {
    /// The counter the active cost mode charges; the others are zero.
    pub fn queries(&self) -> u64 {
        self.uf_queries + self.classical_queries + self.grad_oracle_queries
    }

    fn record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        vec![
            self.algorithm.to_string(),
            self.problem.clone(),
            self.d.to_string(),
            num(self.lipschitz),
            opt(self.delta),
            num(self.eps),
            self.seed.to_string(),
            self.iterations.to_string(),
            num(self.p),
            self.uf_queries.to_string(),
            self.classical_queries.to_string(),
            self.grad_oracle_queries.to_string(),
            opt(self.residual_est),
            opt(self.residual_halfwidth),
            self.status.to_string(),
            self.wall_ms.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub eps: f64,
    pub seed: u64,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    /// Sorted by eps descending, then seed ascending.
    pub rows: Vec<Row>,
    pub traces: Vec<TraceSet>,
}

impl ExperimentOutput {
    pub fn any_aborted(&self) -> bool {
        self.rows.iter().any(|r| r.status == RowStatus::Aborted)
    }
}

/// The problem instance a config describes.
pub fn build_spec(config: &ExperimentConfig) -> Result<ObjectiveSpec> {
    catalog_make(&config.problem, config.d, config.noise_scale)
}

fn run_cell(config: &ExperimentConfig, spec: &ObjectiveSpec, eps: f64, seed: u64) -> Result<(Row, Option<TraceSet>)> {
    let opts = RunOptions {
        realization: config.realization,
        trace: config.trace,
        budget_cap: config.budget_cap,
        residual: config.residual,
        ..RunOptions::default()
    };
    let d = spec.d();
    let big_delta = spec.delta_0();
    let start = Instant::now();
    let (result, iterations, p, delta): (RunResult, usize, f64, Option<f64>) = match config.algorithm {
        Algorithm::Qgfm => {
            let params = derive_params_qgfm(d, spec.lipschitz(), config.delta, eps, big_delta)?;
            let s = SmoothingParams::new(config.delta)?;
            let r = qgfm(spec, spec.x0(), &params, s, &config.cost, seed, &opts)?;
            (r, params.iterations, 1.0, Some(config.delta))
        }
        Algorithm::QgfmPlus => {
            let params = derive_params_qgfm_plus(d, spec.lipschitz(), config.delta, eps, big_delta)?;
            let s = SmoothingParams::new(config.delta)?;
            let r = qgfm_plus(spec, spec.x0(), &params, s, &config.cost, seed, &opts)?;
            (r, params.iterations, params.p, Some(config.delta))
        }
        Algorithm::QgmPlus => {
            let sp = spec
                .smooth_params()
                .ok_or_else(|| Error::NotSmooth(spec.name().to_string()))?;
            let params = derive_params_qgm_plus(sp.l, sp.sigma, eps, big_delta, d)?;
            let r = qgm_plus(spec, spec.x0(), &params, &config.cost, seed, &opts)?;
            (r, params.iterations, params.p, None)
        }
    };
    let wall_ms = if config.timing {
        start.elapsed().as_millis() as u64
    } else {
        0
    };
    let status = match (result.aborted, result.final_residual) {
        (true, _) => RowStatus::Aborted,
        (false, Some(r)) => RowStatus::Verified(Verdict::judge(r.estimate, r.half_width, eps)),
        (false, None) => RowStatus::Unverified,
    };
    let ledger = result.ledger.totals();
    let row = Row {
        algorithm: config.algorithm,
        problem: config.problem.clone(),
        d,
        lipschitz: spec.lipschitz(),
        delta,
        eps,
        seed,
        iterations,
        p,
        uf_queries: ledger.uf,
        classical_queries: ledger.classical,
        grad_oracle_queries: ledger.grad_oracle,
        residual_est: result.final_residual.map(|r| r.estimate),
        residual_halfwidth: result.final_residual.map(|r| r.half_width),
        status,
        wall_ms,
    };
    let trace = result.trace.map(|records| TraceSet { eps, seed, records });
    Ok((row, trace))
}

/// Runs every `(eps, seed)` cell of the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let spec = build_spec(config)?;
    let cells: Vec<(f64, u64)> = config
        .eps
        .iter()
        .flat_map(|e| config.seeds.iter().map(move |s| (*e, *s)))
        .collect();
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(Row, Option<TraceSet>)>> = cells
        .par_iter()
        .map(|(e, s)| run_cell(config, &spec, *e, *s))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(Row, Option<TraceSet>)>> = cells
        .iter()
        .map(|(e, s)| run_cell(config, &spec, *e, *s))
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut traces = Vec::new();
    for r in results {
        let (row, trace) = r?;
        rows.push(row);
        traces.extend(trace);
    }
    rows.sort_by(|a, b| b.eps.total_cmp(&a.eps).then(a.seed.cmp(&b.seed)));
    traces.sort_by(|a, b| b.eps.total_cmp(&a.eps).then(a.seed.cmp(&b.seed)));
    Ok(ExperimentOutput { rows, traces })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.record()).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(traces: &[TraceSet], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    for set in traces {
        for r in &set.records {
            w.write_record([
                num(set.eps),
                set.seed.to_string(),
                r.t.to_string(),
                r.coin.map(|c| (c as u8).to_string()).unwrap_or_default(),
                num(r.grad_norm),
                num(r.step_norm),
                opt(r.phi),
                opt(r.ref_grad_sq),
                r.charge.uf.to_string(),
                r.charge.classical.to_string(),
                r.charge.grad_oracle.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `results.csv` → `results.trace.csv`.
pub fn trace_path_for(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    out.with_file_name(format!("{stem}.trace.csv"))
}

/// Writes the rows (and traces, if any) to `path`.
pub fn write_outputs(output: &ExperimentOutput, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_csv(&output.rows, std::fs::File::create(path)?)?;
    if !output.traces.is_empty() {
        write_trace_csv(&output.traces, std::fs::File::create(trace_path_for(path))?)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub output: ExperimentOutput,
    /// `(eps, mean queries over seeds)`, eps descending.
    pub means: Vec<(f64, f64)>,
    pub fit: SlopeFit,
}

/// Runs the grid and fits the seed-averaged query counts against `1/ε`.
pub fn scaling_sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    config.validate()?;
    config.validate_sweep()?;
    let output = run_experiment(config)?;
    let mut means: Vec<(f64, f64)> = Vec::new();
    for eps in &config.eps {
        let qs: Vec<f64> = output
            .rows
            .iter()
            .filter(|r| r.eps == *eps)
            .map(|r| r.queries() as f64)
            .collect();
        means.push((*eps, qs.iter().sum::<f64>() / qs.len() as f64));
    }
    means.sort_by(|a, b| b.0.total_cmp(&a.0));
    let fit = fit_power_law(&means)?;
    Ok(SweepOutput { output, means, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::ResidualOptions;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            algorithm: Algorithm::Qgfm,
            problem: "abs-linear".into(),
            d: 2,
            delta: 0.2,
            eps: vec![0.9, 0.6, 0.8],
            seeds: vec![3, 1],
            residual: Some(ResidualOptions {
                n: 2000,
                confidence: 0.95,
            }),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn rows_are_complete_and_sorted() {
        let out = run_experiment(&small()).unwrap();
        assert_eq!(out.rows.len(), 6);
        let keys: Vec<(f64, u64)> = out.rows.iter().map(|r| (r.eps, r.seed)).collect();
        assert_eq!(
            keys,
            vec![(0.9, 1), (0.9, 3), (0.8, 1), (0.8, 3), (0.6, 1), (0.6, 3)]
        );
        let mut buf = Vec::new();
        write_csv(&out.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    }

    #[test]
    fn uf_column_matches_the_charge_formula() {
        let out = run_experiment(&small()).unwrap();
        for r in &out.rows {
            let sigma1 = r.eps / 2f64.sqrt();
            let per = (r.d as f64 * r.lipschitz / sigma1).ceil() as u64;
            assert_eq!(r.uf_queries, r.iterations as u64 * 2 * per);
        }
    }

    #[test]
    fn sweep_recovers_the_iteration_exponent() {
        let c = ExperimentConfig {
            eps: vec![0.8, 0.4, 0.2],
            residual: None,
            realization: crate::algorithms::Realization::LedgerOnly,
            ..small()
        };
        let s = scaling_sweep(&c).unwrap();
        assert!((s.fit.slope - 3.0).abs() < 0.4, "{:?}", s.fit);
        assert!(scaling_sweep(&small()).is_err());
    }

    #[test]
    fn trace_file_name() {
        assert_eq!(
            trace_path_for(Path::new("out/run.csv")),
            PathBuf::from("out/run.trace.csv")
        );
    }
}
