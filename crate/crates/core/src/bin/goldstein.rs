use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use goldstein::circuit::{circuit_demo, RegisterLayout};
use goldstein::harness::{
    exit_code, run_experiment, scaling_sweep, write_csv, write_outputs, ExperimentConfig,
    EXIT_BUDGET, EXIT_OK,
};
use goldstein::objectives::catalog_make;
use goldstein::qoracle::CostMode;
use goldstein::rng::Streams;
use goldstein::smoothing::SmoothingParams;
use goldstein::stationarity::verify_stationary;
use goldstein::{Error, Result};

#[derive(Parser)]
#[command(name = "goldstein", version, about = "Query-accounted Goldstein stationarity solvers")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Replaces the config's seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_cost_mode)]
    cost_mode: Option<CostMode>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (eps, seed) cell of a config and emit one CSV row per run.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run an eps grid and fit the query-count exponent.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sample the emulated direction-preparation circuit.
    CircuitDemo {
        #[arg(long)]
        m1: usize,
        #[arg(long)]
        m2: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n: usize,
    },
    /// Check whether a point is (delta, eps)-Goldstein stationary.
    Verify {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        d: usize,
        /// Comma-separated coordinates.
        #[arg(long)]
        point: String,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
    },
}

fn parse_cost_mode(s: &str) -> std::result::Result<CostMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load(path: &Path, global: &Global) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_path(path)?;
    if let Some(seed) = global.seed {
        config.seeds = vec![seed];
    }
    if let Some(mode) = global.cost_mode {
        config.cost.mode = mode;
    }
    if let Some(out) = &global.out {
        config.out_path = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad coordinate `{v}`: {e}")))
        })
        .collect()
}

fn execute(cli: Cli) -> Result<i32> {
    let g = &cli.global;
    match cli.command {
        Command::Run { config } => {
            let config = load(&config, g)?;
            let output = run_experiment(&config)?;
            match &config.out_path {
                Some(p) => write_outputs(&output, p)?,
                None => write_csv(&output.rows, std::io::stdout().lock())?,
            }
            Ok(if output.any_aborted() { EXIT_BUDGET } else { EXIT_OK })
        }
        Command::Sweep { config } => {
            let config = load(&config, g)?;
            let sweep = scaling_sweep(&config)?;
            if let Some(p) = &config.out_path {
                write_outputs(&sweep.output, p)?;
            }
            let mut text = String::new();
            for (eps, q) in &sweep.means {
                text.push_str(&format!("eps={eps} mean_queries={q}\n"));
            }
            text.push_str(&format!(
                "algorithm={} slope={:.4} intercept={:.4} r_squared={:.6}\n",
                config.algorithm, sweep.fit.slope, sweep.fit.intercept, sweep.fit.r_squared
            ));
            print!("{text}");
            Ok(if sweep.output.any_aborted() { EXIT_BUDGET } else { EXIT_OK })
        }
        Command::CircuitDemo { m1, m2, d, n } => {
            let layout = RegisterLayout::new(m1, m2, d)?;
            let mut rng = Streams::new(g.seed.unwrap_or(0)).stream("circuit-demo");
            let r = circuit_demo(layout, n, &mut rng)?;
            let mut text = format!(
                "m1={} m2={} d={} frac_bits={} total_qubits={}\nsamples={} rejections={} rejection_rate={:.6}\n",
                layout.m1,
                layout.m2,
                layout.d,
                layout.frac_bits,
                layout.total_qubits(),
                r.samples,
                r.rejections,
                r.rejection_rate
            );
            if let Some(t) = r.xi_uniformity {
                text.push_str(&format!("xi_chi2={:.4} xi_p={:.4}\n", t.statistic, t.p_value));
            }
            let ks = r.last_coordinate_uniformity;
            text.push_str(&format!("last_coord_ks={:.6} last_coord_p={:.4}\n", ks.statistic, ks.p_value));
            match r.statevector_tv {
                Some(tv) => text.push_str(&format!("statevector_tv={tv:.6}\n")),
                None => text.push_str("statevector_tv=skipped\n"),
            }
            emit(&text, g.out.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::Verify {
            problem,
            d,
            point,
            delta,
            eps,
            confidence,
        } => {
            let spec = catalog_make(&problem, d, 0.0)?;
            let x = parse_point(&point)?;
            let params = SmoothingParams::new(delta)?;
            let mut rng = Streams::new(g.seed.unwrap_or(0)).stream("verify");
            let v = verify_stationary(&spec, &x, params, eps, confidence, &mut rng)?;
            let rep = &v.report;
            let mut text = format!(
                "verdict={}\nresidual_est={:?}\nresidual_halfwidth={:?}\nconfidence={}\nn={}\n",
                v.verdict, rep.estimate, rep.half_width, rep.confidence, rep.n
            );
            if let Some(e) = rep.exact {
                text.push_str(&format!("exact_distance={e:?}\n"));
            }
            emit(&text, g.out.as_deref())?;
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
