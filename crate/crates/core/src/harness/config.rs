//! Flat `key = value` experiment files.
//!
//! ```text
//! # QGFM on the sawtooth
//! algorithm = qgfm
//! problem = sawtooth
//! d = 8
//! delta = 0.1
//! eps_grid = 0.4, 0.2, 0.1
//! seeds = 0..5
//! cost.mode = quantum
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::algorithms::{Realization, ResidualOptions, DEFAULT_BUDGET_CAP};
use crate::error::{Error, Result};
use crate::objectives::CATALOG;
use crate::qoracle::{CostMode, CostModel, LogFactorPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Qgfm,
    QgfmPlus,
    QgmPlus,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Qgfm => "qgfm",
            Algorithm::QgfmPlus => "qgfm_plus",
            Algorithm::QgmPlus => "qgm_plus",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qgfm" => Ok(Algorithm::Qgfm),
            "qgfm_plus" => Ok(Algorithm::QgfmPlus),
            "qgm_plus" => Ok(Algorithm::QgmPlus),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub problem: String,
    pub d: usize,
    pub noise_scale: f64,
    /// Smoothing radius; ignored by `qgm_plus`.
    pub delta: f64,
    pub eps: Vec<f64>,
    pub seeds: Vec<u64>,
    pub cost: CostModel,
    pub trace: bool,
    pub out_path: Option<PathBuf>,
    pub residual: Option<ResidualOptions>,
    pub realization: Realization,
    pub budget_cap: u64,
    /// Record wall-clock time; off by default so outputs stay byte-identical.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Qgfm,
            problem: "sawtooth".into(),
            d: 8,
            noise_scale: 0.0,
            delta: 0.1,
            eps: vec![0.2],
            seeds: vec![0],
            cost: CostModel::quantum(),
            trace: false,
            out_path: None,
            residual: Some(ResidualOptions::default()),
            realization: Realization::Full,
            budget_cap: DEFAULT_BUDGET_CAP,
            timing: false,
        }
    }
}

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{key} = {value}`: {why}"))
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| bad(key, value, e))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

/// `0..5`, `0..=4` or `1, 2, 7`.
fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = value.split_once("..") {
        let (b, inclusive) = match b.strip_prefix('=') {
            Some(rest) => (rest, true),
            None => (b, false),
        };
        let lo: u64 = parse_num("seeds", a.trim())?;
        let hi: u64 = parse_num("seeds", b.trim())?;
        let hi = if inclusive { hi + 1 } else { hi };
        if hi <= lo {
            return Err(bad("seeds", value, "empty range"));
        }
        return Ok((lo..hi).collect());
    }
    parse_list("seeds", value)
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if pairs.insert(k.clone(), v).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", lineno + 1)));
            }
        }
        let mut c = ExperimentConfig::default();
        let mut eps_seen = false;
        let mut log_k = 0u32;
        for (k, v) in &pairs {
            match k.as_str() {
                "algorithm" => c.algorithm = v.parse()?,
                "problem" => c.problem = v.clone(),
                "d" => c.d = parse_num(k, v)?,
                "noise_scale" => c.noise_scale = parse_num(k, v)?,
                "delta" => c.delta = parse_num(k, v)?,
                "eps" | "eps_grid" => {
                    if eps_seen {
                        return Err(Error::Config("give either eps or eps_grid, not both".into()));
                    }
                    eps_seen = true;
                    c.eps = parse_list(k, v)?;
                }
                "seeds" => c.seeds = parse_seeds(v)?,
                "cost.mode" => c.cost.mode = v.parse::<CostMode>()?,
                "cost.cq" => c.cost.c_q = parse_num(k, v)?,
                "cost.logk" => log_k = parse_num(k, v)?,
                "trace" => c.trace = parse_bool(k, v)?,
                "out_path" => c.out_path = Some(PathBuf::from(v)),
                "residual.n" => {
                    let n: usize = parse_num(k, v)?;
                    c.residual = (n > 0).then(|| ResidualOptions {
                        n,
                        ..c.residual.unwrap_or_default()
                    });
                }
                "residual.confidence" => {
                    let confidence = parse_num(k, v)?;
                    if let Some(r) = c.residual.as_mut() {
                        r.confidence = confidence;
                    }
                }
                "realize" => {
                    c.realization = match v.as_str() {
                        "full" => Realization::Full,
                        "ledger" => Realization::LedgerOnly,
                        _ => return Err(bad(k, v, "expected full or ledger")),
                    }
                }
                "budget_cap" => c.budget_cap = parse_num::<f64>(k, v)? as u64,
                "timing" => c.timing = parse_bool(k, v)?,
                other => return Err(Error::Config(format!("unknown key `{other}`"))),
            }
        }
        if !eps_seen {
            return Err(Error::Config("missing eps or eps_grid".into()));
        }
        c.cost.log_factor = if log_k == 0 {
            LogFactorPolicy::Ignored
        } else {
            LogFactorPolicy::Explicit(log_k)
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !CATALOG.contains(&self.problem.as_str()) {
            return Err(Error::Config(format!("unknown problem `{}`", self.problem)));
        }
        if self.d == 0 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config("noise_scale must be non-negative".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config("delta must be positive".into()));
        }
        if self.eps.is_empty() || self.eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::Config("eps values must be positive".into()));
        }
        let mut sorted = self.eps.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("eps values must be distinct".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("need at least one seed".into()));
        }
        if let Some(r) = self.residual {
            if r.n < 2 || !(r.confidence > 0.0 && r.confidence < 1.0) {
                return Err(Error::Config(
                    "residual.n must be ≥ 2 and residual.confidence in (0, 1)".into(),
                ));
            }
        }
        self.cost
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Extra conditions for a scaling sweep: three or more eps values spanning at least 4×.
    pub fn validate_sweep(&self) -> Result<()> {
        let lo = self.eps.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.eps.iter().cloned().fold(0.0, f64::max);
        if self.eps.len() < 3 || hi / lo < 4.0 {
            return Err(Error::Config(
                "a sweep needs at least 3 eps values spanning a 4x range".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# comment line
algorithm = qgfm_plus
problem = abs-linear   # trailing comment
d = 4
delta = 0.2
eps_grid = 0.4, 0.2, 0.1
seeds = 0..3
cost.mode = classical
cost.logk = 1
residual.n = 5000
realize = ledger
";

    #[test]
    fn parses_a_full_file() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.algorithm, Algorithm::QgfmPlus);
        assert_eq!(c.problem, "abs-linear");
        assert_eq!(c.d, 4);
        assert_eq!(c.eps, vec![0.4, 0.2, 0.1]);
        assert_eq!(c.seeds, vec![0, 1, 2]);
        assert_eq!(c.cost.mode, CostMode::Classical);
        assert_eq!(c.cost.log_factor, LogFactorPolicy::Explicit(1));
        assert_eq!(c.residual.unwrap().n, 5000);
        assert_eq!(c.realization, Realization::LedgerOnly);
        c.validate_sweep().unwrap();
    }

    #[test]
    fn rejects_bad_files() {
        for text in [
            "eps = 0.1\nbogus = 1",
            "problem = nope\neps = 0.1",
            "eps = 0.1, 0.1",
            "eps = -0.1",
            "d = 0\neps = 0.1",
            "algorithm = sgd\neps = 0.1",
            "eps = 0.1\neps = 0.2",
            "eps = 0.1\neps_grid = 0.2",
            "seeds = 3..3\neps = 0.1",
            "just a line",
            "",
        ] {
            assert!(matches!(ExperimentConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
        let narrow = ExperimentConfig::parse("eps_grid = 0.4, 0.3, 0.2").unwrap();
        assert!(narrow.validate_sweep().is_err());
    }

    #[test]
    fn seed_forms() {
        assert_eq!(parse_seeds("0..=2").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("5, 9").unwrap(), vec![5, 9]);
    }
}
