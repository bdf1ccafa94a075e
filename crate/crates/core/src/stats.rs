//! Small statistical toolkit used by the verifiers and the test suites.

use std::collections::BTreeMap;

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Coordinate-wise running mean and variance (Welford).
#[derive(Debug, Clone)]
pub struct RunningMoments {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningMoments {
    pub fn new(d: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; d],
            m2: vec![0.0; d],
        }
    }

    pub fn push(&mut self, v: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(v) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
    }

    /// Pushes `scale · w` without materializing the product.
    pub fn push_scaled(&mut self, scale: f64, w: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), wi) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(w) {
            let x = scale * wi;
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
    }

    /// Combines two accumulators as if all samples had been pushed into one.
    pub fn merge(&mut self, other: &RunningMoments) {
        if other.n == 0 {
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn into_mean(self) -> Vec<f64> {
        self.mean
    }

    /// Unbiased per-coordinate sample variance; infinite with fewer than two samples.
    pub fn variance(&self) -> Vec<f64> {
        if self.n < 2 {
            return vec![f64::INFINITY; self.mean.len()];
        }
        let denom = (self.n - 1) as f64;
        self.m2.iter().map(|s| s / denom).collect()
    }

    /// Standard error of the mean, per coordinate.
    pub fn std_error(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.variance().into_iter().map(|v| (v / n).sqrt()).collect()
    }
}

/// Two-sided standard normal quantile `z` with `P(|Z| ≤ z) = level`.
pub fn normal_two_sided_quantile(level: f64) -> f64 {
    let n = Normal::standard();
    n.inverse_cdf(0.5 + level / 2.0)
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if (k as u64) % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against `U[lo, hi]`.
pub fn ks_uniform(samples: &[f64], lo: f64, hi: f64) -> TestOutcome {
    let mut xs: Vec<f64> = samples.iter().map(|x| (x - lo) / (hi - lo)).collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in xs.iter().enumerate() {
        let c = x.clamp(0.0, 1.0);
        d = d.max((i as f64 + 1.0) / n - c).max(c - i as f64 / n);
    }
    let sn = n.sqrt();
    TestOutcome {
        statistic: d,
        p_value: kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d),
    }
}

/// Pearson χ² test of equiprobable categories.
pub fn chi_square_uniform(counts: &[u64]) -> TestOutcome {
    let k = counts.len();
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / k as f64;
    let stat = counts
        .iter()
        .map(|c| {
            let diff = *c as f64 - expected;
            diff * diff / expected
        })
        .sum::<f64>();
    let p = if k < 2 {
        1.0
    } else {
        let dist = ChiSquared::new((k - 1) as f64).expect("positive degrees of freedom");
        1.0 - dist.cdf(stat)
    };
    TestOutcome {
        statistic: stat,
        p_value: p,
    }
}

/// Total-variation distance between two empirical distributions.
pub fn total_variation<K: Ord>(a: &BTreeMap<K, u64>, b: &BTreeMap<K, u64>) -> f64 {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    let mut tv = 0.0;
    for (k, ca) in a {
        let pb = b.get(k).copied().unwrap_or(0) as f64 / nb as f64;
        tv += (*ca as f64 / na as f64 - pb).abs();
    }
    for (k, cb) in b {
        if !a.contains_key(k) {
            tv += *cb as f64 / nb as f64;
        }
    }
    tv / 2.0
}

/// Sample skewness and excess kurtosis.
pub fn shape_moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let c = x - mean;
        let c2 = c * c;
        m2 += c2;
        m3 += c2 * c;
        m4 += c2 * c2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}
