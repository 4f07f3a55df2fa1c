//! Order-fixed reductions, replica summaries, regression and a normality test.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::run_replicas;
use crate::special::norm_cdf;

/// Pairwise summation; the grouping depends only on the length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Neumaier-compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// Sample mean and variance of replica outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub var: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let count = xs.len();
        if count == 0 {
            return Summary { count, mean: f64::NAN, var: f64::NAN };
        }
        let mean = pairwise_sum(xs) / count as f64;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if count > 1 { pairwise_sum(&dev) / (count - 1) as f64 } else { 0.0 };
        Summary { count, mean, var }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        (self.var / self.count as f64).sqrt()
    }

    /// Half-width of the 3-sigma interval for the mean.
    pub fn ci3(&self) -> f64 {
        3.0 * self.se()
    }

    /// Standard error of the sample variance under normality.
    pub fn var_se(&self) -> f64 {
        self.var * (2.0 / (self.count as f64 - 1.0)).sqrt()
    }
}

/// Unbiased sample covariance.
pub fn covariance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ma = pairwise_sum(a) / a.len() as f64;
    let mb = pairwise_sum(b) / b.len() as f64;
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    pairwise_sum(&prod) / (a.len() as f64 - 1.0)
}

/// Ordinary least squares of `y` on `x` with intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// Residual variance with `m - 2` degrees of freedom.
    pub residual_var: f64,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

pub fn ols(x: &[f64], y: &[f64]) -> Regression {
    assert_eq!(x.len(), y.len());
    let m = x.len() as f64;
    let mx = pairwise_sum(x) / m;
    let my = pairwise_sum(y) / m;
    let sxx = pairwise_sum(&x.iter().map(|a| (a - mx) * (a - mx)).collect::<Vec<_>>());
    let sxy = pairwise_sum(&x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect::<Vec<_>>());
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    let rss = pairwise_sum(&residuals.iter().map(|r| r * r).collect::<Vec<_>>());
    let residual_var = if m > 2.0 { rss / (m - 2.0) } else { 0.0 };
    let slope_se = if sxx > 0.0 { (residual_var / sxx).sqrt() } else { f64::INFINITY };
    Regression { slope, intercept, slope_se, residual_var, residuals }
}

/// Anderson–Darling statistic for normality with estimated mean and
/// variance, with the usual small-sample factor `1 + 0.75/m + 2.25/m^2`.
pub fn anderson_darling(xs: &[f64]) -> f64 {
    let m = xs.len();
    assert!(m >= 8, "need at least 8 samples");
    let s = Summary::of(xs);
    let sd = s.var.sqrt();
    if sd == 0.0 {
        return f64::INFINITY;
    }
    let mut z: Vec<f64> = xs.iter().map(|x| (x - s.mean) / sd).collect();
    z.sort_by(|a, b| a.total_cmp(b));
    let mf = m as f64;
    let terms: Vec<f64> = (0..m)
        .map(|i| {
            let lo = norm_cdf(z[i]).max(1e-300);
            let hi = (1.0 - norm_cdf(z[m - 1 - i])).max(1e-300);
            (2.0 * i as f64 + 1.0) * (lo.ln() + hi.ln())
        })
        .collect();
    let a2 = -mf - pairwise_sum(&terms) / mf;
    a2 * (1.0 + 0.75 / mf + 2.25 / (mf * mf))
}

/// Upper `level` quantile of the adjusted statistic for Gaussian samples
/// of size `m`, estimated by simulation and cached per `(m, level)`.
pub fn anderson_darling_critical(m: usize, level: f64) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), f64>>> = OnceLock::new();
    let key = (m, level.to_bits());
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().expect("cache lock").get(&key) {
        return *v;
    }
    let reps = 4000;
    let mut stats = run_replicas(reps, 0xAD_5EED ^ m as u64, |_, rng| {
        let xs: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
        anderson_darling(&xs)
    });
    stats.sort_by(|a, b| a.total_cmp(b));
    let idx = (((1.0 - level) * reps as f64).ceil() as usize).min(reps - 1);
    let v = stats[idx];
    cache.lock().expect("cache lock").insert(key, v);
    v
}

/// Result of a normality test at a given level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityTest {
    pub statistic: f64,
    pub critical: f64,
    pub level: f64,
    pub rejected: bool,
}

pub fn normality_test(xs: &[f64], level: f64) -> NormalityTest {
    let statistic = anderson_darling(xs);
    let critical = anderson_darling_critical(xs.len(), level);
    NormalityTest { statistic, critical, level, rejected: statistic > critical }
}

/// `max / min` of positive values; infinite if any value is not positive.
pub fn spread(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;
    use rand::Rng;

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&xs), 249_750.0);
        let mut c = Compensated::default();
        for _ in 0..10 {
            c.add(0.1);
        }
        assert_eq!(c.value(), 1.0);
    }

    #[test]
    fn summary_and_covariance() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.var - 5.0 / 3.0).abs() < 1e-15);
        assert!((covariance(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn regression_recovers_line() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let r = ols(&x, &y);
        assert!((r.slope - 3.0).abs() < 1e-12);
        assert!((r.intercept + 1.0).abs() < 1e-10);
        assert!(r.residual_var < 1e-20);
    }

    #[test]
    fn simulated_critical_value_is_close_to_tabulated() {
        // Tabulated 1% point of the adjusted statistic (case of estimated
        // mean and variance) is 1.035.
        let c = anderson_darling_critical(200, 0.01);
        assert!((c - 1.035).abs() < 0.12, "critical {c}");
    }

    #[test]
    fn normality_test_behaves() {
        let mut rng = replica_rng(5, 0);
        let gauss: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(!normality_test(&gauss, 0.01).rejected);
        let expo: Vec<f64> = (0..500).map(|_| -rng.random::<f64>().ln()).collect();
        assert!(normality_test(&expo, 0.01).rejected);
    }

    #[test]
    fn spread_of_values() {
        assert_eq!(spread(&[1.0, 2.0, 1.5]), 2.0);
        assert!(spread(&[0.0, 1.0]).is_infinite());
    }
}
