//! Descriptive statistics and the two-proportion z-test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Quantile of already sorted data with linear interpolation between order
/// statistics (position `p·(n−1)`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.is_empty() {
            return Self {
                edges: vec![0.0, 0.0],
                counts: vec![0],
            };
        }
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            return Self {
                edges: vec![lo, hi],
                counts: vec![finite.len()],
            };
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for v in finite {
            let idx = (((v - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Self { edges, counts }
    }
}

/// Mean with the central 95% interval and median, plus a histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub count: usize,
    pub mean: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Histogram,
}

impl DistributionSummary {
    pub fn from_values(values: &[f64], bins: usize) -> Self {
        let s = sorted(values);
        Self {
            count: s.len(),
            mean: mean(&s),
            q025: quantile_sorted(&s, 0.025),
            q50: quantile_sorted(&s, 0.5),
            q975: quantile_sorted(&s, 0.975),
            min: s.first().copied().unwrap_or(f64::NAN),
            max: s.last().copied().unwrap_or(f64::NAN),
            histogram: Histogram::new(&s, bins),
        }
    }

    pub fn width(&self) -> f64 {
        self.q975 - self.q025
    }
}

/// Pooled two-proportion z statistic and its two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub z: f64,
    pub p: f64,
}

/// Compares success proportions `successes_a / n` and `successes_b / n`.
///
/// When both proportions are 0 or both are 1 the pooled variance vanishes and
/// the result is `z = 0, p = 1`.
pub fn z_test(successes_a: usize, successes_b: usize, n: usize) -> Result<ZTest> {
    z_test_unpaired(successes_a, n, successes_b, n)
}

/// Two-proportion z-test with possibly different trial counts.
pub fn z_test_unpaired(successes_a: usize, n_a: usize, successes_b: usize, n_b: usize) -> Result<ZTest> {
    if n_a == 0 || n_b == 0 {
        return Err(Error::Input("z-test needs at least one trial per group".into()));
    }
    if successes_a > n_a || successes_b > n_b {
        return Err(Error::Input(format!(
            "success counts ({successes_a}, {successes_b}) exceed trials ({n_a}, {n_b})"
        )));
    }
    let (na, nb) = (n_a as f64, n_b as f64);
    let pa = successes_a as f64 / na;
    let pb = successes_b as f64 / nb;
    let pooled = (successes_a + successes_b) as f64 / (na + nb);
    let se = (pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb)).sqrt();
    if se == 0.0 {
        return Ok(ZTest { z: 0.0, p: 1.0 });
    }
    let z = (pa - pb) / se;
    let p = (2.0 * standard_normal_sf(z.abs())).clamp(0.0, 1.0);
    Ok(ZTest { z, p })
}

/// Upper tail `P(Z > x)` of the standard normal.
pub fn standard_normal_sf(x: f64) -> f64 {
    let n = Normal::standard();
    n.sf(x)
}

/// Significance marker at the conventional levels 0.1 / 0.05 / 0.01 / 0.001.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "****"
    } else if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        "ns"
    }
}

/// Welch's t-test for a difference in means, two-sided p-value.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    use statrs::distribution::StudentsT;
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Input("t-test needs at least two samples per group".into()));
    }
    let (va, vb) = (variance(a) / a.len() as f64, variance(b) / b.len() as f64);
    let se = (va + vb).sqrt();
    let diff = mean(a) - mean(b);
    if se == 0.0 {
        return Ok((if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY }, if diff == 0.0 { 1.0 } else { 0.0 }));
    }
    let t = diff / se;
    let df = (va + vb).powi(2)
        / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Input(e.to_string()))?;
    Ok((t, (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)))
}
