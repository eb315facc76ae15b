//! Posterior summaries: quantiles, HPD intervals and the potential scale
//! reduction factor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `ceil(q * n)` guarded against representation error (0.9 * 100 must be 90).
pub(crate) fn ceil_count(q: f64, n: usize) -> usize {
    let raw = q * n as f64;
    let rounded = raw.round();
    if (raw - rounded).abs() < 1e-9 * raw.abs().max(1.0) {
        rounded as usize
    } else {
        raw.ceil() as usize
    }
}

/// Inverse-CDF quantile of sorted samples: the `ceil(q n)`-th order statistic.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let k = ceil_count(q, sorted.len()).clamp(1, sorted.len());
    sorted[k - 1]
}

/// Shortest window `[s[t], s[t+m-1]]` with `m = ceil(level n)`; ties go to the
/// smallest `t`.
pub fn hpd_interval(sorted: &[f64], level: f64) -> Result<(f64, f64)> {
    if sorted.is_empty() {
        return Err(Error::TooFewDraws { needed: 1, got: 0 });
    }
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::InvalidSpec(format!("HPD level {level} outside (0, 1]")));
    }
    let n = sorted.len();
    let m = ceil_count(level, n).clamp(1, n);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for t in 0..=(n - m) {
        let width = sorted[t + m - 1] - sorted[t];
        if width < best_width {
            best_width = width;
            best = t;
        }
    }
    Ok((sorted[best], sorted[best + m - 1]))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with an `n - 1` denominator; zero for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Gelman–Rubin potential scale reduction. `None` for fewer than two chains.
pub fn psrf(chains: &[Vec<f64>]) -> Result<Option<f64>> {
    if chains.len() < 2 {
        return Ok(None);
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::DimensionMismatch("chains of unequal length".into()));
    }
    if n < 10 {
        return Err(Error::TooFewDraws { needed: 10, got: n });
    }
    let m = chains.len() as f64;
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let grand = mean(&means);
    let b_over_n = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m - 1.0);
    let w = chains.iter().map(|c| variance(c)).sum::<f64>() / m;
    if w == 0.0 {
        return Ok(Some(if b_over_n == 0.0 { 1.0 } else { f64::INFINITY }));
    }
    let v = (nf - 1.0) / nf * w + b_over_n;
    Ok(Some((v / w).sqrt()))
}

/// Standard error of the mean of an autocorrelated series by batch means.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    assert!(size >= 1, "too few values for {batches} batches");
    let means: Vec<f64> = xs[..size * batches].chunks(size).map(mean).collect();
    (variance(&means) / batches as f64).sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub hpd_lo: f64,
    pub hpd_hi: f64,
    pub hpd_level: f64,
    pub psrf: Option<f64>,
}

impl ParamSummary {
    /// Summarises per-chain draws of one scalar parameter, pooling chains for
    /// the location and interval statistics.
    pub fn from_chains(name: impl Into<String>, chains: &[Vec<f64>], level: f64) -> Result<Self> {
        let mut pooled: Vec<f64> = chains.iter().flatten().copied().collect();
        if pooled.is_empty() {
            return Err(Error::TooFewDraws { needed: 1, got: 0 });
        }
        pooled.sort_by(f64::total_cmp);
        let (hpd_lo, hpd_hi) = hpd_interval(&pooled, level)?;
        let psrf = if chains.len() >= 2 && chains[0].len() >= 10 {
            psrf(chains)?
        } else {
            None
        };
        Ok(ParamSummary {
            name: name.into(),
            mean: mean(&pooled),
            median: quantile_sorted(&pooled, 0.5),
            sd: variance(&pooled).sqrt(),
            hpd_lo,
            hpd_hi,
            hpd_level: level,
            psrf,
        })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ChainSummary {
    pub params: Vec<ParamSummary>,
}

impl ChainSummary {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn max_psrf(&self) -> Option<f64> {
        self.params
            .iter()
            .filter_map(|p| p.psrf)
            .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
    }
}
