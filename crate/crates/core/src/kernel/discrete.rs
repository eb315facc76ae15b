//! Exact sampling from a distribution on the nonnegative integers known only
//! up to a constant, by enumerating log weights until the tail is negligible.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::special::log_add_exp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteConfig {
    /// Enumeration stops once the next weight adds less than this fraction of
    /// the accumulated mass, after the mode has been passed.
    pub tail_tol: f64,
    pub max_states: usize,
}

impl Default for DiscreteConfig {
    fn default() -> Self {
        DiscreteConfig {
            tail_tol: 1e-12,
            max_states: 1_000_000,
        }
    }
}

/// Enumerated log weights `w(0..len)` and their log-sum-exp.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub log_weights: Vec<f64>,
    pub log_total: f64,
}

impl Enumeration {
    pub fn pmf(&self) -> Vec<f64> {
        self.log_weights
            .iter()
            .map(|w| (w - self.log_total).exp())
            .collect()
    }
}

/// Enumerates the log weights of `target`. The target must be eventually
/// decreasing.
pub fn enumerate<F>(target: F, config: &DiscreteConfig) -> Result<Enumeration>
where
    F: Fn(u64) -> f64,
{
    let log_tol = config.tail_tol.ln();
    let mut log_weights = Vec::new();
    let mut log_total = f64::NEG_INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut k: u64 = 0;
    loop {
        let w = target(k);
        if w.is_nan() || w == f64::INFINITY {
            return Err(Error::numerical(
                "discrete sampler",
                format!("log weight {w} at state {k}"),
            ));
        }
        log_weights.push(w);
        log_total = log_add_exp(log_total, w);
        let past_mode = max > f64::NEG_INFINITY && w < max;
        max = max.max(w);
        if past_mode && w - log_total < log_tol {
            break;
        }
        k += 1;
        if log_weights.len() >= config.max_states {
            return Err(Error::numerical(
                "discrete sampler",
                format!("enumeration exceeded {} states", config.max_states),
            ));
        }
    }
    if log_total == f64::NEG_INFINITY {
        return Err(Error::numerical("discrete sampler", "target has no mass"));
    }
    Ok(Enumeration {
        log_weights,
        log_total,
    })
}

/// Normalised pmf over the enumerated support.
pub fn enumerate_pmf<F>(target: F, config: &DiscreteConfig) -> Result<Vec<f64>>
where
    F: Fn(u64) -> f64,
{
    enumerate(target, config).map(|e| e.pmf())
}

/// Draws one state by inverse CDF over the enumerated support.
pub fn discrete_sample<F, R>(target: F, config: &DiscreteConfig, rng: &mut R) -> Result<u64>
where
    F: Fn(u64) -> f64,
    R: Rng + ?Sized,
{
    let e = enumerate(target, config)?;
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let last = e.log_weights.len() - 1;
    for (k, w) in e.log_weights.iter().enumerate() {
        cum += (w - e.log_total).exp();
        if u < cum {
            return Ok(k as u64);
        }
    }
    // Rounding left the cumulative sum a hair below one; take the last
    // state carrying mass.
    let k = e
        .log_weights
        .iter()
        .rposition(|w| *w > f64::NEG_INFINITY)
        .unwrap_or(last);
    Ok(k as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::special::ln_poisson_pmf;
    use crate::rng::{stream, Purpose};

    #[test]
    fn point_mass_at_zero() {
        let mut rng = stream(0, Purpose::Test, 2);
        let cfg = DiscreteConfig::default();
        for _ in 0..1000 {
            let k = discrete_sample(|k| ln_poisson_pmf(k, 0.0), &cfg, &mut rng).unwrap();
            assert_eq!(k, 0);
        }
    }

    #[test]
    fn poisson_half_mean() {
        let mut rng = stream(5, Purpose::Test, 0);
        let cfg = DiscreteConfig::default();
        let n = 100_000;
        let s: u64 = (0..n)
            .map(|_| discrete_sample(|k| ln_poisson_pmf(k, 0.5), &cfg, &mut rng).unwrap())
            .sum();
        assert!((s as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn divergent_weights_hit_the_state_cap() {
        let cfg = DiscreteConfig {
            max_states: 1000,
            ..Default::default()
        };
        let err = enumerate(|k| k as f64, &cfg).unwrap_err();
        assert!(err.is_numerical());
    }

    #[test]
    fn matches_exhaustive_normalisation() {
        // Independent normalisation over a generous fixed support.
        let target = |k: u64| ln_poisson_pmf(k, 7.3) + 0.2 * (k as f64).sqrt();
        let pmf = enumerate_pmf(target, &DiscreteConfig::default()).unwrap();
        let cutoff = 200u64;
        let raw: Vec<f64> = (0..cutoff).map(target).collect();
        let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = raw.iter().map(|w| (w - max).exp()).sum();
        for (k, p) in pmf.iter().enumerate() {
            let exact = (raw[k] - max).exp() / z;
            if exact > 1e-300 {
                assert!(((p - exact) / exact).abs() < 1e-9, "k={k}: {p} vs {exact}");
            }
        }
    }
}
