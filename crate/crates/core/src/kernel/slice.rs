//! Univariate slice sampler with stepping out and shrinkage.
//!
//! Positive variables are sampled on the log scale: for `y = ln x` the target
//! becomes `f(e^y) + y`, so the support constraint never causes rejections.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceConfig {
    /// Initial bracket width on the log scale.
    pub width: f64,
    /// Maximum stepping-out expansions on each side.
    pub max_steps_out: u32,
    pub max_shrinks: u32,
}

impl Default for SliceConfig {
    fn default() -> Self {
        SliceConfig {
            width: 1.0,
            max_steps_out: 1000,
            max_shrinks: 10_000,
        }
    }
}

/// One slice-sampling update of a positive variable whose unnormalised log
/// density is `target`.
pub fn slice_sample<F, R>(target: F, current: f64, config: &SliceConfig, rng: &mut R) -> Result<f64>
where
    F: Fn(f64) -> f64,
    R: Rng + ?Sized,
{
    if !(config.width > 0.0 && config.width.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "slice width must be positive and finite, got {}",
            config.width
        )));
    }
    if !(current > 0.0 && current.is_finite()) {
        return Err(Error::numerical(
            "slice sampler",
            format!("current value {current} outside the positive reals"),
        ));
    }

    let log_target = |y: f64| -> f64 {
        let x = y.exp();
        if x <= 0.0 || !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        let v = target(x) + y;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };

    let y0 = current.ln();
    let g0 = log_target(y0);
    if !g0.is_finite() {
        return Err(Error::numerical(
            "slice sampler",
            format!("log density is {g0} at current value {current}"),
        ));
    }
    let level = g0 + rng.gen::<f64>().ln();

    let w = config.width;
    let mut left = y0 - w * rng.gen::<f64>();
    let mut right = left + w;

    let mut steps = 0;
    while log_target(left) > level {
        left -= w;
        steps += 1;
        if steps > config.max_steps_out {
            return Err(Error::numerical(
                "slice sampler",
                "stepping out exceeded the step limit on the left",
            ));
        }
    }
    steps = 0;
    while log_target(right) > level {
        right += w;
        steps += 1;
        if steps > config.max_steps_out {
            return Err(Error::numerical(
                "slice sampler",
                "stepping out exceeded the step limit on the right",
            ));
        }
    }

    for _ in 0..config.max_shrinks {
        let y1 = left + rng.gen::<f64>() * (right - left);
        if log_target(y1) > level {
            return Ok(y1.exp());
        }
        if y1 < y0 {
            left = y1;
        } else {
            right = y1;
        }
    }
    Err(Error::numerical(
        "slice sampler",
        "shrinkage did not find a point inside the slice",
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn zero_width_is_rejected() {
        let mut rng = stream(0, Purpose::Test, 0);
        let cfg = SliceConfig {
            width: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            slice_sample(|x: f64| -x, 1.0, &cfg, &mut rng),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn non_finite_current_is_an_error() {
        let mut rng = stream(0, Purpose::Test, 1);
        let r = slice_sample(|_x: f64| f64::NEG_INFINITY, 1.0, &SliceConfig::default(), &mut rng);
        assert!(r.unwrap_err().is_numerical());
    }

    #[test]
    fn exponential_mean() {
        let mut rng = stream(3, Purpose::Test, 0);
        let cfg = SliceConfig::default();
        let mut x = 1.0;
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            x = slice_sample(|v: f64| -v, x, &cfg, &mut rng).unwrap();
            sum += x;
        }
        assert!((sum / n as f64 - 1.0).abs() < 0.02);
    }

    #[test]
    fn gamma_5_2_moments() {
        // Ga(5, 2): mean 2.5, variance 1.25
        let mut rng = stream(4, Purpose::Test, 0);
        let cfg = SliceConfig::default();
        let target = |v: f64| 4.0 * v.ln() - 2.0 * v;
        let mut x = 2.0;
        let n = 100_000;
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            x = slice_sample(target, x, &cfg, &mut rng).unwrap();
            xs.push(x);
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // Successive slice draws are autocorrelated; use batch means for the SE.
        let batches = 100;
        let bsize = n / batches;
        let bmeans: Vec<f64> = xs
            .chunks(bsize)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        let bvar = bmeans.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
        let se = (bvar / batches as f64).sqrt();
        assert!((mean - 2.5).abs() < 3.0 * se, "mean {mean}, se {se}");
        assert!((var - 1.25).abs() < 0.05, "var {var}");
    }
}
