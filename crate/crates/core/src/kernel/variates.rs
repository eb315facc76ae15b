//! Gamma and Poisson variates in the rate parameterisation used throughout the crate.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

/// Draws from `Ga(shape, rate)`. Underflow to zero is lifted to the smallest
/// positive normal so that log densities stay finite.
pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    assert!(
        shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite(),
        "gamma variate requires positive finite shape and rate (shape={shape}, rate={rate})"
    );
    let x = Gamma::new(shape, 1.0 / rate)
        .expect("validated gamma parameters")
        .sample(rng);
    x.max(f64::MIN_POSITIVE)
}

/// Draws from `Po(mean)`; a zero mean returns zero.
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    assert!(
        mean >= 0.0 && mean.is_finite(),
        "poisson variate requires a finite nonnegative mean (mean={mean})"
    );
    if mean == 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("validated poisson mean").sample(rng) as u64
}
