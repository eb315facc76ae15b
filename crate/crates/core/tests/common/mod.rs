//! Test oracles written independently of the library's density code.
#![allow(dead_code)]

use dgm_reserving::config::ModelSpec;
use dgm_reserving::dgm::{simulate_panel, DgmParams};
use dgm_reserving::rng::{stream, Purpose};
use dgm_reserving::{SimulationSpec, TrianglePanel};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

fn ln_gamma_density(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

fn ln_poisson(z: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if z == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let zf = z as f64;
    zf * mean.ln() - mean - ln_gamma(zf + 1.0)
}

/// Full joint log density of observed claims, latent counts, parameters and
/// hyperparameters, written out cell by cell.
pub fn joint_log_density(panel: &TrianglePanel, params: &DgmParams, spec: &ModelSpec) -> f64 {
    let (n, kk, p) = (panel.n(), panel.businesses(), spec.p);
    let mut total = 0.0;
    for k in 0..kk {
        for i in 0..n {
            for j in 0..n {
                if !panel.is_observed(i, j, k) {
                    continue;
                }
                let mut shape = params.alpha(i, k);
                let mut rate = params.beta(j, k);
                for l in 0..=p.min(j) {
                    shape += params.z(i, (j - l) as isize, k) as f64;
                    rate += params.gamma((j - l) as isize, k);
                }
                total += ln_gamma_density(panel.value(i, j, k), shape, rate);
                total += ln_poisson(params.z(i, j as isize, k), params.alpha(i, k) * params.gamma(j as isize, k));
            }
        }
    }
    let h = &params.hyper;
    for k in 0..kk {
        for idx in 0..n {
            total += ln_gamma_density(params.alpha(idx, k), h.a_alpha[idx], h.b_alpha[idx]);
            total += ln_gamma_density(params.beta(idx, k), h.a_beta[idx], h.b_beta[idx]);
            if !spec.gamma_fixed_zero {
                total += ln_gamma_density(params.gamma(idx as isize, k), h.a_gamma[idx], h.b_gamma[idx]);
            }
        }
    }
    for idx in 0..n {
        for (v, prior) in [
            (h.a_alpha[idx], spec.alpha_prior),
            (h.b_alpha[idx], spec.alpha_prior),
            (h.a_beta[idx], spec.beta_prior),
            (h.b_beta[idx], spec.beta_prior),
            (h.a_gamma[idx], spec.gamma_prior),
            (h.b_gamma[idx], spec.gamma_prior),
        ] {
            total += ln_gamma_density(v, prior.shape0, prior.rate0);
        }
    }
    total
}

/// The reference configuration: true parameters, a simulated panel and the
/// latent counts that generated it.
pub struct Fixture {
    pub panel: TrianglePanel,
    pub params: DgmParams,
    pub spec: ModelSpec,
}

pub fn reference_fixture(seed: u64) -> Fixture {
    let spec = ModelSpec::default();
    let mut params = DgmParams::from_simulation(&SimulationSpec::small_reference()).unwrap();
    let mut rng = stream(seed, Purpose::Test, 0);
    let sim = simulate_panel(&params, spec.p, &mut rng);
    let n = params.n();
    for k in 0..params.businesses() {
        for i in 0..n {
            for j in 0..n - i {
                params.set_z(i, j, k, sim.z(i, j, k));
            }
        }
    }
    Fixture {
        panel: sim.panel.without_truth(),
        params,
        spec,
    }
}

/// CDF of an unnormalised log density on a uniform grid over `[lo, hi]`.
pub struct GridCdf {
    lo: f64,
    step: f64,
    cdf: Vec<f64>,
}

impl GridCdf {
    /// Locates the bulk of the density by scanning a log-spaced grid, then
    /// normalises on `points` uniform points by the trapezoid rule.
    pub fn new(log_density: impl Fn(f64) -> f64, points: usize) -> Self {
        let scan: Vec<f64> = (0..4000).map(|t| 10f64.powf(-8.0 + 12.0 * t as f64 / 3999.0)).collect();
        let vals: Vec<f64> = scan.iter().map(|&v| log_density(v)).collect();
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let keep: Vec<f64> = scan.iter().zip(&vals).filter(|(_, l)| **l > max - 40.0).map(|(v, _)| *v).collect();
        let (lo, hi) = (keep[0] / 1.01, keep[keep.len() - 1] * 1.01);
        let step = (hi - lo) / (points - 1) as f64;
        let dens: Vec<f64> = (0..points)
            .map(|t| {
                let l = log_density(lo + t as f64 * step);
                if l.is_finite() { (l - max).exp() } else { 0.0 }
            })
            .collect();
        let mut cdf = vec![0.0; points];
        for t in 1..points {
            cdf[t] = cdf[t - 1] + 0.5 * (dens[t] + dens[t - 1]) * step;
        }
        let total = cdf[points - 1];
        cdf.iter_mut().for_each(|c| *c /= total);
        GridCdf { lo, step, cdf }
    }

    pub fn at(&self, x: f64) -> f64 {
        let pos = (x - self.lo) / self.step;
        if pos <= 0.0 {
            return 0.0;
        }
        let t = pos.floor() as usize;
        if t + 1 >= self.cdf.len() {
            return 1.0;
        }
        let w = pos - t as f64;
        self.cdf[t] * (1.0 - w) + self.cdf[t + 1] * w
    }

    /// Kolmogorov-Smirnov distance between the sample and this CDF.
    pub fn ks(&self, sample: &[f64]) -> f64 {
        let mut s = sample.to_vec();
        s.sort_by(f64::total_cmp);
        let m = s.len() as f64;
        s.iter()
            .enumerate()
            .map(|(r, &x)| {
                let f = self.at(x);
                (f - r as f64 / m).abs().max(((r + 1) as f64 / m - f).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Pearson chi-square goodness of fit. Cells with expected count below 5 are
/// pooled from the tails inward. Returns the p-value.
pub fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (c, p) in counts.iter().zip(probs) {
        acc.0 += *c as f64;
        acc.1 += p * total as f64;
        if acc.1 >= 5.0 {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => bins.push(acc),
        }
    }
    if bins.len() < 2 {
        return 1.0;
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    1.0 - ChiSquared::new((bins.len() - 1) as f64).unwrap().cdf(stat)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of a mean from non-overlapping batch means.
pub fn batch_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(size).map(mean).collect();
    (var(&means) / means.len() as f64).sqrt()
}
