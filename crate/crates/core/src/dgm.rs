//! The dependent gamma model: parameter containers, closed-form moments and
//! forward simulation.
//!
//! For origin year `i`, development year `j` and business `k`,
//!
//! ```text
//! X[i,j,k] | Z ~ Ga(alpha[i,k] + sum_{l=0..p} Z[i,j-l,k],  beta[j,k] + sum_{l=0..p} gamma[j-l,k])
//! Z[i,j,k]     ~ Po(alpha[i,k] * gamma[j,k])
//! ```
//!
//! with `gamma` and `Z` taken as zero at negative development indices. All
//! indices are zero-based.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ModelSpec, SimulationSpec};
use crate::error::{Error, Result};
use crate::kernel::variates::{sample_gamma, sample_poisson};
use crate::triangle::TrianglePanel;

/// Shape and rate hyperparameters of the hierarchical prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub a_alpha: Vec<f64>,
    pub b_alpha: Vec<f64>,
    pub a_beta: Vec<f64>,
    pub b_beta: Vec<f64>,
    pub a_gamma: Vec<f64>,
    pub b_gamma: Vec<f64>,
}

impl Hyper {
    pub fn constant(n: usize, a_alpha: f64, b_alpha: f64, a_beta: f64, b_beta: f64, a_gamma: f64, b_gamma: f64) -> Self {
        Hyper {
            a_alpha: vec![a_alpha; n],
            b_alpha: vec![b_alpha; n],
            a_beta: vec![a_beta; n],
            b_beta: vec![b_beta; n],
            a_gamma: vec![a_gamma; n],
            b_gamma: vec![b_gamma; n],
        }
    }

    /// Every hyperparameter at the mean of its hyperprior.
    pub fn prior_means(n: usize, spec: &ModelSpec) -> Self {
        let (a, b, g) = (spec.alpha_prior.mean(), spec.beta_prior.mean(), spec.gamma_prior.mean());
        Self::constant(n, a, a, b, b, g, g)
    }

    pub fn all_positive(&self) -> bool {
        [&self.a_alpha, &self.b_alpha, &self.a_beta, &self.b_beta, &self.a_gamma, &self.b_gamma]
            .iter()
            .all(|v| v.iter().all(|x| *x > 0.0 && x.is_finite()))
    }
}

/// Full parameter state: `alpha[k][i]`, `beta[k][j]`, `gamma[k][j]` stored
/// flat (business-major), latent counts `z[k][i][j]`, and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgmParams {
    n: usize,
    businesses: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub z: Vec<u64>,
    pub hyper: Hyper,
}

impl DgmParams {
    /// Parameters from per-business columns: `alpha[k][i]`, `beta[k][j]`, `gamma[k][j]`.
    pub fn new(alpha: Vec<Vec<f64>>, beta: Vec<Vec<f64>>, gamma: Vec<Vec<f64>>, hyper: Hyper) -> Result<Self> {
        let businesses = alpha.len();
        if businesses == 0 || beta.len() != businesses || gamma.len() != businesses {
            return Err(Error::DimensionMismatch(
                "alpha, beta and gamma need one column per business".into(),
            ));
        }
        let n = alpha[0].len();
        for cols in [&alpha, &beta, &gamma] {
            if cols.iter().any(|c| c.len() != n) {
                return Err(Error::DimensionMismatch(format!("every column must have {n} entries")));
            }
        }
        if hyper.a_alpha.len() != n
            || hyper.b_alpha.len() != n
            || hyper.a_beta.len() != n
            || hyper.b_beta.len() != n
            || hyper.a_gamma.len() != n
            || hyper.b_gamma.len() != n
        {
            return Err(Error::DimensionMismatch(format!("hyperparameters must have {n} entries")));
        }
        let params = DgmParams {
            n,
            businesses,
            alpha: alpha.concat(),
            beta: beta.concat(),
            gamma: gamma.concat(),
            z: vec![0; n * n * businesses],
            hyper,
        };
        if params.alpha.iter().chain(&params.beta).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidSpec("alpha and beta must be positive".into()));
        }
        if params.gamma.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidSpec("gamma must be nonnegative".into()));
        }
        Ok(params)
    }

    /// Parameters described by a simulation spec, hyperparameters set to one.
    pub fn from_simulation(spec: &SimulationSpec) -> Result<Self> {
        let (n, kk) = (spec.n, spec.businesses);
        if n == 0 || kk == 0 {
            return Err(Error::InvalidSpec("simulation needs n >= 1 and K >= 1".into()));
        }
        let alpha: Vec<Vec<f64>> = match spec.alpha.len() {
            l if l == kk => spec.alpha.iter().map(|a| vec![*a; n]).collect(),
            l if l == n * kk => spec.alpha.chunks(n).map(<[f64]>::to_vec).collect(),
            l => {
                return Err(Error::InvalidSpec(format!(
                    "sim_alpha needs {kk} or {} values, got {l}",
                    n * kk
                )))
            }
        };
        let by_dev = |v: &[f64], key: &str| -> Result<Vec<Vec<f64>>> {
            match v.len() {
                1 => Ok(vec![vec![v[0]; n]; kk]),
                l if l == n => Ok(vec![v.to_vec(); kk]),
                l if l == n * kk => Ok(v.chunks(n).map(<[f64]>::to_vec).collect()),
                l => Err(Error::InvalidSpec(format!(
                    "{key} needs 1, {n} or {} values, got {l}",
                    n * kk
                ))),
            }
        };
        let beta = by_dev(&spec.beta, "sim_beta")?;
        let gamma = by_dev(&spec.gamma, "sim_gamma")?;
        Self::new(alpha, beta, gamma, Hyper::constant(n, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn businesses(&self) -> usize {
        self.businesses
    }

    #[inline]
    pub fn alpha(&self, i: usize, k: usize) -> f64 {
        self.alpha[k * self.n + i]
    }

    #[inline]
    pub fn beta(&self, j: usize, k: usize) -> f64 {
        self.beta[k * self.n + j]
    }

    /// `gamma[j, k]`, zero for negative `j`.
    #[inline]
    pub fn gamma(&self, j: isize, k: usize) -> f64 {
        if j < 0 {
            0.0
        } else {
            self.gamma[k * self.n + j as usize]
        }
    }

    /// `Z[i, j, k]`, zero for negative `j`.
    #[inline]
    pub fn z(&self, i: usize, j: isize, k: usize) -> u64 {
        if j < 0 {
            0
        } else {
            self.z[(k * self.n + i) * self.n + j as usize]
        }
    }

    #[inline]
    pub fn set_alpha(&mut self, i: usize, k: usize, v: f64) {
        self.alpha[k * self.n + i] = v;
    }

    #[inline]
    pub fn set_beta(&mut self, j: usize, k: usize, v: f64) {
        self.beta[k * self.n + j] = v;
    }

    #[inline]
    pub fn set_gamma(&mut self, j: usize, k: usize, v: f64) {
        self.gamma[k * self.n + j] = v;
    }

    #[inline]
    pub fn set_z(&mut self, i: usize, j: usize, k: usize, v: u64) {
        self.z[(k * self.n + i) * self.n + j] = v;
    }

    /// `sum_{l=0..p} gamma[j-l, k]`
    #[inline]
    pub fn gamma_window(&self, j: usize, k: usize, p: usize) -> f64 {
        (0..=p).map(|l| self.gamma(j as isize - l as isize, k)).sum()
    }

    /// `sum_{l=0..p} Z[i, j-l, k]`
    #[inline]
    pub fn z_window(&self, i: usize, j: usize, k: usize, p: usize) -> u64 {
        (0..=p).map(|l| self.z(i, j as isize - l as isize, k)).sum()
    }

    /// Gamma rate of cell column `j`: `beta[j,k] + sum_l gamma[j-l,k]`.
    #[inline]
    pub fn rate(&self, j: usize, k: usize, p: usize) -> f64 {
        self.beta(j, k) + self.gamma_window(j, k, p)
    }

    /// Gamma shape of cell `(i, j)` given the latent counts.
    #[inline]
    pub fn shape(&self, i: usize, j: usize, k: usize, p: usize) -> f64 {
        self.alpha(i, k) + self.z_window(i, j, k, p) as f64
    }

    pub fn gamma_column(&self, k: usize) -> &[f64] {
        &self.gamma[k * self.n..(k + 1) * self.n]
    }

    /// Positivity invariants of a sampler state.
    pub fn is_valid(&self) -> bool {
        self.alpha.iter().chain(&self.beta).all(|v| *v > 0.0 && v.is_finite())
            && self.gamma.iter().all(|v| *v >= 0.0 && v.is_finite())
            && self.hyper.all_positive()
    }
}

/// `E X[i,j,k] = alpha (1 + sum gamma) / (beta + sum gamma)`
pub fn cell_mean(params: &DgmParams, p: usize, i: usize, j: usize, k: usize) -> f64 {
    let g = params.gamma_window(j, k, p);
    params.alpha(i, k) * (1.0 + g) / (params.beta(j, k) + g)
}

/// `Var X[i,j,k] = alpha (1 + 2 sum gamma) / (beta + sum gamma)^2`
pub fn cell_variance(params: &DgmParams, p: usize, i: usize, j: usize, k: usize) -> f64 {
    let g = params.gamma_window(j, k, p);
    params.alpha(i, k) * (1.0 + 2.0 * g) / (params.beta(j, k) + g).powi(2)
}

/// `Cov(X[i,j,k], X[i,j+s,k])`, zero when `s > p`. Requires `s >= 1` and `j + s < n`.
pub fn cell_covariance(params: &DgmParams, p: usize, i: usize, j: usize, s: usize, k: usize) -> f64 {
    assert!(s >= 1, "lag must be at least 1");
    assert!(j + s < params.n(), "lagged cell outside the triangle");
    if s > p {
        return 0.0;
    }
    let shared: f64 = (0..=p - s).map(|l| params.gamma(j as isize - l as isize, k)).sum();
    params.alpha(i, k) * shared / (params.rate(j, k, p) * params.rate(j + s, k, p))
}

/// Correlation between development years `j` and `j + s` of one business.
/// Depends on the gamma column only.
pub fn dev_correlation(gamma_col: &[f64], p: usize, j: usize, s: usize) -> Result<f64> {
    if s == 0 || s > p {
        return Err(Error::InvalidSpec(format!(
            "correlation lag s={s} must satisfy 1 <= s <= p={p}"
        )));
    }
    if j + s >= gamma_col.len() {
        return Err(Error::DimensionMismatch(format!(
            "development year {} outside a column of length {}",
            j + s + 1,
            gamma_col.len()
        )));
    }
    let g = |idx: isize| if idx < 0 { 0.0 } else { gamma_col[idx as usize] };
    let window = |at: usize, len: usize| -> f64 { (0..=len).map(|l| g(at as isize - l as isize)).sum() };
    let shared = window(j, p - s);
    Ok(shared / ((1.0 + 2.0 * window(j, p)).sqrt() * (1.0 + 2.0 * window(j + s, p)).sqrt()))
}

/// Identifiable summaries of a parameter state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub n: usize,
    pub businesses: usize,
    pub p: usize,
    /// `mu[k][i][j]`
    pub mu: Vec<Vec<Vec<f64>>>,
    /// Ultimate `alpha_star[k][i]`.
    pub alpha_star: Vec<Vec<f64>>,
    /// Development proportions `pi_star[k][j]`, summing to one per business.
    pub pi_star: Vec<Vec<f64>>,
    /// `corr[k][s-1][j]` for lags `1..=p`, `j` in `0..n-s`.
    pub corr: Vec<Vec<Vec<f64>>>,
}

pub fn identifiable_params(params: &DgmParams, p: usize) -> MomentReport {
    let (n, kk) = (params.n(), params.businesses());
    let mut report = MomentReport {
        n,
        businesses: kk,
        p,
        mu: Vec::with_capacity(kk),
        alpha_star: Vec::with_capacity(kk),
        pi_star: Vec::with_capacity(kk),
        corr: Vec::with_capacity(kk),
    };
    for k in 0..kk {
        let pi: Vec<f64> = (0..n)
            .map(|j| {
                let g = params.gamma_window(j, k, p);
                (1.0 + g) / (params.beta(j, k) + g)
            })
            .collect();
        let total: f64 = pi.iter().sum();
        let alpha_star: Vec<f64> = (0..n).map(|i| params.alpha(i, k) * total).collect();
        let pi_star: Vec<f64> = pi.iter().map(|v| v / total).collect();
        let mu = (0..n)
            .map(|i| (0..n).map(|j| alpha_star[i] * pi_star[j]).collect())
            .collect();
        let corr = (1..=p)
            .map(|s| {
                (0..n.saturating_sub(s))
                    .map(|j| dev_correlation(params.gamma_column(k), p, j, s).expect("lag within range"))
                    .collect()
            })
            .collect();
        report.mu.push(mu);
        report.alpha_star.push(alpha_star);
        report.pi_star.push(pi_star);
        report.corr.push(corr);
    }
    report
}

/// A simulated full square and the latent counts behind it.
#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub panel: TrianglePanel,
    /// `z[k][i][j]` for every cell.
    pub z: Vec<u64>,
}

impl SimulatedPanel {
    pub fn z(&self, i: usize, j: usize, k: usize) -> u64 {
        let n = self.panel.n();
        self.z[(k * n + i) * n + j]
    }
}

/// Draws a full `n x n x K` panel from the model: latent counts first, then
/// claims given the counts.
pub fn simulate_panel<R: Rng + ?Sized>(params: &DgmParams, p: usize, rng: &mut R) -> SimulatedPanel {
    let (n, kk) = (params.n(), params.businesses());
    let mut latent = params.clone();
    for k in 0..kk {
        for i in 0..n {
            for j in 0..n {
                let mean = params.alpha(i, k) * params.gamma(j as isize, k);
                latent.set_z(i, j, k, sample_poisson(rng, mean));
            }
        }
    }
    let square: Vec<Vec<Vec<f64>>> = (0..kk)
        .map(|k| {
            (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| sample_gamma(rng, latent.shape(i, j, k, p), latent.rate(j, k, p)))
                        .collect()
                })
                .collect()
        })
        .collect();
    SimulatedPanel {
        panel: TrianglePanel::from_square(&square).expect("simulated values are positive"),
        z: latent.z,
    }
}

/// Draws hyperparameters, parameters and latent counts (observed cells only)
/// from the hierarchical prior.
pub fn sample_prior<R: Rng + ?Sized>(
    spec: &ModelSpec,
    n: usize,
    businesses: usize,
    rng: &mut R,
) -> DgmParams {
    let mut draw_pairs = |h: crate::config::HyperPrior| -> (Vec<f64>, Vec<f64>) {
        let a = (0..n).map(|_| sample_gamma(rng, h.shape0, h.rate0)).collect();
        let b = (0..n).map(|_| sample_gamma(rng, h.shape0, h.rate0)).collect();
        (a, b)
    };
    let (a_alpha, b_alpha) = draw_pairs(spec.alpha_prior);
    let (a_beta, b_beta) = draw_pairs(spec.beta_prior);
    let (a_gamma, b_gamma) = draw_pairs(spec.gamma_prior);
    let hyper = Hyper {
        a_alpha,
        b_alpha,
        a_beta,
        b_beta,
        a_gamma,
        b_gamma,
    };
    let alpha: Vec<Vec<f64>> = (0..businesses)
        .map(|_| (0..n).map(|i| sample_gamma(rng, hyper.a_alpha[i], hyper.b_alpha[i])).collect())
        .collect();
    let beta: Vec<Vec<f64>> = (0..businesses)
        .map(|_| (0..n).map(|j| sample_gamma(rng, hyper.a_beta[j], hyper.b_beta[j])).collect())
        .collect();
    let gamma: Vec<Vec<f64>> = (0..businesses)
        .map(|_| {
            (0..n)
                .map(|j| {
                    if spec.gamma_fixed_zero {
                        0.0
                    } else {
                        sample_gamma(rng, hyper.a_gamma[j], hyper.b_gamma[j])
                    }
                })
                .collect()
        })
        .collect();
    let mut params = DgmParams::new(alpha, beta, gamma, hyper).expect("prior draws are positive");
    for k in 0..businesses {
        for i in 0..n {
            for j in 0..n - i {
                let mean = params.alpha(i, k) * params.gamma(j as isize, k);
                let z = sample_poisson(rng, mean);
                params.set_z(i, j, k, z);
            }
        }
    }
    params
}
