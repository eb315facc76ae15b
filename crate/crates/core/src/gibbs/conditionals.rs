//! Full conditional distributions of the augmented posterior.
//!
//! Each `log_cond_*` function returns the unnormalised log density of one
//! block with every other block frozen at its value in `params`; the matching
//! `cond_*` function draws from it. Sums over cells run over observed cells
//! only; factors for development years past the last observed one drop out.

use rand::Rng;

use crate::config::{HyperPrior, ModelSpec, RunConfig};
use crate::dgm::DgmParams;
use crate::error::{Error, Result};
use crate::kernel::special::{ln_gamma, ln_gamma_pdf, ln_poisson_pmf};
use crate::kernel::variates::sample_gamma;
use crate::kernel::{discrete_sample, slice_sample};
use crate::triangle::TrianglePanel;

/// Observed data laid out for repeated conditional evaluation.
#[derive(Debug, Clone)]
pub struct ModelData {
    n: usize,
    businesses: usize,
    x: Vec<f64>,
    ln_x: Vec<f64>,
    observed: Vec<bool>,
    /// Observed origin years of each development column.
    col_rows: Vec<Vec<usize>>,
    /// Observed development years of each origin row.
    row_cols: Vec<Vec<usize>>,
    /// Sum of observed claims per `(j, k)`.
    col_sum: Vec<f64>,
}

impl ModelData {
    pub fn new(panel: &TrianglePanel) -> Result<Self> {
        let (n, kk) = (panel.n(), panel.businesses());
        let mut data = ModelData {
            n,
            businesses: kk,
            x: vec![0.0; n * n * kk],
            ln_x: vec![0.0; n * n * kk],
            observed: vec![false; n * n * kk],
            col_rows: vec![Vec::new(); n * kk],
            row_cols: vec![Vec::new(); n * kk],
            col_sum: vec![0.0; n * kk],
        };
        for k in 0..kk {
            for i in 0..n {
                for j in 0..n {
                    if !panel.is_observed(i, j, k) {
                        continue;
                    }
                    let x = panel.value(i, j, k);
                    if !(x > 0.0 && x.is_finite()) {
                        return Err(Error::numerical(
                            format!("cell ({}, {}, {})", i + 1, j + 1, k + 1),
                            format!("observed value {x} must be positive; apply the zero floor"),
                        ));
                    }
                    let c = data.cell(i, j, k);
                    data.x[c] = x;
                    data.ln_x[c] = x.ln();
                    data.observed[c] = true;
                    data.col_rows[k * n + j].push(i);
                    data.row_cols[k * n + i].push(j);
                    data.col_sum[k * n + j] += x;
                }
            }
        }
        Ok(data)
    }

    #[inline]
    fn cell(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n + i) * self.n + j
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn businesses(&self) -> usize {
        self.businesses
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize, k: usize) -> bool {
        self.observed[self.cell(i, j, k)]
    }

    #[inline]
    pub fn x(&self, i: usize, j: usize, k: usize) -> f64 {
        self.x[self.cell(i, j, k)]
    }

    pub fn observed_cells(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.businesses).flat_map(move |k| {
            (0..self.n).flat_map(move |i| self.row_cols[k * self.n + i].iter().map(move |&j| (i, j, k)))
        })
    }

    pub fn observed_len(&self) -> usize {
        self.observed.iter().filter(|o| **o).count()
    }
}

fn check_finite(value: f64, context: impl FnOnce() -> String) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::numerical(context(), format!("log density evaluated to {value}")))
    }
}

/// `log f(x, z | theta)` over observed cells. The Poisson factor is a point
/// mass at zero when its mean is zero.
pub fn augmented_loglik(panel: &TrianglePanel, params: &DgmParams, p: usize) -> Result<f64> {
    let data = ModelData::new(panel)?;
    augmented_loglik_data(&data, params, p)
}

pub(crate) fn augmented_loglik_data(data: &ModelData, params: &DgmParams, p: usize) -> Result<f64> {
    let mut total = 0.0;
    for (i, j, k) in data.observed_cells() {
        let term = ln_gamma_pdf(data.x(i, j, k), params.shape(i, j, k, p), params.rate(j, k, p))
            + ln_poisson_pmf(params.z(i, j as isize, k), params.alpha(i, k) * params.gamma(j as isize, k));
        total += check_finite(term, || format!("cell ({}, {}, {})", i + 1, j + 1, k + 1))?;
    }
    Ok(total)
}

/// `-2 log f(x | theta, z)` over observed cells.
pub fn deviance(data: &ModelData, params: &DgmParams, p: usize) -> Result<f64> {
    let mut total = 0.0;
    for (i, j, k) in data.observed_cells() {
        let term = ln_gamma_pdf(data.x(i, j, k), params.shape(i, j, k, p), params.rate(j, k, p));
        total += check_finite(term, || format!("deviance at cell ({}, {}, {})", i + 1, j + 1, k + 1))?;
    }
    Ok(-2.0 * total)
}

/// Log full conditional of `alpha[i, k]`.
pub fn log_cond_alpha(data: &ModelData, params: &DgmParams, p: usize, i: usize, k: usize) -> impl Fn(f64) -> f64 {
    let n = data.n;
    let cols = &data.row_cols[k * n + i];
    let mut linear = -params.hyper.b_alpha[i];
    let mut power = params.hyper.a_alpha[i] - 1.0;
    let mut offsets = Vec::with_capacity(cols.len());
    for &j in cols {
        linear += params.rate(j, k, p).ln() + data.ln_x[data.cell(i, j, k)] - params.gamma(j as isize, k);
        power += params.z(i, j as isize, k) as f64;
        offsets.push(params.z_window(i, j, k, p) as f64);
    }
    move |a: f64| {
        if a <= 0.0 {
            return f64::NEG_INFINITY;
        }
        a * linear + power * a.ln() - offsets.iter().map(|o| ln_gamma(a + o)).sum::<f64>()
    }
}

pub fn cond_alpha<R: Rng + ?Sized>(
    data: &ModelData,
    params: &DgmParams,
    p: usize,
    i: usize,
    k: usize,
    run: &RunConfig,
    rng: &mut R,
) -> Result<f64> {
    if data.row_cols[k * data.n + i].is_empty() {
        return Ok(sample_gamma(rng, params.hyper.a_alpha[i], params.hyper.b_alpha[i]));
    }
    let target = log_cond_alpha(data, params, p, i, k);
    slice_sample(target, params.alpha(i, k), &run.slice, rng)
        .map_err(|e| e.within(format!("alpha[{}, {}]", i + 1, k + 1)))
}

/// Log full conditional of `beta[j, k]`.
pub fn log_cond_beta(data: &ModelData, params: &DgmParams, p: usize, j: usize, k: usize) -> impl Fn(f64) -> f64 {
    let g = params.gamma_window(j, k, p);
    let shape_sum: f64 = data.col_rows[k * data.n + j]
        .iter()
        .map(|&i| params.shape(i, j, k, p))
        .sum();
    let linear = params.hyper.b_beta[j] + data.col_sum[k * data.n + j];
    let power = params.hyper.a_beta[j] - 1.0;
    move |b: f64| {
        if b <= 0.0 {
            return f64::NEG_INFINITY;
        }
        shape_sum * (b + g).ln() - b * linear + power * b.ln()
    }
}

pub fn cond_beta<R: Rng + ?Sized>(
    data: &ModelData,
    params: &DgmParams,
    p: usize,
    j: usize,
    k: usize,
    run: &RunConfig,
    rng: &mut R,
) -> Result<f64> {
    if data.col_rows[k * data.n + j].is_empty() {
        return Ok(sample_gamma(rng, params.hyper.a_beta[j], params.hyper.b_beta[j]));
    }
    let target = log_cond_beta(data, params, p, j, k);
    slice_sample(target, params.beta(j, k), &run.slice, rng)
        .map_err(|e| e.within(format!("beta[{}, {}]", j + 1, k + 1)))
}

/// Log full conditional of `gamma[j, k]`. `gamma[j, k]` enters the rates of
/// columns `j..=j+p` and the Poisson means of column `j`.
pub fn log_cond_gamma(data: &ModelData, params: &DgmParams, p: usize, j: usize, k: usize) -> impl Fn(f64) -> f64 {
    let n = data.n;
    let current = params.gamma(j as isize, k);
    let mut terms: Vec<(f64, f64)> = Vec::with_capacity(p + 1);
    let mut linear = params.hyper.b_gamma[j];
    for c in j..(j + p + 1).min(n) {
        let rows = &data.col_rows[k * n + c];
        if rows.is_empty() {
            continue;
        }
        let other = params.rate(c, k, p) - current;
        let shape_sum: f64 = rows.iter().map(|&i| params.shape(i, c, k, p)).sum();
        terms.push((other, shape_sum));
        linear += data.col_sum[k * n + c];
    }
    let mut power = params.hyper.a_gamma[j] - 1.0;
    for &i in &data.col_rows[k * n + j] {
        linear += params.alpha(i, k);
        power += params.z(i, j as isize, k) as f64;
    }
    move |g: f64| {
        if g <= 0.0 {
            return f64::NEG_INFINITY;
        }
        terms.iter().map(|(o, s)| s * (o + g).ln()).sum::<f64>() - g * linear + power * g.ln()
    }
}

pub fn cond_gamma<R: Rng + ?Sized>(
    data: &ModelData,
    params: &DgmParams,
    p: usize,
    j: usize,
    k: usize,
    run: &RunConfig,
    rng: &mut R,
) -> Result<f64> {
    let n = data.n;
    let no_data = (j..(j + p + 1).min(n)).all(|c| data.col_rows[k * n + c].is_empty());
    if no_data {
        return Ok(sample_gamma(rng, params.hyper.a_gamma[j], params.hyper.b_gamma[j]));
    }
    let current = params.gamma(j as isize, k);
    // A gamma pinned at zero by the caller has no slice to start from.
    let start = if current > 0.0 {
        current
    } else {
        params.hyper.a_gamma[j] / params.hyper.b_gamma[j]
    };
    let target = log_cond_gamma(data, params, p, j, k);
    slice_sample(target, start, &run.slice, rng)
        .map_err(|e| e.within(format!("gamma[{}, {}]", j + 1, k + 1)))
}

/// Log full conditional (up to a constant) of the latent count `Z[i, j, k]`.
pub fn log_cond_z(data: &ModelData, params: &DgmParams, p: usize, i: usize, j: usize, k: usize) -> impl Fn(u64) -> f64 {
    let n = data.n;
    let own = params.z(i, j as isize, k) as f64;
    let mut linear = (params.alpha(i, k) * params.gamma(j as isize, k)).ln();
    let mut offsets = Vec::with_capacity(p + 1);
    for c in j..(j + p + 1).min(n) {
        if !data.is_observed(i, c, k) {
            continue;
        }
        linear += params.rate(c, k, p).ln() + data.ln_x[data.cell(i, c, k)];
        offsets.push(params.shape(i, c, k, p) - own);
    }
    move |z: u64| {
        let zf = z as f64;
        zf * linear - ln_gamma(zf + 1.0) - offsets.iter().map(|o| ln_gamma(o + zf)).sum::<f64>()
    }
}

pub fn cond_z<R: Rng + ?Sized>(
    data: &ModelData,
    params: &DgmParams,
    p: usize,
    i: usize,
    j: usize,
    k: usize,
    run: &RunConfig,
    rng: &mut R,
) -> Result<u64> {
    if !data.is_observed(i, j, k) {
        return Err(Error::InvalidSpec(format!(
            "latent count ({}, {}, {}) is not attached to an observed cell",
            i + 1,
            j + 1,
            k + 1
        )));
    }
    if params.gamma(j as isize, k) == 0.0 {
        return Ok(0);
    }
    let target = log_cond_z(data, params, p, i, j, k);
    discrete_sample(target, &run.discrete, rng)
        .map_err(|e| e.within(format!("z[{}, {}, {}]", i + 1, j + 1, k + 1)))
}

/// Hyperparameter groups: one `(shape, rate)` pair per origin year for alpha
/// and per development year for beta and gamma.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HyperGroup {
    Alpha(usize),
    Beta(usize),
    Gamma(usize),
}

impl HyperGroup {
    /// The parameters `theta[., k]` governed by this pair, one per business.
    fn members(self, params: &DgmParams) -> Vec<f64> {
        (0..params.businesses())
            .map(|k| match self {
                HyperGroup::Alpha(i) => params.alpha(i, k),
                HyperGroup::Beta(j) => params.beta(j, k),
                HyperGroup::Gamma(j) => params.gamma(j as isize, k),
            })
            .collect()
    }

    fn prior(self, spec: &ModelSpec) -> HyperPrior {
        match self {
            HyperGroup::Alpha(_) => spec.alpha_prior,
            HyperGroup::Beta(_) => spec.beta_prior,
            HyperGroup::Gamma(_) => spec.gamma_prior,
        }
    }

    pub fn shape(self, params: &DgmParams) -> f64 {
        let h = &params.hyper;
        match self {
            HyperGroup::Alpha(i) => h.a_alpha[i],
            HyperGroup::Beta(j) => h.a_beta[j],
            HyperGroup::Gamma(j) => h.a_gamma[j],
        }
    }

    pub fn rate(self, params: &DgmParams) -> f64 {
        let h = &params.hyper;
        match self {
            HyperGroup::Alpha(i) => h.b_alpha[i],
            HyperGroup::Beta(j) => h.b_beta[j],
            HyperGroup::Gamma(j) => h.b_gamma[j],
        }
    }

    pub fn set_shape(self, params: &mut DgmParams, v: f64) {
        let h = &mut params.hyper;
        match self {
            HyperGroup::Alpha(i) => h.a_alpha[i] = v,
            HyperGroup::Beta(j) => h.a_beta[j] = v,
            HyperGroup::Gamma(j) => h.a_gamma[j] = v,
        }
    }

    pub fn set_rate(self, params: &mut DgmParams, v: f64) {
        let h = &mut params.hyper;
        match self {
            HyperGroup::Alpha(i) => h.b_alpha[i] = v,
            HyperGroup::Beta(j) => h.b_beta[j] = v,
            HyperGroup::Gamma(j) => h.b_gamma[j] = v,
        }
    }
}

/// Log full conditional of a shape hyperparameter.
pub fn log_cond_hyper_shape(group: HyperGroup, params: &DgmParams, spec: &ModelSpec) -> impl Fn(f64) -> f64 {
    let members = group.members(params);
    let kk = members.len() as f64;
    let rate = group.rate(params);
    let sum_ln: f64 = members.iter().map(|v| v.ln()).sum();
    let prior = group.prior(spec);
    move |a: f64| {
        if a <= 0.0 {
            return f64::NEG_INFINITY;
        }
        kk * a * rate.ln() - kk * ln_gamma(a) + a * sum_ln + (prior.shape0 - 1.0) * a.ln() - prior.rate0 * a
    }
}

pub fn cond_hyper_shape<R: Rng + ?Sized>(
    group: HyperGroup,
    params: &DgmParams,
    spec: &ModelSpec,
    run: &RunConfig,
    rng: &mut R,
) -> Result<f64> {
    if params.businesses() == 0 {
        let prior = group.prior(spec);
        return Ok(sample_gamma(rng, prior.shape0, prior.rate0));
    }
    let target = log_cond_hyper_shape(group, params, spec);
    slice_sample(target, group.shape(params), &run.slice, rng)
        .map_err(|e| e.within(format!("{group:?} shape")))
}

/// Exact conjugate draw of a rate hyperparameter:
/// `Ga(rate_prior_shape + K a, rate_prior_rate + sum_k theta_k)`.
pub fn cond_hyper_rate<R: Rng + ?Sized>(group: HyperGroup, params: &DgmParams, spec: &ModelSpec, rng: &mut R) -> f64 {
    let members = group.members(params);
    let prior = group.prior(spec);
    let shape = prior.shape0 + members.len() as f64 * group.shape(params);
    let rate = prior.rate0 + members.iter().sum::<f64>();
    sample_gamma(rng, shape, rate)
}
