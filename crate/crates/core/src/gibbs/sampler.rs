//! Sweeps and multi-chain orchestration.

use std::time::Instant;

use rand::Rng;

use crate::config::{ModelSpec, RunConfig};
use crate::dgm::{DgmParams, Hyper};
use crate::error::{Error, Result};
use crate::gibbs::conditionals::{
    augmented_loglik_data, cond_alpha, cond_beta, cond_gamma, cond_hyper_rate, cond_hyper_shape,
    cond_z, deviance, HyperGroup, ModelData,
};
use crate::gibbs::samples::{ChainSamples, Draw, PosteriorSamples};
use crate::rng::{stream, Purpose, StreamRng};
use crate::triangle::TrianglePanel;

/// Current state of one chain.
#[derive(Debug, Clone)]
pub struct GibbsState {
    pub params: DgmParams,
    pub iteration: u64,
    pub rng: StreamRng,
}

impl GibbsState {
    pub fn new(params: DgmParams, rng: StreamRng) -> Self {
        GibbsState {
            params,
            iteration: 0,
            rng,
        }
    }
}

/// Starting values: `alpha` from row means, `beta` from the ratio of the mean
/// row level to column means, `gamma` at its prior mean, counts at zero and
/// hyperparameters at their prior means. Each chain multiplies alpha, beta and
/// gamma by independent factors in `[1/2, 2]` drawn from `rng`.
pub fn initial_params<R: Rng + ?Sized>(data: &ModelData, spec: &ModelSpec, rng: Option<&mut R>) -> DgmParams {
    let (n, kk) = (data.n(), data.businesses());
    let mut alpha = vec![vec![1.0; n]; kk];
    let mut beta = vec![vec![1.0; n]; kk];
    for k in 0..kk {
        let row_mean = |i: usize| -> Option<f64> {
            let vals: Vec<f64> = (0..n).filter(|&j| data.is_observed(i, j, k)).map(|j| data.x(i, j, k)).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        let col_mean = |j: usize| -> Option<f64> {
            let vals: Vec<f64> = (0..n).filter(|&i| data.is_observed(i, j, k)).map(|i| data.x(i, j, k)).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        let rows: Vec<Option<f64>> = (0..n).map(row_mean).collect();
        let known: Vec<f64> = rows.iter().flatten().copied().collect();
        let level = if known.is_empty() { 1.0 } else { known.iter().sum::<f64>() / known.len() as f64 };
        for i in 0..n {
            alpha[k][i] = rows[i].unwrap_or(level).max(1e-3);
        }
        for j in 0..n {
            beta[k][j] = col_mean(j).map_or(1.0, |c| level / c).clamp(1e-3, 1e3);
        }
    }
    let g0 = if spec.gamma_fixed_zero { 0.0 } else { spec.gamma_prior.mean() };
    let gamma = vec![vec![g0; n]; kk];
    let mut params = DgmParams::new(alpha, beta, gamma, Hyper::prior_means(n, spec)).expect("initial values are positive");
    if let Some(rng) = rng {
        let mut jitter = || 2f64.powf(rng.gen_range(-1.0..1.0));
        for v in params.alpha.iter_mut().chain(params.beta.iter_mut()).chain(params.gamma.iter_mut()) {
            *v *= jitter();
        }
    }
    params
}

/// One full scan: latent counts, alpha, beta, gamma, then each hyperparameter
/// shape followed by its rate.
pub fn gibbs_sweep(state: &mut GibbsState, data: &ModelData, spec: &ModelSpec, run: &RunConfig) -> Result<()> {
    let p = spec.p;
    let (n, kk) = (data.n(), data.businesses());
    let rng = &mut state.rng;
    let params = &mut state.params;

    if !spec.gamma_fixed_zero {
        let cells: Vec<_> = data.observed_cells().collect();
        for (i, j, k) in cells {
            let z = cond_z(data, params, p, i, j, k, run, rng)?;
            params.set_z(i, j, k, z);
        }
    }
    for k in 0..kk {
        for i in 0..n {
            let v = cond_alpha(data, params, p, i, k, run, rng)?;
            params.set_alpha(i, k, v);
        }
    }
    for k in 0..kk {
        for j in 0..n {
            let v = cond_beta(data, params, p, j, k, run, rng)?;
            params.set_beta(j, k, v);
        }
    }
    if !spec.gamma_fixed_zero {
        for k in 0..kk {
            for j in 0..n {
                let v = cond_gamma(data, params, p, j, k, run, rng)?;
                params.set_gamma(j, k, v);
            }
        }
    }
    let mut groups: Vec<HyperGroup> = (0..n).map(HyperGroup::Alpha).chain((0..n).map(HyperGroup::Beta)).collect();
    if !spec.gamma_fixed_zero {
        groups.extend((0..n).map(HyperGroup::Gamma));
    }
    for g in groups {
        let a = cond_hyper_shape(g, params, spec, run, rng)?;
        g.set_shape(params, a);
        let b = cond_hyper_rate(g, params, spec, rng);
        g.set_rate(params, b);
    }

    state.iteration += 1;
    augmented_loglik_data(data, params, p).map_err(|e| e.within(format!("after sweep {}", state.iteration)))?;
    Ok(())
}

fn run_one_chain(chain: usize, data: &ModelData, spec: &ModelSpec, run: &RunConfig) -> Result<ChainSamples> {
    let mut init_rng = stream(run.seed, Purpose::ChainInit, chain as u64);
    let params = initial_params(data, spec, Some(&mut init_rng));
    let mut state = GibbsState::new(params, stream(run.seed, Purpose::Chain, chain as u64));
    let context = |e: Error| e.within(format!("chain {}", chain + 1));
    for _ in 0..run.burn_in {
        gibbs_sweep(&mut state, data, spec, run).map_err(context)?;
    }
    let mut samples = ChainSamples::with_capacity(run.keep);
    for _ in 0..run.keep {
        for _ in 0..run.thin {
            gibbs_sweep(&mut state, data, spec, run).map_err(context)?;
        }
        let dev = deviance(data, &state.params, spec.p).map_err(context)?;
        samples.push(Draw::capture(&state.params, data), dev);
    }
    Ok(samples)
}

/// Runs `run.chains` independent chains, each on its own random stream.
pub fn run_chains(panel: &TrianglePanel, spec: &ModelSpec, run: &RunConfig) -> Result<PosteriorSamples> {
    spec.validate(panel.n())?;
    run.validate()?;
    if !panel.is_calibration() {
        return Err(Error::InvalidSpec(
            "fitting requires exactly the upper triangle to be observed".into(),
        ));
    }
    let data = ModelData::new(panel)?;
    let started = Instant::now();
    let chains = run
        .execution
        .map_range(run.chains, |c| run_one_chain(c, &data, spec, run))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorSamples {
        n: panel.n(),
        businesses: panel.businesses(),
        spec: *spec,
        run: *run,
        chains,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}
