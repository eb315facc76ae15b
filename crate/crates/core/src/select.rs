//! Model selection scores: DIC and the L-measure, and the model-grid driver.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{GridSpec, HyperPrior, ModelSpec, RunConfig};
use crate::error::{Error, Result};
use crate::gibbs::conditionals::{deviance, ModelData};
use crate::gibbs::samples::calibration_cells;
use crate::gibbs::{run_chains, PosteriorSamples};
use crate::par::Execution;
use crate::predict::{future_cells, predictive_draws, replicate_observed, PredictOptions, Scale};
use crate::triangle::TrianglePanel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DicReport {
    /// Posterior mean deviance.
    pub mean_deviance: f64,
    /// Deviance at the posterior mean of `(alpha, beta, gamma)` and rounded mean counts.
    pub plugin_deviance: f64,
    pub p_d: f64,
    pub dic: f64,
}

/// `DIC = 2 mean(D) - D(theta_bar, z_bar)`.
pub fn dic(samples: &PosteriorSamples, panel: &TrianglePanel) -> Result<DicReport> {
    if samples.total_draws() == 0 {
        return Err(Error::TooFewDraws { needed: 1, got: 0 });
    }
    let data = ModelData::new(panel)?;
    let m = samples.total_draws() as f64;
    let mean_deviance = samples.deviances().sum::<f64>() / m;

    let first = samples.draws().next().expect("at least one draw");
    let mut bar = first.clone();
    let avg = |get: &dyn Fn(&crate::gibbs::Draw) -> &Vec<f64>| -> Vec<f64> {
        let mut acc = vec![0.0; get(first).len()];
        for d in samples.draws() {
            for (a, v) in acc.iter_mut().zip(get(d)) {
                *a += v;
            }
        }
        acc.iter().map(|a| a / m).collect()
    };
    bar.alpha = avg(&|d| &d.alpha);
    bar.beta = avg(&|d| &d.beta);
    bar.gamma = avg(&|d| &d.gamma);
    let mut zsum = vec![0.0; first.z.len()];
    for d in samples.draws() {
        for (a, z) in zsum.iter_mut().zip(&d.z) {
            *a += f64::from(*z);
        }
    }
    bar.z = zsum.iter().map(|s| (s / m).round() as u32).collect();
    let params = bar.to_params(samples.n, samples.businesses);
    let plugin_deviance = deviance(&data, &params, samples.spec.p).map_err(|e| e.within("DIC plug-in"))?;
    let p_d = mean_deviance - plugin_deviance;
    Ok(DicReport {
        mean_deviance,
        plugin_deviance,
        p_d,
        dic: mean_deviance + p_d,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cells {
    InSample,
    OutOfSample,
}

/// The two terms of the L-measure, each already divided by `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LMeasure {
    pub variance_term: f64,
    pub bias_term: f64,
    pub cells: usize,
}

impl LMeasure {
    /// `L(nu) = variance_term + nu * bias_term`
    pub fn value(&self, nu: f64) -> f64 {
        self.variance_term + nu * self.bias_term
    }
}

fn moments(draws: &[Vec<f64>], c: usize) -> (f64, f64) {
    let n = draws.len() as f64;
    let mean = draws.iter().map(|d| d[c]).sum::<f64>() / n;
    let var = draws.iter().map(|d| (d[c] - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// L-measure on the model scale. Out of sample it scores the held-out lower
/// triangle with `M = K n (n - 1) / 2`; in sample it scores replicate draws of
/// the observed cells with `M = K n (n + 1) / 2`. Predictive variances use
/// the `1/N` normalisation.
pub fn l_measure(
    samples: &PosteriorSamples,
    panel: &TrianglePanel,
    cells: Cells,
    seed: u64,
    execution: Execution,
) -> Result<LMeasure> {
    let (n, kk) = (panel.n(), panel.businesses());
    if samples.total_draws() == 0 {
        return Err(Error::TooFewDraws { needed: 1, got: 0 });
    }
    let (draws, truth): (Vec<Vec<f64>>, Vec<f64>) = match cells {
        Cells::OutOfSample => {
            let cells = future_cells(n, kk);
            let truth = cells
                .iter()
                .map(|&(i, j, k)| panel.truth(i, j, k))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::InvalidSpec("out-of-sample L-measure needs held-out truth for every lower-triangle cell".into()))?;
            let opts = PredictOptions {
                scale: Scale::Transformed,
                seed,
                execution,
            };
            (predictive_draws(samples, panel, &opts)?.cells, truth)
        }
        Cells::InSample => {
            let truth = calibration_cells(n, kk).map(|(i, j, k)| panel.value(i, j, k)).collect();
            (replicate_observed(samples, seed, execution), truth)
        }
    };
    Ok(l_measure_from_draws(&draws, &truth))
}

/// L-measure terms from per-draw cell vectors and the matching observed values.
pub fn l_measure_from_draws(draws: &[Vec<f64>], truth: &[f64]) -> LMeasure {
    let m = truth.len() as f64;
    let (mut var_sum, mut bias_sum) = (0.0, 0.0);
    for (c, x) in truth.iter().enumerate() {
        let (mean, var) = moments(draws, c);
        var_sum += var;
        bias_sum += (mean - x).powi(2);
    }
    LMeasure {
        variance_term: var_sum / m,
        bias_term: bias_sum / m,
        cells: truth.len(),
    }
}

/// Expands a grid in block order: the beta hyperprior value varies slowest,
/// then the alpha value, then the dependence order.
pub fn expand_grid(grid: &GridSpec, base: &ModelSpec) -> Vec<ModelSpec> {
    let mut out = Vec::new();
    for &b0 in &grid.beta0_values {
        for &a0 in &grid.alpha0_values {
            for &p in &grid.p_values {
                out.push(ModelSpec {
                    p,
                    alpha_prior: HyperPrior::new(a0, a0),
                    beta_prior: HyperPrior::new(b0, b0),
                    gamma_prior: HyperPrior::new(grid.gamma0, grid.gamma0),
                    ..*base
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub model_id: usize,
    pub spec: ModelSpec,
    pub dic: Option<DicReport>,
    pub l_in: Option<f64>,
    pub l_out: Option<f64>,
    pub error: Option<String>,
}

/// Weight on the bias term used for grid scoring.
pub const GRID_NU: f64 = 0.5;

/// Fits and scores one model.
pub fn score_model(panel: &TrianglePanel, spec: &ModelSpec, run: &RunConfig) -> Result<(DicReport, f64, Option<f64>)> {
    let fit_panel = panel.without_truth();
    let samples = run_chains(&fit_panel, spec, run)?;
    let d = dic(&samples, &fit_panel)?;
    let l_in = l_measure(&samples, &fit_panel, Cells::InSample, run.seed, run.execution)?.value(GRID_NU);
    let l_out = if panel.has_full_truth() {
        Some(l_measure(&samples, panel, Cells::OutOfSample, run.seed, run.execution)?.value(GRID_NU))
    } else {
        None
    };
    Ok((d, l_in, l_out))
}

/// Fits every model of the grid; failures are recorded per row.
pub fn model_grid_run(panel: &TrianglePanel, grid: &[ModelSpec], run: &RunConfig) -> Vec<GridRow> {
    run.execution.map_range(grid.len(), |idx| {
        let spec = grid[idx];
        match score_model(panel, &spec, run) {
            Ok((d, l_in, l_out)) => GridRow {
                model_id: idx + 1,
                spec,
                dic: Some(d),
                l_in: Some(l_in),
                l_out,
                error: None,
            },
            Err(e) => GridRow {
                model_id: idx + 1,
                spec,
                dic: None,
                l_in: None,
                l_out: None,
                error: Some(e.to_string()),
            },
        }
    })
}

/// Model ids ordered by DIC, failed rows last.
pub fn rank_by_dic(rows: &[GridRow]) -> Vec<usize> {
    let mut ids: Vec<(usize, f64)> = rows
        .iter()
        .map(|r| (r.model_id, r.dic.map_or(f64::INFINITY, |d| d.dic)))
        .collect();
    ids.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    ids.into_iter().map(|(id, _)| id).collect()
}

pub fn write_grid_csv(rows: &[GridRow], path: &Path) -> Result<()> {
    let ranks = rank_by_dic(rows);
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    let mut out = String::from(
        "model_id,p,a_alpha0,b_alpha0,a_beta0,b_beta0,a_gamma0,b_gamma0,dic,p_d,mean_deviance,l_in,l_out,dic_rank,error\n",
    );
    for r in rows {
        let rank = ranks.iter().position(|id| *id == r.model_id).map_or(0, |p| p + 1);
        let s = &r.spec;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.model_id,
            s.p,
            s.alpha_prior.shape0,
            s.alpha_prior.rate0,
            s.beta_prior.shape0,
            s.beta_prior.rate0,
            s.gamma_prior.shape0,
            s.gamma_prior.rate0,
            opt(r.dic.map(|d| d.dic)),
            opt(r.dic.map(|d| d.p_d)),
            opt(r.dic.map(|d| d.mean_deviance)),
            opt(r.l_in),
            opt(r.l_out),
            rank,
            r.error.as_deref().unwrap_or("").replace(',', ";"),
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
    crate::predict::write_meta(
        path,
        Scale::Transformed,
        &serde_json::json!({
            "nu": GRID_NU,
            "l_out_normaliser": "K n (n - 1) / 2 lower-triangle cells",
            "l_in_normaliser": "K n (n + 1) / 2 observed cells, replicate predictive draws",
            "dic_plugin": "posterior means of alpha, beta, gamma; rounded posterior mean latent counts",
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_ordering_matches_block_layout() {
        let specs = expand_grid(&GridSpec::default(), &ModelSpec::default());
        assert_eq!(specs.len(), 24);
        let key = |s: &ModelSpec| (s.p, s.alpha_prior.shape0, s.beta_prior.shape0);
        assert_eq!(key(&specs[0]), (0, 1.0, 1.0));
        assert_eq!(key(&specs[1]), (1, 1.0, 1.0));
        assert_eq!(key(&specs[5]), (5, 1.0, 1.0));
        assert_eq!(key(&specs[6]), (0, 10.0, 1.0));
        assert_eq!(key(&specs[12]), (0, 1.0, 10.0));
        assert_eq!(key(&specs[23]), (5, 10.0, 10.0));
        assert!(specs.iter().all(|s| s.gamma_prior == HyperPrior::new(10.0, 10.0)));
        assert!(specs.iter().all(|s| s.alpha_prior.shape0 == s.alpha_prior.rate0));
    }

    #[test]
    fn l_measure_degenerate_and_affine() {
        let draws = vec![vec![1.0, 2.0]];
        let l = l_measure_from_draws(&draws, &[2.0, 4.0]);
        assert_eq!(l.variance_term, 0.0);
        assert_eq!(l.value(1.0), (1.0 + 4.0) / 2.0);
        let draws = vec![vec![1.0, 5.0], vec![3.0, 2.0], vec![2.0, 2.5]];
        let l = l_measure_from_draws(&draws, &[2.5, 1.0]);
        for nu in [0.0, 0.25, 0.5, 1.0] {
            let affine = l.value(0.0) + nu * (l.value(1.0) - l.value(0.0));
            assert!((l.value(nu) - affine).abs() <= 1e-12 * l.value(nu).abs().max(1.0));
        }
    }
}
