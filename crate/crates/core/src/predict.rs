//! Posterior predictive simulation of the lower triangles, reserve
//! aggregation and risk measures.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::PosteriorSamples;
use crate::kernel::summary::{ceil_count, hpd_interval, mean, quantile_sorted};
use crate::kernel::variates::{sample_gamma, sample_poisson};
use crate::par::Execution;
use crate::rng::{stream, Purpose};
use crate::triangle::TrianglePanel;

/// Scale on which reserves are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Original,
    Transformed,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Scale::Original),
            "transformed" => Ok(Scale::Transformed),
            other => Err(Error::InvalidSpec(format!(
                "scale must be 'original' or 'transformed', got '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for Scale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scale::Original => "original",
            Scale::Transformed => "transformed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictOptions {
    pub scale: Scale,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions {
            scale: Scale::Original,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

/// Lower-triangle cells `(i, j, k)` with `i + j >= n`, business-major.
pub fn future_cells(n: usize, businesses: usize) -> Vec<(usize, usize, usize)> {
    (0..businesses)
        .flat_map(|k| (0..n).flat_map(move |i| (n - i..n).map(move |j| (i, j, k))))
        .collect()
}

/// Predictive draws of every unobserved cell plus their reserve aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDraws {
    pub n: usize,
    pub businesses: usize,
    pub scale: Scale,
    pub cell_index: Vec<(usize, usize, usize)>,
    /// `cells[m][c]` is draw `m` of cell `cell_index[c]`.
    pub cells: Vec<Vec<f64>>,
    /// `origin[m][k * n + i]` is `R(i, k)`.
    pub origin: Vec<Vec<f64>>,
    /// `business[m][k]` is `R(k)`.
    pub business: Vec<Vec<f64>>,
    pub total: Vec<f64>,
    pub business_ids: Vec<String>,
    pub origin_labels: Vec<i64>,
}

impl PredictiveDraws {
    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }

    /// Named reserve series: the grand total, each business, and each
    /// `(business, origin)` pair with at least one future cell.
    pub fn reserve_draws(&self) -> ReserveDraws {
        let n = self.n;
        let mut series = vec![("total".to_string(), self.total.clone())];
        for k in 0..self.businesses {
            series.push((
                business_name(&self.business_ids[k]),
                self.business.iter().map(|b| b[k]).collect(),
            ));
        }
        for k in 0..self.businesses {
            for i in 1..n {
                series.push((
                    origin_name(&self.business_ids[k], self.origin_labels[i]),
                    self.origin.iter().map(|o| o[k * n + i]).collect(),
                ));
            }
        }
        ReserveDraws {
            scale: self.scale,
            series,
        }
    }

    pub fn write_cells_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("i,j,k,draw,value\n");
        for (m, row) in self.cells.iter().enumerate() {
            for (c, &(i, j, k)) in self.cell_index.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{},{}", i + 1, j + 1, k + 1, m + 1, row[c]);
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

pub fn business_name(id: &str) -> String {
    format!("business={id}")
}

pub fn origin_name(id: &str, origin: i64) -> String {
    format!("business={id};origin={origin}")
}

/// Draws the lower triangle once per stored posterior draw. Future latent
/// counts come fresh from their Poisson prior; claims then follow the gamma
/// law with counts mixing posterior (observed cells) and fresh (future cells)
/// values. With `Scale::Original` each cell is back-transformed before
/// aggregation.
pub fn predictive_draws(samples: &PosteriorSamples, panel: &TrianglePanel, opts: &PredictOptions) -> Result<PredictiveDraws> {
    let (n, kk) = (panel.n(), panel.businesses());
    if samples.n != n || samples.businesses != kk {
        return Err(Error::DimensionMismatch(format!(
            "samples are {}x{} with {} businesses, panel is {n}x{n} with {kk}",
            samples.n, samples.n, samples.businesses
        )));
    }
    let p = samples.spec.p;
    let transform = match (opts.scale, panel.transform) {
        (Scale::Original, Some(t)) => Some(t),
        _ => None,
    };
    let cell_index = future_cells(n, kk);
    let draws: Vec<_> = samples.draws().collect();

    let per_draw = opts.execution.map_range(draws.len(), |m| {
        let mut rng = stream(opts.seed, Purpose::Predictive, m as u64);
        let mut params = draws[m].to_params(n, kk);
        let mut cells = Vec::with_capacity(cell_index.len());
        let mut origin = vec![0.0; n * kk];
        for k in 0..kk {
            for i in 1..n {
                for j in n - i..n {
                    let zmean = params.alpha(i, k) * params.gamma(j as isize, k);
                    let z = sample_poisson(&mut rng, zmean);
                    params.set_z(i, j, k, z);
                    let x = sample_gamma(&mut rng, params.shape(i, j, k, p), params.rate(j, k, p));
                    let x = transform.map_or(x, |t| t.invert(x));
                    cells.push(x);
                    origin[k * n + i] += x;
                }
            }
        }
        (cells, origin)
    });

    let mut out = PredictiveDraws {
        n,
        businesses: kk,
        scale: if panel.transform.is_some() { opts.scale } else { Scale::Original },
        cell_index,
        cells: Vec::with_capacity(per_draw.len()),
        origin: Vec::with_capacity(per_draw.len()),
        business: Vec::with_capacity(per_draw.len()),
        total: Vec::with_capacity(per_draw.len()),
        business_ids: panel.business_ids.clone(),
        origin_labels: panel.origin_labels.clone(),
    };
    for (cells, origin) in per_draw {
        let business: Vec<f64> = (0..kk).map(|k| origin[k * n..(k + 1) * n].iter().sum()).collect();
        out.total.push(business.iter().sum());
        out.business.push(business);
        out.origin.push(origin);
        out.cells.push(cells);
    }
    Ok(out)
}

/// Replicate draws of the observed cells (model scale), one vector per
/// posterior draw, in calibration-cell order.
pub fn replicate_observed(samples: &PosteriorSamples, seed: u64, execution: Execution) -> Vec<Vec<f64>> {
    let (n, kk, p) = (samples.n, samples.businesses, samples.spec.p);
    let draws: Vec<_> = samples.draws().collect();
    execution.map_range(draws.len(), |m| {
        let mut rng = stream(seed, Purpose::Replicate, m as u64);
        let params = draws[m].to_params(n, kk);
        crate::gibbs::samples::calibration_cells(n, kk)
            .map(|(i, j, k)| sample_gamma(&mut rng, params.shape(i, j, k, p), params.rate(j, k, p)))
            .collect()
    })
}

/// Named reserve draw series sharing one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReserveDraws {
    pub scale: Scale,
    pub series: Vec<(String, Vec<f64>)>,
}

impl ReserveDraws {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.series.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Writes `aggregate,draw,value` rows plus a `.meta.json` sibling.
    pub fn write_csv(&self, path: &Path, meta: &serde_json::Value) -> Result<()> {
        let mut out = String::from("aggregate,draw,value\n");
        for (name, draws) in &self.series {
            for (m, v) in draws.iter().enumerate() {
                let _ = writeln!(out, "{name},{},{v}", m + 1);
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
        write_meta(path, self.scale, meta)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut series: Vec<(String, Vec<f64>)> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = || Error::Parse {
                line: line + 2,
                msg: "expected aggregate,draw,value".into(),
            };
            let name = rec.get(0).ok_or_else(bad)?;
            let value: f64 = rec.get(2).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            match series.iter_mut().find(|(n, _)| n == name) {
                Some((_, v)) => v.push(value),
                None => series.push((name.to_string(), vec![value])),
            }
        }
        Ok(ReserveDraws {
            scale: read_meta_scale(path)?,
            series,
        })
    }
}

fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// Writes the metadata sibling of an output file, recording its scale.
pub fn write_meta(path: &Path, scale: Scale, extra: &serde_json::Value) -> Result<()> {
    let mut meta = serde_json::json!({ "scale": scale });
    if let (Some(obj), Some(extra)) = (meta.as_object_mut(), extra.as_object()) {
        for (k, v) in extra {
            obj.insert(k.clone(), v.clone());
        }
    }
    let mp = meta_path(path);
    std::fs::write(&mp, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&mp, e))
}

/// Scale recorded in the metadata sibling; `original` when there is none.
pub fn read_meta_scale(path: &Path) -> Result<Scale> {
    let mp = meta_path(path);
    if !mp.exists() {
        return Ok(Scale::Original);
    }
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?)?;
    match v.get("scale") {
        Some(s) => Ok(serde_json::from_value(s.clone())?),
        None => Ok(Scale::Original),
    }
}

/// Realised reserves from held-out truth, named like [`PredictiveDraws::reserve_draws`].
pub fn truth_reserves(panel: &TrianglePanel, scale: Scale) -> Option<Vec<(String, f64)>> {
    if !panel.has_full_truth() {
        return None;
    }
    let (n, kk) = (panel.n(), panel.businesses());
    let back = |x: f64| match (scale, panel.transform) {
        (Scale::Original, Some(t)) => t.invert(x),
        _ => x,
    };
    let mut origin = vec![0.0; n * kk];
    for (i, j, k) in future_cells(n, kk) {
        origin[k * n + i] += back(panel.truth(i, j, k)?);
    }
    let business: Vec<f64> = (0..kk).map(|k| origin[k * n..(k + 1) * n].iter().sum()).collect();
    let mut out = vec![("total".to_string(), business.iter().sum())];
    for k in 0..kk {
        out.push((business_name(&panel.business_ids[k]), business[k]));
    }
    for k in 0..kk {
        for i in 1..n {
            out.push((origin_name(&panel.business_ids[k], panel.origin_labels[i]), origin[k * n + i]));
        }
    }
    Some(out)
}

/// Risk summary of one reserve distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub median: f64,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub hpd_lo: f64,
    pub hpd_hi: f64,
    /// `(q, VaR(q), ES(q))`
    pub tail: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReserveSummary {
    pub scale: Scale,
    pub hpd_level: f64,
    pub aggregates: Vec<(String, AggregateSummary)>,
}

/// `VaR(q)`: the `ceil(q N)`-th order statistic.
pub fn value_at_risk(sorted: &[f64], q: f64) -> f64 {
    quantile_sorted(sorted, q)
}

/// `ES(q)`: mean of the order statistics from the `VaR(q)` one upward.
pub fn expected_shortfall(sorted: &[f64], q: f64) -> f64 {
    let start = ceil_count(q, sorted.len()).clamp(1, sorted.len()) - 1;
    mean(&sorted[start..])
}

pub const MIN_SUMMARY_DRAWS: usize = 100;

pub fn summarize(draws: &[f64], levels: &[f64], hpd_level: f64) -> Result<AggregateSummary> {
    if draws.len() < MIN_SUMMARY_DRAWS {
        return Err(Error::TooFewDraws {
            needed: MIN_SUMMARY_DRAWS,
            got: draws.len(),
        });
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (hpd_lo, hpd_hi) = hpd_interval(&sorted, hpd_level)?;
    let mut levels = levels.to_vec();
    levels.sort_by(f64::total_cmp);
    Ok(AggregateSummary {
        median: quantile_sorted(&sorted, 0.5),
        mean: mean(&sorted),
        ci_lo: quantile_sorted(&sorted, 0.025),
        ci_hi: quantile_sorted(&sorted, 0.975),
        hpd_lo,
        hpd_hi,
        tail: levels
            .iter()
            .map(|&q| (q, value_at_risk(&sorted, q), expected_shortfall(&sorted, q)))
            .collect(),
    })
}

pub fn reserve_summary(draws: &ReserveDraws, levels: &[f64], hpd_level: f64) -> Result<ReserveSummary> {
    let aggregates = draws
        .series
        .iter()
        .map(|(name, d)| summarize(d, levels, hpd_level).map(|s| (name.clone(), s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReserveSummary {
        scale: draws.scale,
        hpd_level,
        aggregates,
    })
}

impl ReserveSummary {
    pub fn get(&self, name: &str) -> Option<&AggregateSummary> {
        self.aggregates.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    /// `aggregate,statistic,value` rows plus a `.meta.json` sibling.
    pub fn write_csv(&self, path: &Path, meta: &serde_json::Value) -> Result<()> {
        let mut out = String::from("aggregate,statistic,value\n");
        for (name, s) in &self.aggregates {
            let _ = writeln!(out, "{name},median,{}", s.median);
            let _ = writeln!(out, "{name},mean,{}", s.mean);
            let _ = writeln!(out, "{name},ci95_lo,{}", s.ci_lo);
            let _ = writeln!(out, "{name},ci95_hi,{}", s.ci_hi);
            let _ = writeln!(out, "{name},hpd_lo,{}", s.hpd_lo);
            let _ = writeln!(out, "{name},hpd_hi,{}", s.hpd_hi);
            for (q, var, es) in &s.tail {
                let _ = writeln!(out, "{name},var_{q},{var}");
                let _ = writeln!(out, "{name},es_{q},{es}");
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
        let mut extra = meta.clone();
        if let Some(obj) = extra.as_object_mut() {
            obj.insert("hpd_level".into(), self.hpd_level.into());
            obj.insert("quantile_estimator".into(), "inverse empirical cdf: ceil(qN)-th order statistic".into());
            obj.insert("es_estimator".into(), "mean of order statistics from VaR(q) upward".into());
        }
        write_meta(path, self.scale, &extra)
    }
}
