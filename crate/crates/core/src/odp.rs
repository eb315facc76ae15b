//! Chain-ladder and the over-dispersed Poisson residual bootstrap.
//!
//! Triangles are single-business incremental triangles on the money scale,
//! given as rows of optional values. Each row is observed on a leading run of
//! development years (`j < n - i` for a run-off triangle, all `j` for a fully
//! developed square).

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::summary::quantile_sorted;
use crate::kernel::variates::sample_gamma;
use crate::par::Execution;
use crate::predict::{business_name, origin_name, ReserveDraws, Scale};
use crate::rng::{stream, Purpose};
use crate::triangle::TrianglePanel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLadderFit {
    pub n: usize,
    /// Number of observed development years per origin year.
    pub observed_len: Vec<usize>,
    /// Volume-weighted development factors `f[j]`, `j = 0..n-1`.
    pub factors: Vec<f64>,
    /// Fitted incremental means for every cell, past and future.
    pub fitted: Vec<Vec<f64>>,
    /// Point reserve per origin year.
    pub reserves: Vec<f64>,
    pub total_reserve: f64,
    /// Pearson dispersion.
    pub phi: f64,
    /// Pearson residuals scaled by `sqrt(N / (N - P))`, one per observed cell.
    pub adjusted_residuals: Vec<f64>,
}

fn observed_rows(tri: &[Vec<Option<f64>>]) -> Result<Vec<Vec<f64>>> {
    tri.iter()
        .enumerate()
        .map(|(i, row)| {
            let prefix: Vec<f64> = row.iter().map_while(|c| *c).collect();
            if prefix.is_empty() {
                return Err(Error::InvalidSpec(format!("origin year {} has no observed cells", i + 1)));
            }
            if row.len() != tri.len() || row[prefix.len()..].iter().any(Option::is_some) {
                return Err(Error::InvalidSpec(format!(
                    "origin year {} is not a leading run of {} development years",
                    i + 1,
                    tri.len()
                )));
            }
            Ok(prefix)
        })
        .collect()
}

/// Deterministic chain ladder with ODP fitted values and Pearson dispersion.
pub fn chain_ladder(tri: &[Vec<Option<f64>>]) -> Result<ChainLadderFit> {
    let n = tri.len();
    if n == 0 {
        return Err(Error::InvalidSpec("empty triangle".into()));
    }
    let inc = observed_rows(tri)?;
    let cum: Vec<Vec<f64>> = inc
        .iter()
        .map(|row| {
            row.iter()
                .scan(0.0, |acc, x| {
                    *acc += x;
                    Some(*acc)
                })
                .collect()
        })
        .collect();

    let observed_len: Vec<usize> = inc.iter().map(Vec::len).collect();
    let mut factors = Vec::with_capacity(n.saturating_sub(1));
    for j in 0..n.saturating_sub(1) {
        let rows: Vec<usize> = (0..n).filter(|&i| observed_len[i] > j + 1).collect();
        if rows.is_empty() {
            return Err(Error::InvalidSpec(format!(
                "no origin year observes development years {} and {}",
                j + 1,
                j + 2
            )));
        }
        let num: f64 = rows.iter().map(|&i| cum[i][j + 1]).sum();
        let den: f64 = rows.iter().map(|&i| cum[i][j]).sum();
        if !(den > 0.0) {
            return Err(Error::numerical(
                format!("development factor {}", j + 1),
                format!("cumulative column sum {den} is not positive"),
            ));
        }
        factors.push(num / den);
    }

    let mut fitted = vec![vec![0.0; n]; n];
    let mut reserves = vec![0.0; n];
    for i in 0..n {
        let last = observed_len[i] - 1;
        let latest = cum[i][last];
        let mut fitted_cum = vec![0.0; n];
        fitted_cum[last] = latest;
        for j in (0..last).rev() {
            fitted_cum[j] = fitted_cum[j + 1] / factors[j];
        }
        for j in last + 1..n {
            fitted_cum[j] = fitted_cum[j - 1] * factors[j - 1];
        }
        for j in 0..n {
            fitted[i][j] = fitted_cum[j] - if j == 0 { 0.0 } else { fitted_cum[j - 1] };
        }
        reserves[i] = fitted_cum[n - 1] - latest;
    }

    let obs: usize = observed_len.iter().sum();
    let n_params = 2 * n - 1;
    let mut residuals = Vec::with_capacity(obs);
    for i in 0..n {
        for j in 0..observed_len[i] {
            let m = fitted[i][j];
            residuals.push(if m > 0.0 { (inc[i][j] - m) / m.sqrt() } else { 0.0 });
        }
    }
    let (phi, scale) = if obs > n_params {
        let dof = (obs - n_params) as f64;
        (residuals.iter().map(|r| r * r).sum::<f64>() / dof, (obs as f64 / dof).sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(ChainLadderFit {
        n,
        observed_len,
        factors,
        fitted,
        total_reserve: reserves.iter().sum(),
        reserves,
        phi,
        adjusted_residuals: residuals.iter().map(|r| r * scale).collect(),
    })
}

/// Bootstrap draws of the reserve per origin year and in total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdpDraws {
    pub origin: Vec<Vec<f64>>,
    pub total: Vec<f64>,
    pub fit: ChainLadderFit,
}

/// Gamma draw with mean `m` and variance `phi m`; `m` itself when either is
/// not positive.
pub fn process_error<R: Rng + ?Sized>(rng: &mut R, m: f64, phi: f64) -> f64 {
    if m > 0.0 && phi > 0.0 {
        sample_gamma(rng, m / phi, 1.0 / phi)
    } else {
        m
    }
}

pub const MAX_RESAMPLE_RETRIES: usize = 100;

fn one_resample<R: Rng + ?Sized>(fit: &ChainLadderFit, rng: &mut R) -> Result<Vec<f64>> {
    let n = fit.n;
    let pool = &fit.adjusted_residuals;
    for _ in 0..MAX_RESAMPLE_RETRIES {
        let pseudo: Vec<Vec<Option<f64>>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        (j < fit.observed_len[i]).then(|| {
                            let m = fit.fitted[i][j];
                            let r = pool[rng.gen_range(0..pool.len())];
                            m + r * m.max(0.0).sqrt()
                        })
                    })
                    .collect()
            })
            .collect();
        let Ok(refit) = chain_ladder(&pseudo) else {
            continue;
        };
        let mut origin = vec![0.0; n];
        for i in 0..n {
            for j in fit.observed_len[i]..n {
                origin[i] += process_error(rng, refit.fitted[i][j], fit.phi);
            }
        }
        return Ok(origin);
    }
    Err(Error::numerical(
        "ODP bootstrap",
        format!("no valid pseudo-triangle after {MAX_RESAMPLE_RETRIES} attempts"),
    ))
}

/// Residual bootstrap with gamma process error (mean `m`, variance `phi m`).
/// Resample `b` uses random stream `(seed, stream_offset + b)`.
pub fn odp_bootstrap(
    tri: &[Vec<Option<f64>>],
    resamples: usize,
    seed: u64,
    stream_offset: u64,
    execution: Execution,
) -> Result<OdpDraws> {
    if resamples < 100 {
        return Err(Error::TooFewDraws {
            needed: 100,
            got: resamples,
        });
    }
    let fit = chain_ladder(tri)?;
    let origin = execution
        .map_range(resamples, |b| {
            let mut rng = stream(seed, Purpose::Bootstrap, stream_offset + b as u64);
            one_resample(&fit, &mut rng)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let total = origin.iter().map(|o| o.iter().sum()).collect();
    Ok(OdpDraws { origin, total, fit })
}

/// Independent ODP bootstraps for every business of a money-scale panel,
/// named like the DGM reserve draws.
pub fn odp_panel(panel: &TrianglePanel, resamples: usize, seed: u64, execution: Execution) -> Result<(ReserveDraws, Vec<ChainLadderFit>)> {
    if panel.transform.is_some() {
        return Err(Error::InvalidSpec("the ODP baseline runs on the original money scale".into()));
    }
    let (n, kk) = (panel.n(), panel.businesses());
    let mut per_business = Vec::with_capacity(kk);
    for k in 0..kk {
        let draws = odp_bootstrap(&panel.observed_triangle(k), resamples, seed, (k * resamples) as u64, execution)
            .map_err(|e| e.within(format!("business {}", panel.business_ids[k])))?;
        per_business.push(draws);
    }
    let total: Vec<f64> = (0..resamples).map(|b| per_business.iter().map(|d| d.total[b]).sum()).collect();
    let mut series = vec![("total".to_string(), total)];
    for (k, d) in per_business.iter().enumerate() {
        series.push((business_name(&panel.business_ids[k]), d.total.clone()));
    }
    for (k, d) in per_business.iter().enumerate() {
        for i in 1..n {
            series.push((
                origin_name(&panel.business_ids[k], panel.origin_labels[i]),
                d.origin.iter().map(|o| o[i]).collect(),
            ));
        }
    }
    let fits = per_business.into_iter().map(|d| d.fit).collect();
    Ok((
        ReserveDraws {
            scale: Scale::Original,
            series,
        },
        fits,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub aggregate: String,
    pub dgm_median: f64,
    pub odp_median: f64,
    pub dgm_lo: f64,
    pub dgm_hi: f64,
    pub odp_lo: f64,
    pub odp_hi: f64,
    pub median_diff: f64,
    pub width_diff: f64,
    pub truth: Option<f64>,
    pub dgm_covers: Option<bool>,
    pub odp_covers: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub aggregate: String,
    pub lo: f64,
    pub hi: f64,
    pub dgm_density: f64,
    pub odp_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scale: Scale,
    pub rows: Vec<ComparisonRow>,
    pub histogram: Vec<HistogramBin>,
}

pub const HISTOGRAM_BINS: usize = 40;

fn interval(draws: &[f64]) -> (f64, f64, f64) {
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    (quantile_sorted(&s, 0.5), quantile_sorted(&s, 0.025), quantile_sorted(&s, 0.975))
}

fn densities(draws: &[f64], lo: f64, width: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0usize; bins];
    for &x in draws {
        let b = if width > 0.0 { ((x - lo) / width).floor() as isize } else { 0 };
        counts[b.clamp(0, bins as isize - 1) as usize] += 1;
    }
    let norm = draws.len() as f64 * if width > 0.0 { width } else { 1.0 };
    counts.iter().map(|c| *c as f64 / norm).collect()
}

/// Compares DGM and ODP reserve distributions aggregate by aggregate, with
/// coverage flags of the 95% intervals when realised reserves are supplied.
pub fn compare_models(dgm: &ReserveDraws, odp: &ReserveDraws, truth: Option<&[(String, f64)]>) -> Result<Comparison> {
    if dgm.scale != odp.scale {
        return Err(Error::InvalidSpec(format!(
            "scale mismatch: DGM draws are on the {} scale, ODP draws on the {} scale",
            dgm.scale, odp.scale
        )));
    }
    let mut rows = Vec::new();
    let mut histogram = Vec::new();
    for (name, d) in &dgm.series {
        let Some(o) = odp.get(name) else { continue };
        if d.is_empty() || o.is_empty() {
            continue;
        }
        let (dm, dlo, dhi) = interval(d);
        let (om, olo, ohi) = interval(o);
        let t = truth.and_then(|t| t.iter().find(|(n, _)| n == name).map(|(_, v)| *v));
        rows.push(ComparisonRow {
            aggregate: name.clone(),
            dgm_median: dm,
            odp_median: om,
            dgm_lo: dlo,
            dgm_hi: dhi,
            odp_lo: olo,
            odp_hi: ohi,
            median_diff: dm - om,
            width_diff: (dhi - dlo) - (ohi - olo),
            truth: t,
            dgm_covers: t.map(|t| dlo <= t && t <= dhi),
            odp_covers: t.map(|t| olo <= t && t <= ohi),
        });
        let lo = d.iter().chain(o).copied().fold(f64::INFINITY, f64::min);
        let hi = d.iter().chain(o).copied().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) / HISTOGRAM_BINS as f64;
        let (dd, od) = (densities(d, lo, width, HISTOGRAM_BINS), densities(o, lo, width, HISTOGRAM_BINS));
        for b in 0..HISTOGRAM_BINS {
            histogram.push(HistogramBin {
                aggregate: name.clone(),
                lo: lo + b as f64 * width,
                hi: lo + (b + 1) as f64 * width,
                dgm_density: dd[b],
                odp_density: od[b],
            });
        }
    }
    Ok(Comparison {
        scale: dgm.scale,
        rows,
        histogram,
    })
}

impl Comparison {
    pub fn write_csv(&self, rows_path: &Path, hist_path: &Path) -> Result<()> {
        self.write_rows_csv(rows_path)?;
        self.write_histogram_csv(hist_path)
    }

    /// Rows whose aggregate is one origin year of one business.
    pub fn origin_rows(&self) -> Comparison {
        Comparison {
            scale: self.scale,
            rows: self.rows.iter().filter(|r| r.aggregate.contains(";origin=")).cloned().collect(),
            histogram: Vec::new(),
        }
    }

    pub fn write_rows_csv(&self, rows_path: &Path) -> Result<()> {
        let has_truth = self.rows.iter().any(|r| r.truth.is_some());
        let mut out = String::from(
            "aggregate,dgm_median,odp_median,dgm_lo,dgm_hi,odp_lo,odp_hi,median_diff,width_diff",
        );
        if has_truth {
            out.push_str(",truth,dgm_covers,odp_covers");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.aggregate, r.dgm_median, r.odp_median, r.dgm_lo, r.dgm_hi, r.odp_lo, r.odp_hi, r.median_diff, r.width_diff
            );
            if has_truth {
                let flag = |b: Option<bool>| b.map_or(String::new(), |b| u8::from(b).to_string());
                let _ = write!(
                    out,
                    ",{},{},{}",
                    r.truth.map_or(String::new(), |t| t.to_string()),
                    flag(r.dgm_covers),
                    flag(r.odp_covers)
                );
            }
            out.push('\n');
        }
        std::fs::write(rows_path, out).map_err(|e| Error::io(rows_path, e))
    }

    pub fn write_histogram_csv(&self, hist_path: &Path) -> Result<()> {
        let mut h = String::from("aggregate,bin_lo,bin_hi,dgm_density,odp_density\n");
        for b in &self.histogram {
            let _ = writeln!(h, "{},{},{},{},{}", b.aggregate, b.lo, b.hi, b.dgm_density, b.odp_density);
        }
        std::fs::write(hist_path, h).map_err(|e| Error::io(hist_path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri(rows: &[&[f64]]) -> Vec<Vec<Option<f64>>> {
        let n = rows.len();
        rows.iter()
            .map(|r| (0..n).map(|j| r.get(j).copied()).collect())
            .collect()
    }

    #[test]
    fn two_by_two_by_hand() {
        // Cumulative rows {100 -> 150} and {120 -> .}
        let fit = chain_ladder(&tri(&[&[100.0, 50.0], &[120.0]])).unwrap();
        assert_eq!(fit.factors, vec![1.5]);
        assert_eq!(fit.reserves, vec![0.0, 60.0]);
        assert_eq!(fit.total_reserve, 60.0);
        assert_eq!(fit.fitted[1][1], 60.0);
    }

    #[test]
    fn degenerate_shapes_have_no_reserve() {
        let single = chain_ladder(&tri(&[&[42.0]])).unwrap();
        assert_eq!(single.total_reserve, 0.0);
        assert!(single.factors.is_empty());
    }

    #[test]
    fn fully_developed_square_has_no_reserve() {
        let fit = chain_ladder(&tri(&[&[10.0, 5.0, 1.0], &[12.0, 6.0, 2.0], &[9.0, 4.0, 1.0]])).unwrap();
        assert_eq!(fit.reserves, vec![0.0; 3]);
    }

    #[test]
    fn gaps_inside_a_row_are_rejected() {
        let t = vec![vec![Some(1.0), None, Some(1.0)], vec![Some(1.0), None, None], vec![Some(1.0), None, None]];
        assert!(chain_ladder(&t).is_err());
    }

    #[test]
    fn process_error_moments_per_cell() {
        let fit = chain_ladder(&tri(&[&[100.0, 60.0, 20.0], &[110.0, 50.0], &[90.0]])).unwrap();
        let phi = 3.0;
        let mut rng = stream(1, Purpose::Test, 0);
        let draws = 100_000;
        for i in 1..3 {
            for j in 3 - i..3 {
                let m = fit.fitted[i][j];
                let xs: Vec<f64> = (0..draws).map(|_| process_error(&mut rng, m, phi)).collect();
                let mean = xs.iter().sum::<f64>() / draws as f64;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
                let target_var = phi * m;
                let se_mean = (target_var / draws as f64).sqrt();
                let se_var = target_var * (2.0 / (draws - 1) as f64 + 6.0 * phi / m / draws as f64).sqrt();
                assert!((mean - m).abs() < 4.0 * se_mean, "cell ({i},{j}) mean {mean} vs {m}");
                assert!((var - target_var).abs() < 4.0 * se_var, "cell ({i},{j}) variance {var} vs {target_var}");
            }
        }
    }

    #[test]
    fn zero_column_is_an_error() {
        let e = chain_ladder(&tri(&[&[0.0, 1.0, 1.0], &[0.0, 2.0], &[3.0]])).unwrap_err();
        assert!(e.is_numerical());
    }

    #[test]
    fn fitted_row_sums_reproduce_latest_cumulative() {
        let t = tri(&[
            &[10.0, 6.0, 3.0, 1.0],
            &[12.0, 5.0, 4.0],
            &[9.0, 8.0],
            &[14.0],
        ]);
        let fit = chain_ladder(&t).unwrap();
        for i in 0..4 {
            let observed: f64 = (0..4 - i).map(|j| t[i][j].unwrap()).sum();
            let fitted: f64 = (0..4 - i).map(|j| fit.fitted[i][j]).sum();
            assert!((observed - fitted).abs() < 1e-9);
        }
    }

    #[test]
    fn scale_mismatch_is_rejected() {
        let a = ReserveDraws {
            scale: Scale::Original,
            series: vec![("total".into(), vec![1.0; 10])],
        };
        let b = ReserveDraws {
            scale: Scale::Transformed,
            ..a.clone()
        };
        assert!(compare_models(&a, &b, None).is_err());
    }

    #[test]
    fn self_comparison_has_zero_differences() {
        let a = ReserveDraws {
            scale: Scale::Original,
            series: vec![("total".into(), (1..=200).map(f64::from).collect())],
        };
        let c = compare_models(&a, &a, None).unwrap();
        assert_eq!(c.rows[0].median_diff, 0.0);
        assert_eq!(c.rows[0].width_diff, 0.0);
        assert!(c.rows[0].dgm_covers.is_none());
        assert!(c.histogram.iter().all(|b| b.dgm_density == b.odp_density));
    }
}
