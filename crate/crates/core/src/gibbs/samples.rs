//! Stored posterior draws and their on-disk layout.
//!
//! A samples directory holds one long-format CSV per parameter block
//! (`chain,draw,index,value`, one-based indices joined by `:`), a
//! `deviance.csv` and a `meta.json` describing the model and run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ModelSpec, RunConfig};
use crate::dgm::{identifiable_params, DgmParams, Hyper};
use crate::error::{Error, Result};
use crate::gibbs::conditionals::ModelData;
use crate::kernel::summary::{mean, ChainSummary, ParamSummary};

/// Observed cells of a calibration panel in storage order.
pub fn calibration_cells(n: usize, businesses: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..businesses).flat_map(move |k| (0..n).flat_map(move |i| (0..n - i).map(move |j| (i, j, k))))
}

/// One kept state. Latent counts are stored for calibration cells only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub z: Vec<u32>,
    pub hyper: Hyper,
}

impl Draw {
    pub fn capture(params: &DgmParams, data: &ModelData) -> Self {
        let z = calibration_cells(data.n(), data.businesses())
            .map(|(i, j, k)| params.z(i, j as isize, k) as u32)
            .collect();
        Draw {
            alpha: params.alpha.clone(),
            beta: params.beta.clone(),
            gamma: params.gamma.clone(),
            z,
            hyper: params.hyper.clone(),
        }
    }

    pub fn to_params(&self, n: usize, businesses: usize) -> DgmParams {
        let split = |v: &[f64]| v.chunks(n).map(<[f64]>::to_vec).collect::<Vec<_>>();
        let mut params = DgmParams::new(split(&self.alpha), split(&self.beta), split(&self.gamma), self.hyper.clone())
            .expect("stored draws satisfy the positivity invariants");
        for ((i, j, k), z) in calibration_cells(n, businesses).zip(&self.z) {
            params.set_z(i, j, k, u64::from(*z));
        }
        params
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainSamples {
    pub draws: Vec<Draw>,
    pub deviance: Vec<f64>,
}

impl ChainSamples {
    pub fn with_capacity(cap: usize) -> Self {
        ChainSamples {
            draws: Vec::with_capacity(cap),
            deviance: Vec::with_capacity(cap),
        }
    }

    pub fn push(&mut self, draw: Draw, deviance: f64) {
        self.draws.push(draw);
        self.deviance.push(deviance);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub n: usize,
    pub businesses: usize,
    pub spec: ModelSpec,
    pub run: RunConfig,
    pub chains: Vec<ChainSamples>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    n: usize,
    businesses: usize,
    chains: usize,
    draws_per_chain: usize,
    spec: ModelSpec,
    run: RunConfig,
    seed: u64,
    deviance_mean: f64,
    deviance_min: f64,
    deviance_max: f64,
}

impl PosteriorSamples {
    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.draws.len()).sum()
    }

    /// All draws, chain by chain.
    pub fn draws(&self) -> impl Iterator<Item = &Draw> {
        self.chains.iter().flat_map(|c| c.draws.iter())
    }

    pub fn params_iter(&self) -> impl Iterator<Item = DgmParams> + '_ {
        self.draws().map(|d| d.to_params(self.n, self.businesses))
    }

    pub fn deviances(&self) -> impl Iterator<Item = f64> + '_ {
        self.chains.iter().flat_map(|c| c.deviance.iter().copied())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (n, kk) = (self.n, self.businesses);
        let mut blocks: BTreeMap<&str, String> = BTreeMap::new();
        for name in ["alpha", "beta", "gamma", "z", "hyper"] {
            blocks.insert(name, "chain,draw,index,value\n".to_string());
        }
        let mut dev = String::from("chain,draw,value\n");
        for (c, chain) in self.chains.iter().enumerate() {
            for (d, draw) in chain.draws.iter().enumerate() {
                let (c1, d1) = (c + 1, d + 1);
                for (name, vals) in [("alpha", &draw.alpha), ("beta", &draw.beta), ("gamma", &draw.gamma)] {
                    let out = blocks.get_mut(name).expect("block");
                    for k in 0..kk {
                        for idx in 0..n {
                            let _ = writeln!(out, "{c1},{d1},{}:{},{}", idx + 1, k + 1, vals[k * n + idx]);
                        }
                    }
                }
                let out = blocks.get_mut("z").expect("block");
                for ((i, j, k), z) in calibration_cells(n, kk).zip(&draw.z) {
                    let _ = writeln!(out, "{c1},{d1},{}:{}:{},{z}", i + 1, j + 1, k + 1);
                }
                let out = blocks.get_mut("hyper").expect("block");
                let h = &draw.hyper;
                for (name, vals) in [
                    ("a_alpha", &h.a_alpha),
                    ("b_alpha", &h.b_alpha),
                    ("a_beta", &h.a_beta),
                    ("b_beta", &h.b_beta),
                    ("a_gamma", &h.a_gamma),
                    ("b_gamma", &h.b_gamma),
                ] {
                    for (idx, v) in vals.iter().enumerate() {
                        let _ = writeln!(out, "{c1},{d1},{name}:{},{v}", idx + 1);
                    }
                }
                let _ = writeln!(dev, "{c1},{d1},{}", chain.deviance[d]);
            }
        }
        for (name, text) in blocks {
            let path = dir.join(format!("{name}.csv"));
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("deviance.csv");
        std::fs::write(&path, dev).map_err(|e| Error::io(&path, e))?;

        let devs: Vec<f64> = self.deviances().collect();
        let meta = Meta {
            n,
            businesses: kk,
            chains: self.chains.len(),
            draws_per_chain: self.chains.first().map_or(0, |c| c.draws.len()),
            spec: self.spec,
            run: self.run,
            seed: self.run.seed,
            deviance_mean: if devs.is_empty() { f64::NAN } else { mean(&devs) },
            deviance_min: devs.iter().copied().fold(f64::INFINITY, f64::min),
            deviance_max: devs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        let path = dir.join("meta.json");
        std::fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("meta.json");
        let meta: Meta = serde_json::from_str(&std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?)?;
        let (n, kk) = (meta.n, meta.businesses);
        let obs = n * (n + 1) / 2 * kk;
        let blank = Draw {
            alpha: vec![0.0; n * kk],
            beta: vec![0.0; n * kk],
            gamma: vec![0.0; n * kk],
            z: vec![0; obs],
            hyper: Hyper::constant(n, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        };
        let mut chains: Vec<ChainSamples> = (0..meta.chains)
            .map(|_| ChainSamples {
                draws: vec![blank.clone(); meta.draws_per_chain],
                deviance: vec![0.0; meta.draws_per_chain],
            })
            .collect();
        let z_pos: BTreeMap<(usize, usize, usize), usize> =
            calibration_cells(n, kk).enumerate().map(|(pos, cell)| (cell, pos)).collect();

        let read = |name: &str| -> Result<Vec<(usize, usize, String, String)>> {
            let path = dir.join(format!("{name}.csv"));
            let mut rdr = csv::Reader::from_path(&path)?;
            let mut rows = Vec::new();
            for (line, rec) in rdr.records().enumerate() {
                let rec = rec?;
                let bad = || Error::Parse {
                    line: line + 2,
                    msg: format!("malformed row in {name}.csv"),
                };
                let chain: usize = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
                let draw: usize = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
                if chain == 0 || chain > meta.chains || draw == 0 || draw > meta.draws_per_chain {
                    return Err(bad());
                }
                let (index, value) = if rec.len() == 4 {
                    (rec[2].to_string(), rec[3].to_string())
                } else {
                    (String::new(), rec.get(2).ok_or_else(bad)?.to_string())
                };
                rows.push((chain - 1, draw - 1, index, value));
            }
            Ok(rows)
        };
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Parse { line: 0, msg: format!("bad number '{s}'") })
        };
        let parts = |s: &str| -> Result<Vec<usize>> {
            s.split(':')
                .map(|t| t.parse::<usize>().map_err(|_| Error::Parse { line: 0, msg: format!("bad index '{s}'") }))
                .collect()
        };
        for name in ["alpha", "beta", "gamma"] {
            for (c, d, index, value) in read(name)? {
                let ix = parts(&index)?;
                if ix.len() != 2 || ix[0] == 0 || ix[0] > n || ix[1] == 0 || ix[1] > kk {
                    return Err(Error::Parse { line: 0, msg: format!("index '{index}' out of range in {name}.csv") });
                }
                let draw = &mut chains[c].draws[d];
                let slot = match name {
                    "alpha" => &mut draw.alpha,
                    "beta" => &mut draw.beta,
                    _ => &mut draw.gamma,
                };
                slot[(ix[1] - 1) * n + ix[0] - 1] = num(&value)?;
            }
        }
        for (c, d, index, value) in read("z")? {
            let ix = parts(&index)?;
            let pos = (ix.len() == 3)
                .then(|| z_pos.get(&(ix[0].wrapping_sub(1), ix[1].wrapping_sub(1), ix[2].wrapping_sub(1))))
                .flatten()
                .ok_or_else(|| Error::Parse { line: 0, msg: format!("z index '{index}' is not a calibration cell") })?;
            chains[c].draws[d].z[*pos] = value
                .parse()
                .map_err(|_| Error::Parse { line: 0, msg: format!("bad count '{value}'") })?;
        }
        for (c, d, index, value) in read("hyper")? {
            let (name, idx) = index
                .split_once(':')
                .ok_or_else(|| Error::Parse { line: 0, msg: format!("bad hyper index '{index}'") })?;
            let idx: usize = idx
                .parse()
                .ok()
                .filter(|v| *v >= 1 && *v <= n)
                .ok_or_else(|| Error::Parse { line: 0, msg: format!("bad hyper index '{index}'") })?;
            let h = &mut chains[c].draws[d].hyper;
            let slot = match name {
                "a_alpha" => &mut h.a_alpha,
                "b_alpha" => &mut h.b_alpha,
                "a_beta" => &mut h.a_beta,
                "b_beta" => &mut h.b_beta,
                "a_gamma" => &mut h.a_gamma,
                "b_gamma" => &mut h.b_gamma,
                _ => return Err(Error::Parse { line: 0, msg: format!("unknown hyperparameter '{name}'") }),
            };
            slot[idx - 1] = num(&value)?;
        }
        for (c, d, _, value) in read("deviance")? {
            chains[c].deviance[d] = num(&value)?;
        }
        Ok(PosteriorSamples {
            n,
            businesses: kk,
            spec: meta.spec,
            run: meta.run,
            chains,
            wall_time_secs: 0.0,
        })
    }
}

/// Posterior summaries of the identifiable quantities `alpha_star[i,k]`,
/// `pi_star[j,k]` and `rho[j,j+s,k]` (one-based names).
pub fn identifiable_summary(samples: &PosteriorSamples, level: f64) -> Result<ChainSummary> {
    let p = samples.spec.p;
    let mut series: BTreeMap<(u8, usize, usize, usize), (String, Vec<Vec<f64>>)> = BTreeMap::new();
    let chains = samples.chains.len();
    for (c, chain) in samples.chains.iter().enumerate() {
        for draw in &chain.draws {
            let params = draw.to_params(samples.n, samples.businesses);
            let r = identifiable_params(&params, p);
            let mut put = |key: (u8, usize, usize, usize), name: &dyn Fn() -> String, v: f64| {
                series
                    .entry(key)
                    .or_insert_with(|| (name(), vec![Vec::new(); chains]))
                    .1[c]
                    .push(v);
            };
            for k in 0..samples.businesses {
                for i in 0..samples.n {
                    put((0, k, i, 0), &|| format!("alpha_star[{},{}]", i + 1, k + 1), r.alpha_star[k][i]);
                }
                for j in 0..samples.n {
                    put((1, k, j, 0), &|| format!("pi_star[{},{}]", j + 1, k + 1), r.pi_star[k][j]);
                }
                for (s_idx, lag) in r.corr[k].iter().enumerate() {
                    for (j, v) in lag.iter().enumerate() {
                        let s = s_idx + 1;
                        put((2, k, s, j), &|| format!("rho[{},{},{}]", j + 1, j + 1 + s, k + 1), *v);
                    }
                }
            }
        }
    }
    let params = series
        .into_values()
        .map(|(name, per_chain)| ParamSummary::from_chains(name, &per_chain, level))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChainSummary { params })
}
