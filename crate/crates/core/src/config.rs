//! Model and run configuration, and the flat `key = value` config file format.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{DiscreteConfig, SliceConfig};
use crate::par::Execution;
use crate::triangle::TransformSpec;

/// Constants of the hierarchical prior: every shape and rate hyperparameter
/// of a group is `Ga(shape0, rate0)` distributed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior {
    pub shape0: f64,
    pub rate0: f64,
}

impl HyperPrior {
    pub const fn new(shape0: f64, rate0: f64) -> Self {
        HyperPrior { shape0, rate0 }
    }

    pub fn mean(&self) -> f64 {
        self.shape0 / self.rate0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Dependence order across development years.
    pub p: usize,
    pub alpha_prior: HyperPrior,
    pub beta_prior: HyperPrior,
    pub gamma_prior: HyperPrior,
    pub transform: TransformSpec,
    /// Pins every gamma at zero, giving the independent gamma model.
    pub gamma_fixed_zero: bool,
    /// Value substituted for observed zeros on the model scale.
    pub zero_floor: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            p: 1,
            alpha_prior: HyperPrior::new(2.0, 1.0),
            beta_prior: HyperPrior::new(2.0, 2.0),
            gamma_prior: HyperPrior::new(3.0, 1.0),
            transform: TransformSpec::default(),
            gamma_fixed_zero: false,
            zero_floor: 1e-6,
        }
    }
}

impl ModelSpec {
    pub fn with_p(mut self, p: usize) -> Self {
        self.p = p;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.p >= n {
            return Err(Error::InvalidSpec(format!(
                "dependence order p={} must be smaller than the triangle depth n={n}",
                self.p
            )));
        }
        for (name, h) in [
            ("alpha", self.alpha_prior),
            ("beta", self.beta_prior),
            ("gamma", self.gamma_prior),
        ] {
            if !(h.shape0 > 0.0 && h.rate0 > 0.0 && h.shape0.is_finite() && h.rate0.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "{name} hyperprior constants must be positive, got ({}, {})",
                    h.shape0, h.rate0
                )));
            }
        }
        if !(self.zero_floor > 0.0) {
            return Err(Error::InvalidSpec("zero floor must be positive".into()));
        }
        self.transform.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub chains: usize,
    pub burn_in: usize,
    pub keep: usize,
    pub thin: usize,
    pub seed: u64,
    pub slice: SliceConfig,
    pub discrete: DiscreteConfig,
    pub execution: Execution,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            chains: 2,
            burn_in: 10_000,
            keep: 10_000,
            thin: 1,
            seed: 42,
            slice: SliceConfig::default(),
            discrete: DiscreteConfig::default(),
            execution: Execution::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.keep == 0 || self.thin == 0 {
            return Err(Error::InvalidSpec(
                "chains, keep and thin must all be at least 1".into(),
            ));
        }
        if !(self.slice.width > 0.0) {
            return Err(Error::InvalidSpec("slice width must be positive".into()));
        }
        if !(self.discrete.tail_tol > 0.0 && self.discrete.tail_tol < 1.0) {
            return Err(Error::InvalidSpec("tail_tol must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Model grid: dependence orders crossed with `a0 = b0` values for the alpha
/// and beta hyperpriors, gamma hyperprior held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub p_values: Vec<usize>,
    pub alpha0_values: Vec<f64>,
    pub beta0_values: Vec<f64>,
    pub gamma0: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            p_values: (0..=5).collect(),
            alpha0_values: vec![1.0, 10.0],
            beta0_values: vec![1.0, 10.0],
            gamma0: 10.0,
        }
    }
}

/// Parameters for synthetic panels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub n: usize,
    pub businesses: usize,
    /// `K` values (constant over origin years) or `n * K` values, origin fastest.
    pub alpha: Vec<f64>,
    /// `n` values shared by every business or `n * K` values, development fastest.
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl SimulationSpec {
    /// Two businesses, four years, alpha = (1, 2), beta = 1, gamma = (1, 4, 6, 2), used with p = 1.
    pub fn small_reference() -> Self {
        SimulationSpec {
            n: 4,
            businesses: 2,
            alpha: vec![1.0, 2.0],
            beta: vec![1.0],
            gamma: vec![1.0, 4.0, 6.0, 2.0],
        }
    }
}

/// Parsed `key = value` configuration. Later `set` calls override file values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValueConfig {
    entries: BTreeMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "p",
    "a_alpha0",
    "b_alpha0",
    "a_beta0",
    "b_beta0",
    "a_gamma0",
    "b_gamma0",
    "gamma_fixed_zero",
    "zero_floor",
    "transform_enabled",
    "transform_divisor",
    "transform_power",
    "chains",
    "burn_in",
    "keep",
    "thin",
    "seed",
    "slice_width",
    "tail_tol",
    "execution",
    "grid_p",
    "grid_alpha0",
    "grid_beta0",
    "grid_gamma0",
    "sim_n",
    "sim_k",
    "sim_alpha",
    "sim_beta",
    "sim_gamma",
    "column_business",
    "column_origin",
    "column_dev",
    "column_value",
    "hpd_level",
    "var_levels",
    "bootstrap_resamples",
];

impl KeyValueConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = KeyValueConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                msg: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Parse {
                    line: n + 1,
                    msg: format!("unknown key '{key}'"),
                });
            }
            cfg.entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::InvalidSpec(format!("unknown key '{key}'")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    fn typed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::InvalidSpec(format!("cannot parse '{v}' for key '{key}'")))
            })
            .transpose()
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>().map_err(|_| {
                            Error::InvalidSpec(format!("cannot parse '{s}' in list '{key}'"))
                        })
                    })
                    .collect::<Result<Vec<T>>>()
            })
            .transpose()
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let mut m = ModelSpec::default();
        if let Some(p) = self.typed("p")? {
            m.p = p;
        }
        let set = |target: &mut f64, key: &str| -> Result<()> {
            if let Some(v) = self.typed(key)? {
                *target = v;
            }
            Ok(())
        };
        set(&mut m.alpha_prior.shape0, "a_alpha0")?;
        set(&mut m.alpha_prior.rate0, "b_alpha0")?;
        set(&mut m.beta_prior.shape0, "a_beta0")?;
        set(&mut m.beta_prior.rate0, "b_beta0")?;
        set(&mut m.gamma_prior.shape0, "a_gamma0")?;
        set(&mut m.gamma_prior.rate0, "b_gamma0")?;
        set(&mut m.zero_floor, "zero_floor")?;
        set(&mut m.transform.divisor, "transform_divisor")?;
        set(&mut m.transform.power, "transform_power")?;
        if let Some(v) = self.typed("transform_enabled")? {
            m.transform.enabled = v;
        }
        if let Some(v) = self.typed("gamma_fixed_zero")? {
            m.gamma_fixed_zero = v;
        }
        Ok(m)
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let mut r = RunConfig::default();
        if let Some(v) = self.typed("chains")? {
            r.chains = v;
        }
        if let Some(v) = self.typed("burn_in")? {
            r.burn_in = v;
        }
        if let Some(v) = self.typed("keep")? {
            r.keep = v;
        }
        if let Some(v) = self.typed("thin")? {
            r.thin = v;
        }
        if let Some(v) = self.typed("seed")? {
            r.seed = v;
        }
        if let Some(v) = self.typed("slice_width")? {
            r.slice.width = v;
        }
        if let Some(v) = self.typed("tail_tol")? {
            r.discrete.tail_tol = v;
        }
        if let Some(v) = self.get("execution") {
            r.execution = match v {
                "parallel" => Execution::Parallel,
                "sequential" => Execution::Sequential,
                other => {
                    return Err(Error::InvalidSpec(format!(
                        "execution must be 'parallel' or 'sequential', got '{other}'"
                    )))
                }
            };
        }
        r.validate()?;
        Ok(r)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let mut g = GridSpec::default();
        if let Some(v) = self.list("grid_p")? {
            g.p_values = v;
        }
        if let Some(v) = self.list("grid_alpha0")? {
            g.alpha0_values = v;
        }
        if let Some(v) = self.list("grid_beta0")? {
            g.beta0_values = v;
        }
        if let Some(v) = self.typed("grid_gamma0")? {
            g.gamma0 = v;
        }
        if g.p_values.is_empty() || g.alpha0_values.is_empty() || g.beta0_values.is_empty() {
            return Err(Error::InvalidSpec("model grid has an empty axis".into()));
        }
        Ok(g)
    }

    pub fn simulation_spec(&self) -> Result<Option<SimulationSpec>> {
        let Some(n) = self.typed::<usize>("sim_n")? else {
            return Ok(None);
        };
        let businesses = self.typed("sim_k")?.unwrap_or(1);
        let need = |key: &str| -> Result<Vec<f64>> {
            self.list(key)?
                .ok_or_else(|| Error::InvalidSpec(format!("simulation requires '{key}'")))
        };
        Ok(Some(SimulationSpec {
            n,
            businesses,
            alpha: need("sim_alpha")?,
            beta: need("sim_beta")?,
            gamma: need("sim_gamma")?,
        }))
    }

    pub fn column_schema(&self) -> crate::triangle::ColumnSchema {
        let mut s = crate::triangle::ColumnSchema::default();
        for (key, slot) in [
            ("column_business", &mut s.business),
            ("column_origin", &mut s.origin),
            ("column_dev", &mut s.dev),
            ("column_value", &mut s.value),
        ] {
            if let Some(v) = self.get(key) {
                *slot = v.to_string();
            }
        }
        s
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.typed(key)?.unwrap_or(default))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.typed(key)?.unwrap_or(default))
    }

    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        Ok(self.list(key)?.unwrap_or_else(|| default.to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let mut cfg = KeyValueConfig::parse(
            "# model\np = 2\na_alpha0 = 10 # inline\nb_alpha0=10\nseed = 7\ngrid_p = 0, 1, 2\n",
        )
        .unwrap();
        cfg.set("seed", 9).unwrap();
        let m = cfg.model_spec().unwrap();
        assert_eq!(m.p, 2);
        assert_eq!(m.alpha_prior, HyperPrior::new(10.0, 10.0));
        assert_eq!(cfg.run_config().unwrap().seed, 9);
        assert_eq!(cfg.grid_spec().unwrap().p_values, vec![0, 1, 2]);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lines() {
        assert!(KeyValueConfig::parse("bogus = 1").is_err());
        assert!(KeyValueConfig::parse("p 1").is_err());
        let cfg = KeyValueConfig::parse("thin = 0").unwrap();
        assert!(cfg.run_config().is_err());
    }

    #[test]
    fn model_spec_invariants() {
        let m = ModelSpec::default().with_p(4);
        assert!(m.validate(4).is_err());
        assert!(m.validate(5).is_ok());
        let mut bad = ModelSpec::default();
        bad.beta_prior.rate0 = 0.0;
        assert!(bad.validate(5).is_err());
    }
}
