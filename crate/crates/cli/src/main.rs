use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use dgm_reserving::dgm::{identifiable_params, simulate_panel, DgmParams};
use dgm_reserving::gibbs::{identifiable_summary, PosteriorSamples};
use dgm_reserving::kernel::ChainSummary;
use dgm_reserving::odp::{compare_models, odp_panel};
use dgm_reserving::predict::{predictive_draws, reserve_summary, truth_reserves, PredictOptions, ReserveDraws, Scale};
use dgm_reserving::rng::{stream, Purpose};
use dgm_reserving::select::{dic, expand_grid, model_grid_run, write_grid_csv};
use dgm_reserving::triangle::{apply_transform, floor_zeros, load_panel};
use dgm_reserving::{run_chains, KeyValueConfig, ModelSpec, SimulationSpec, TrianglePanel};

/// Bayesian dependent gamma model for multiple run-off triangles.
#[derive(Parser)]
#[command(name = "dgm-reserve", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a panel from the model.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Named parameter preset.
        #[arg(long, value_parser = ["paper-4.1"])]
        preset: Option<String>,
    },
    /// Fit the model and store posterior draws.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Draw the lower triangle from a stored fit.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Directory written by `fit`.
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, default_value = "original")]
        scale: Scale,
    },
    /// Summarise reserve draws (quantiles, HPD, VaR, ES).
    Reserves {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        reserves: PathBuf,
    },
    /// Fit and score every model of the configured grid.
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Chain-ladder and ODP bootstrap per business, on the money scale.
    Odp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        resamples: Option<usize>,
    },
    /// Compare DGM and ODP reserve draws.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dgm: PathBuf,
        #[arg(long)]
        odp: PathBuf,
        /// Realised reserves (`aggregate,value`).
        #[arg(long, conflicts_with = "data")]
        truth: Option<PathBuf>,
        /// Panel carrying held-out lower-triangle truth.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Convergence table for a stored fit. Never writes into the samples directory.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: PathBuf,
        /// Panel used for the fit; adds DIC to the report.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long = "burn-in")]
    burn_in: Option<usize>,
    #[arg(long)]
    keep: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Worker thread cap; 1 runs everything sequentially.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn resolve(&self, preset: Option<&str>) -> Result<KeyValueConfig> {
        let mut cfg = match &self.config {
            Some(path) => KeyValueConfig::load(path)?,
            None => KeyValueConfig::default(),
        };
        if preset == Some("paper-4.1") {
            let s = SimulationSpec::small_reference();
            let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
            for (key, value) in [
                ("sim_n", s.n.to_string()),
                ("sim_k", s.businesses.to_string()),
                ("sim_alpha", list(&s.alpha)),
                ("sim_beta", list(&s.beta)),
                ("sim_gamma", list(&s.gamma)),
                ("p", "1".into()),
            ] {
                cfg.set(key, value)?;
            }
        }
        let overrides = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("chains", self.chains.map(|v| v.to_string())),
            ("burn_in", self.burn_in.map(|v| v.to_string())),
            ("keep", self.keep.map(|v| v.to_string())),
            ("thin", self.thin.map(|v| v.to_string())),
            ("p", self.p.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if let Some(t) = self.threads {
            if t == 0 {
                bail!(dgm_reserving::Error::InvalidSpec("--threads must be at least 1".into()));
            }
            if t == 1 {
                cfg.set("execution", "sequential")?;
            }
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new().num_threads(t).build_global().ok();
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path> {
        let dir = self
            .out
            .as_deref()
            .ok_or_else(|| dgm_reserving::Error::InvalidSpec("--out is required for this command".into()))?;
        fs::create_dir_all(dir).map_err(|e| dgm_reserving::Error::io(dir, e))?;
        Ok(dir)
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| dgm_reserving::Error::io(path, e))?;
    Ok(())
}

fn write_manifest(dir: &Path, command: &str, cfg: &KeyValueConfig) -> Result<()> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let run = cfg.run_config()?;
    let manifest = json!({
        "command": command,
        "arguments": std::env::args().skip(1).collect::<Vec<_>>(),
        "config": cfg.entries(),
        "seed": run.seed,
        "execution": run.execution,
        "versions": {
            "dgm-reserve": env!("CARGO_PKG_VERSION"),
        },
        "started_unix": started,
    });
    let path = dir.join("manifest.json");
    write_file(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Loads a panel and brings it to the model scale of `spec`.
fn model_panel(path: &Path, cfg: &KeyValueConfig, spec: &ModelSpec) -> Result<TrianglePanel> {
    let raw = load_panel(path, &cfg.column_schema())?;
    let mut panel = if spec.transform.enabled {
        apply_transform(&raw, &spec.transform)?
    } else {
        raw
    };
    let floored = floor_zeros(&mut panel, spec.zero_floor);
    if floored > 0 {
        eprintln!("replaced {floored} zero cells by {}", spec.zero_floor);
    }
    Ok(panel)
}

fn write_truth(path: &Path, truth: &[(String, f64)]) -> Result<()> {
    let mut out = String::from("aggregate,value\n");
    for (name, v) in truth {
        let _ = writeln!(out, "{name},{v}");
    }
    write_file(path, out)?;
    Ok(())
}

fn read_truth(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut reader = csv::Reader::from_path(path).map_err(dgm_reserving::Error::from)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(dgm_reserving::Error::from)?;
        let value = record
            .get(1)
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| dgm_reserving::Error::InvalidSpec(format!("malformed truth row in {}", path.display())))?;
        out.push((record.get(0).unwrap_or_default().to_string(), value));
    }
    Ok(out)
}

fn write_summary(path: &Path, summary: &ChainSummary) -> Result<()> {
    let mut out = String::from("parameter,mean,median,sd,hpd_lo,hpd_hi,hpd_level,psrf\n");
    for s in &summary.params {
        let psrf = s.psrf.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{psrf}",
            s.name, s.mean, s.median, s.sd, s.hpd_lo, s.hpd_hi, s.hpd_level
        );
    }
    write_file(path, out)?;
    Ok(())
}

fn simulate(common: &Common, preset: Option<&str>) -> Result<()> {
    let cfg = common.resolve(preset)?;
    let out = common.out_dir()?;
    write_manifest(out, "simulate", &cfg)?;
    let sim = cfg
        .simulation_spec()?
        .ok_or_else(|| dgm_reserving::Error::InvalidSpec("simulate needs --preset or sim_* keys in --config".into()))?;
    let spec = cfg.model_spec()?;
    spec.validate(sim.n)?;
    let params = DgmParams::from_simulation(&sim)?;
    let seed = cfg.run_config()?.seed;
    let mut rng = stream(seed, Purpose::Simulation, 0);
    let drawn = simulate_panel(&params, spec.p, &mut rng);
    drawn.panel.write_csv(&out.join("panel.csv"), false)?;
    drawn.panel.write_csv(&out.join("full.csv"), true)?;
    let truth = truth_reserves(&drawn.panel, Scale::Original).expect("simulated squares are complete");
    write_truth(&out.join("truth_reserves.csv"), &truth)?;
    let report = identifiable_params(&params, spec.p);
    let path = out.join("truth_params.json");
    write_file(&path, serde_json::to_string_pretty(&report)?)?;
    println!("simulated n={} K={} p={} into {}", sim.n, sim.businesses, spec.p, out.display());
    Ok(())
}

fn fit(common: &Common, data: &Path) -> Result<()> {
    let cfg = common.resolve(None)?;
    let out = common.out_dir()?;
    write_manifest(out, "fit", &cfg)?;
    let spec = cfg.model_spec()?;
    let run = cfg.run_config()?;
    let panel = model_panel(data, &cfg, &spec)?.without_truth();
    let samples = run_chains(&panel, &spec, &run)?;
    samples.save(&out.join("samples"))?;
    let level = cfg.f64_or("hpd_level", 0.95)?;
    let summary = identifiable_summary(&samples, level)?;
    write_summary(&out.join("summary.csv"), &summary)?;
    let valid = samples.draws().all(|d| d.to_params(samples.n, samples.businesses).is_valid());
    let d = dic(&samples, &panel)?;
    let diagnostics = json!({
        "chains": samples.chains.len(),
        "draws_per_chain": samples.chains.iter().map(|c| c.draws.len()).collect::<Vec<_>>(),
        "max_psrf": summary.max_psrf(),
        "draws_satisfy_invariants": valid,
        "dic": d,
        "wall_time_secs": samples.wall_time_secs,
    });
    let path = out.join("diagnostics.json");
    write_file(&path, serde_json::to_string_pretty(&diagnostics)?)?;
    match summary.max_psrf() {
        Some(r) => println!("fit complete: {} draws, max psrf {r:.4}, DIC {:.3}", samples.total_draws(), d.dic),
        None => println!("fit complete: {} draws, DIC {:.3}", samples.total_draws(), d.dic),
    }
    Ok(())
}

fn predict(common: &Common, data: &Path, samples_dir: &Path, scale: Scale) -> Result<()> {
    let cfg = common.resolve(None)?;
    let out = common.out_dir()?;
    write_manifest(out, "predict", &cfg)?;
    let samples = PosteriorSamples::load(samples_dir)?;
    let panel = model_panel(data, &cfg, &samples.spec)?;
    let run = cfg.run_config()?;
    let opts = PredictOptions {
        scale,
        seed: run.seed,
        execution: run.execution,
    };
    let draws = predictive_draws(&samples, &panel, &opts)?;
    draws.write_cells_csv(&out.join("predictive_cells.csv"))?;
    let meta = json!({ "seed": run.seed, "samples": samples_dir, "model": samples.spec });
    draws.reserve_draws().write_csv(&out.join("reserves.csv"), &meta)?;
    if let Some(truth) = truth_reserves(&panel, draws.scale) {
        write_truth(&out.join("truth_reserves.csv"), &truth)?;
    }
    println!("{} predictive draws on the {} scale", draws.len(), draws.scale);
    Ok(())
}

fn reserves(common: &Common, path: &Path) -> Result<()> {
    let cfg = common.resolve(None)?;
    let out = common.out_dir()?;
    write_manifest(out, "reserves", &cfg)?;
    let draws = ReserveDraws::read_csv(path)?;
    let levels = cfg.f64_list_or("var_levels", &[0.995])?;
    let summary = reserve_summary(&draws, &levels, cfg.f64_or("hpd_level", 0.95)?)?;
    summary.write_csv(&out.join("reserve_summary.csv"), &json!({ "source": path }))?;
    if let Some(total) = summary.get("total") {
        println!("total reserve median {:.4}, 95% interval [{:.4}, {:.4}]", total.median, total.ci_lo, total.ci_hi);
    }
    Ok(())
}

fn select(common: &Common, data: &Path) -> Result<()> {
    let cfg = common.resolve(None)?;
    let out = common.out_dir()?;
    write_manifest(out, "select", &cfg)?;
    let base = cfg.model_spec()?;
    let grid = expand_grid(&cfg.grid_spec()?, &base);
    let panel = model_panel(data, &cfg, &base)?;
    let rows = model_grid_run(&panel, &grid, &cfg.run_config()?);
    write_grid_csv(&rows, &out.join("grid.csv"))?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    println!("scored {} models ({failed} failed)", rows.len());
    Ok(())
}

fn odp(common: &Common, data: &Path, resamples: Option<usize>) -> Result<()> {
    let cfg = common.resolve(None)?;
    let out = common.out_dir()?;
    write_manifest(out, "odp", &cfg)?;
    let panel = load_panel(data, &cfg.column_schema())?.without_truth();
    let resamples = match resamples {
        Some(b) => b,
        None => cfg.usize_or("bootstrap_resamples", 10_000)?,
    };
    let run = cfg.run_config()?;
    let (draws, fits) = odp_panel(&panel, resamples, run.seed, run.execution)?;
    let meta = json!({
        "seed": run.seed,
        "resamples": resamples,
        "factors": "volume-weighted",
        "residuals": "Pearson, scaled by sqrt(N / (N - 2n + 1))",
        "process_error": "gamma with mean m and variance phi m",
    });
    draws.write_csv(&out.join("odp_reserves.csv"), &meta)?;
    let path = out.join("chain_ladder.json");
    write_file(&path, serde_json::to_string_pretty(&fits)?)?;
    let total: f64 = fits.iter().map(|f| f.total_reserve).sum();
    println!("chain-ladder total reserve {total:.4}; {resamples} bootstrap resamples");
    Ok(())
}

fn compare(common: &Common, dgm_path: &Path, odp_path: &Path, truth: Option<&Path>, data: Option<&Path>) -> Result<()> {
    let cfg = common.resolve(None)?;
    let out = common.out_dir()?;
    write_manifest(out, "compare", &cfg)?;
    let dgm_draws = ReserveDraws::read_csv(dgm_path)?;
    let odp_draws = ReserveDraws::read_csv(odp_path)?;
    let truth = match (truth, data) {
        (Some(path), _) => Some(read_truth(path)?),
        (None, Some(path)) => {
            let panel = load_panel(path, &cfg.column_schema())?;
            Some(truth_reserves(&panel, Scale::Original).ok_or_else(|| {
                dgm_reserving::Error::InvalidSpec(format!("{} lacks held-out truth for the lower triangle", path.display()))
            })?)
        }
        (None, None) => None,
    };
    let comparison = compare_models(&dgm_draws, &odp_draws, truth.as_deref())?;
    comparison.write_csv(&out.join("comparison.csv"), &out.join("histogram.csv"))?;
    comparison.origin_rows().write_rows_csv(&out.join("comparison_origin.csv"))?;
    println!("compared {} aggregates", comparison.rows.len());
    Ok(())
}

fn diagnose(common: &Common, samples_dir: &Path, data: Option<&Path>) -> Result<()> {
    let cfg = common.resolve(None)?;
    let samples = PosteriorSamples::load(samples_dir)?;
    let level = cfg.f64_or("hpd_level", 0.95)?;
    let summary = identifiable_summary(&samples, level)?;
    println!("{:<20} {:>12} {:>12} {:>12} {:>8}", "parameter", "mean", "hpd_lo", "hpd_hi", "psrf");
    for s in &summary.params {
        let psrf = s.psrf.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!("{:<20} {:>12.5} {:>12.5} {:>12.5} {:>8}", s.name, s.mean, s.hpd_lo, s.hpd_hi, psrf);
    }
    let dic_report = match data {
        Some(path) => {
            let panel = model_panel(path, &cfg, &samples.spec)?.without_truth();
            let d = dic(&samples, &panel)?;
            println!("DIC {:.4} (mean deviance {:.4}, pD {:.4})", d.dic, d.mean_deviance, d.p_d);
            Some(d)
        }
        None => None,
    };
    if common.out.is_some() {
        let out = common.out_dir()?;
        if out.canonicalize().ok() == samples_dir.canonicalize().ok() {
            bail!(dgm_reserving::Error::InvalidSpec("diagnose must not write into the samples directory".into()));
        }
        write_manifest(out, "diagnose", &cfg)?;
        write_summary(&out.join("summary.csv"), &summary)?;
        if let Some(d) = dic_report {
            let path = out.join("dic.json");
            write_file(&path, serde_json::to_string_pretty(&d)?)?;
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { common, preset } => simulate(common, preset.as_deref()),
        Command::Fit { common, data } => fit(common, data),
        Command::Predict { common, data, samples, scale } => predict(common, data, samples, *scale),
        Command::Reserves { common, reserves: path } => reserves(common, path),
        Command::Select { common, data } => select(common, data),
        Command::Odp { common, data, resamples } => odp(common, data, *resamples),
        Command::Compare { common, dgm, odp, truth, data } => {
            compare(common, dgm, odp, truth.as_deref(), data.as_deref())
        }
        Command::Diagnose { common, samples, data } => diagnose(common, samples, data.as_deref()),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<dgm_reserving::Error>())
        .any(dgm_reserving::Error::is_numerical);
    if numerical {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli).context("dgm-reserve failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            match err.chain().nth(1) {
                Some(cause) => eprintln!("error: {cause}"),
                None => eprintln!("error: {err}"),
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
