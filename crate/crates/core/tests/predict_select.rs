mod common;

use common::{mean, reference_fixture, var};
use dgm_reserving::config::{GridSpec, HyperPrior, ModelSpec, RunConfig};
use dgm_reserving::dgm::{simulate_panel, DgmParams};
use dgm_reserving::gibbs::PosteriorSamples;
use dgm_reserving::predict::{
    expected_shortfall, predictive_draws, reserve_summary, summarize, truth_reserves, value_at_risk, PredictOptions,
    ReserveDraws, Scale,
};
use dgm_reserving::rng::{stream, Purpose};
use dgm_reserving::select::{dic, expand_grid, l_measure, l_measure_from_draws, model_grid_run, score_model, Cells};
use dgm_reserving::{run_chains, Execution, SimulationSpec, TrianglePanel};

fn run(burn_in: usize, keep: usize) -> RunConfig {
    RunConfig {
        burn_in,
        keep,
        ..RunConfig::default()
    }
}

fn opts(seed: u64) -> PredictOptions {
    PredictOptions {
        scale: Scale::Original,
        seed,
        execution: Execution::Parallel,
    }
}

#[test]
fn two_by_two_predictive_mean_matches_posterior_ratio() {
    let panel = TrianglePanel::from_upper(&[vec![vec![1.3, 0.7], vec![1.1]]]).unwrap();
    let spec = ModelSpec {
        p: 0,
        gamma_fixed_zero: true,
        ..ModelSpec::default()
    };
    let samples = run_chains(&panel, &spec, &run(1_000, 20_000)).unwrap();
    let pred = predictive_draws(&samples, &panel, &opts(1)).unwrap();
    assert_eq!(pred.cell_index, vec![(1, 1, 0)]);
    let ratio: Vec<f64> = samples.params_iter().map(|q| q.alpha(1, 0) / q.beta(1, 0)).collect();
    let se = (var(&pred.total) / pred.total.len() as f64).sqrt();
    assert!((mean(&pred.total) - mean(&ratio)).abs() < 3.0 * se);
}

#[test]
fn aggregation_identities_hold_per_draw() {
    let f = reference_fixture(2);
    let samples = run_chains(&f.panel, &ModelSpec::default(), &run(200, 200)).unwrap();
    let pred = predictive_draws(&samples, &f.panel, &opts(2)).unwrap();
    assert_eq!(pred.len(), 400);
    for m in 0..pred.len() {
        assert!(pred.cells[m].iter().all(|x| *x >= 0.0));
        for k in 0..2 {
            let by_origin: f64 = pred.origin[m][k * 4..(k + 1) * 4].iter().sum();
            assert_eq!(by_origin, pred.business[m][k]);
        }
        assert_eq!(pred.business[m].iter().sum::<f64>(), pred.total[m]);
        let by_cells: f64 = pred.cells[m].iter().sum();
        assert!((by_cells - pred.total[m]).abs() <= 1e-12 * pred.total[m].max(1.0));
    }
    let reserves = pred.reserve_draws();
    assert_eq!(reserves.get("total").unwrap(), pred.total.as_slice());
    assert_eq!(reserves.series.len(), 1 + 2 + 2 * 3);
}

#[test]
fn predictive_draws_are_seeded() {
    let f = reference_fixture(3);
    let samples = run_chains(&f.panel, &ModelSpec::default(), &run(50, 50)).unwrap();
    let a = predictive_draws(&samples, &f.panel, &opts(4)).unwrap();
    let b = predictive_draws(&samples, &f.panel, &PredictOptions { execution: Execution::Sequential, ..opts(4) }).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.total, predictive_draws(&samples, &f.panel, &opts(5)).unwrap().total);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let f = reference_fixture(4);
    let samples = run_chains(&f.panel, &ModelSpec::default(), &run(10, 10)).unwrap();
    let other = f.panel.select_businesses(&[0]).unwrap();
    assert!(predictive_draws(&samples, &other, &opts(1)).is_err());
}

#[test]
fn risk_measures_on_the_reference_grid() {
    let draws: Vec<f64> = (1..=1000).map(f64::from).collect();
    let s = summarize(&draws, &[0.9, 0.995], 0.95).unwrap();
    let (_, var995, es995) = s.tail[1];
    assert_eq!(var995, 995.0);
    assert_eq!(es995, 997.5);
    assert!(s.tail[0].1 <= var995);
    let mut sorted = draws.clone();
    sorted.sort_by(f64::total_cmp);
    assert_eq!(value_at_risk(&sorted, 0.995), 995.0);
    assert_eq!(expected_shortfall(&sorted, 0.995), 997.5);
    let constant = summarize(&[3.5; 200], &[0.995], 0.95).unwrap();
    assert_eq!((constant.median, constant.mean, constant.hpd_lo, constant.hpd_hi), (3.5, 3.5, 3.5, 3.5));
    assert!(summarize(&draws[..99], &[0.995], 0.95).is_err());
}

#[test]
fn reserve_files_round_trip() {
    let rd = ReserveDraws {
        scale: Scale::Transformed,
        series: vec![("total".into(), (0..150).map(f64::from).collect()), ("business=7".into(), vec![2.5; 150])],
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reserves.csv");
    rd.write_csv(&path, &serde_json::json!({"seed": 1})).unwrap();
    assert_eq!(ReserveDraws::read_csv(&path).unwrap(), rd);
    let summary = reserve_summary(&rd, &[0.995], 0.95).unwrap();
    assert_eq!(summary.get("business=7").unwrap().median, 2.5);
}

#[test]
fn dic_of_a_constant_chain_is_the_plugin_deviance() {
    let f = reference_fixture(5);
    let mut samples = run_chains(&f.panel, &ModelSpec::default(), &run(20, 5)).unwrap();
    let first = samples.chains[0].draws[0].clone();
    let dev = samples.chains[0].deviance[0];
    for c in &mut samples.chains {
        c.draws.iter_mut().for_each(|d| *d = first.clone());
        c.deviance.iter_mut().for_each(|d| *d = dev);
    }
    let d = dic(&samples, &f.panel).unwrap();
    assert!(d.p_d.abs() < 1e-9 * dev.abs());
    assert!((d.dic - dev).abs() < 1e-9 * dev.abs());
}

#[test]
fn dic_is_stable_under_thinning() {
    let f = reference_fixture(6);
    let spec = ModelSpec::default();
    let thin1 = run_chains(&f.panel, &spec, &run(10_000, 100_000)).unwrap();
    let thin10 = run_chains(&f.panel, &spec, &RunConfig { thin: 10, seed: 7, ..run(10_000, 10_000) }).unwrap();
    let (a, b) = (dic(&thin1, &f.panel).unwrap().dic, dic(&thin10, &f.panel).unwrap().dic);
    assert!((a - b).abs() / a.abs() < 0.01, "DIC {a} vs {b}");
}

#[test]
fn l_measure_degenerate_and_missing_truth() {
    let l = l_measure_from_draws(&[vec![1.0, 3.0]], &[0.0, 1.0]);
    assert_eq!(l.variance_term, 0.0);
    assert_eq!(l.value(0.5), 0.5 * (1.0 + 4.0) / 2.0);
    let f = reference_fixture(7);
    let samples = run_chains(&f.panel, &ModelSpec::default(), &run(20, 20)).unwrap();
    assert!(l_measure(&samples, &f.panel, Cells::OutOfSample, 1, Execution::Parallel).is_err());
    let l_in = l_measure(&samples, &f.panel, Cells::InSample, 1, Execution::Parallel).unwrap();
    assert_eq!(l_in.cells, 2 * 4 * 5 / 2);
}

fn small_grid() -> GridSpec {
    GridSpec {
        p_values: vec![0, 1],
        alpha0_values: vec![1.0, 10.0],
        beta0_values: vec![1.0, 10.0],
        gamma0: 10.0,
    }
}

#[test]
fn grid_rows_are_deterministic_and_compose() {
    let truth = DgmParams::from_simulation(&SimulationSpec::small_reference()).unwrap();
    let mut rng = stream(8, Purpose::Simulation, 0);
    let full = simulate_panel(&truth, 1, &mut rng).panel;
    let specs = expand_grid(&small_grid(), &ModelSpec::default());
    assert_eq!(specs.len(), 8);
    assert_eq!(specs[1].p, 1);
    assert_eq!(specs[2].alpha_prior, HyperPrior::new(10.0, 10.0));
    assert_eq!(specs[4].beta_prior, HyperPrior::new(10.0, 10.0));
    let r = run(100, 100);
    let rows = model_grid_run(&full, &[specs[1], specs[1]], &r);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].dic, rows[1].dic);
    assert_eq!(rows[0].l_out, rows[1].l_out);
    let (d, l_in, l_out) = score_model(&full, &specs[1], &r).unwrap();
    assert_eq!(rows[0].dic, Some(d));
    assert_eq!(rows[0].l_in, Some(l_in));
    assert_eq!(rows[0].l_out, l_out);
}

#[test]
fn grid_failures_are_recorded_per_row() {
    let f = reference_fixture(9);
    let bad = ModelSpec::default().with_p(7);
    let rows = model_grid_run(&f.panel, &[bad, ModelSpec::default()], &run(20, 20));
    assert!(rows[0].error.is_some() && rows[0].dic.is_none());
    assert!(rows[1].error.is_none() && rows[1].dic.is_some());
}

#[test]
fn origin_reserve_intervals_cover_truth() {
    let truth = DgmParams::from_simulation(&SimulationSpec::small_reference()).unwrap();
    let (mut covered, mut total) = (0, 0);
    for r in 0..20u64 {
        let mut rng = stream(10, Purpose::Simulation, r);
        let full = simulate_panel(&truth, 1, &mut rng).panel;
        let samples = run_chains(&full.without_truth(), &ModelSpec::default(), &RunConfig { seed: r, ..run(2_000, 2_000) }).unwrap();
        let reserves = predictive_draws(&samples, &full, &opts(r)).unwrap().reserve_draws();
        for (name, value) in truth_reserves(&full, Scale::Original).unwrap() {
            if !name.contains("origin=") {
                continue;
            }
            let mut s = reserves.get(&name).unwrap().to_vec();
            s.sort_by(f64::total_cmp);
            let lo = dgm_reserving::kernel::quantile_sorted(&s, 0.025);
            let hi = dgm_reserving::kernel::quantile_sorted(&s, 0.975);
            covered += usize::from(lo <= value && value <= hi);
            total += 1;
        }
    }
    assert!(covered as f64 / total as f64 >= 0.85, "{covered}/{total}");
}

#[test]
fn samples_dimensions_are_recorded() {
    let f = reference_fixture(11);
    let s: PosteriorSamples = run_chains(&f.panel, &ModelSpec::default(), &run(5, 5)).unwrap();
    assert_eq!((s.n, s.businesses, s.total_draws()), (4, 2, 10));
}
