use dgm_reserving::dgm::{dev_correlation, identifiable_params, DgmParams, Hyper};
use dgm_reserving::kernel::{hpd_interval, quantile_sorted};
use dgm_reserving::odp::chain_ladder;
use dgm_reserving::predict::{expected_shortfall, value_at_risk};
use dgm_reserving::TransformSpec;
use proptest::prelude::*;

fn positive(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..20.0, len)
}

proptest! {
    #[test]
    fn transform_round_trips(x in 0.0f64..1e9, divisor in 1.0f64..1e4, power in 0.1f64..2.0) {
        let t = TransformSpec { divisor, power, enabled: true };
        let y = t.forward(x).unwrap();
        prop_assert!((t.invert(y) - x).abs() <= 1e-9 * x.max(1.0));
    }

    #[test]
    fn development_proportions_sum_to_one(alpha in positive(5), beta in positive(5), gamma in positive(5), p in 0usize..5) {
        let params = DgmParams::new(vec![alpha], vec![beta], vec![gamma], Hyper::constant(5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)).unwrap();
        let r = identifiable_params(&params, p);
        prop_assert!((r.pi_star[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..5 {
            for j in 0..5 {
                let mean = dgm_reserving::dgm::cell_mean(&params, p, i, j, 0);
                prop_assert!((r.mu[0][i][j] - mean).abs() <= 1e-10 * mean);
            }
        }
    }

    #[test]
    fn correlations_lie_in_unit_interval(gamma in positive(6), p in 1usize..5, j in 0usize..5) {
        for s in 1..=p {
            if j + s < 6 {
                let rho = dev_correlation(&gamma, p, j, s).unwrap();
                prop_assert!((0.0..0.5).contains(&rho));
            }
        }
    }

    #[test]
    fn tail_measures_are_ordered(mut draws in prop::collection::vec(-1e3f64..1e3, 100..400), q1 in 0.5f64..0.99, dq in 0.0f64..0.009) {
        draws.sort_by(f64::total_cmp);
        let q2 = q1 + dq;
        prop_assert!(value_at_risk(&draws, q1) <= value_at_risk(&draws, q2));
        let var = value_at_risk(&draws, q2);
        let es = expected_shortfall(&draws, q2);
        prop_assert!(es >= var);
        // Independent restatement: mean of the sorted draws from the VaR order statistic up.
        let start = draws.iter().position(|v| *v == var).unwrap();
        let rank = ((q2 * draws.len() as f64) - 1e-9).ceil() as usize;
        let from = rank.max(1) - 1;
        prop_assert!(from >= start);
        let tail = &draws[from..];
        let oracle = tail.iter().sum::<f64>() / tail.len() as f64;
        prop_assert!((es - oracle).abs() <= 1e-9 * oracle.abs().max(1.0));
    }

    #[test]
    fn hpd_holds_its_mass(mut draws in prop::collection::vec(-50f64..50.0, 20..300), level in 0.5f64..0.99) {
        draws.sort_by(f64::total_cmp);
        let (lo, hi) = hpd_interval(&draws, level).unwrap();
        let inside = draws.iter().filter(|v| **v >= lo && **v <= hi).count();
        prop_assert!(inside as f64 >= level * draws.len() as f64 - 1e-9);
        let (q_lo, q_hi) = (quantile_sorted(&draws, (1.0 - level) / 2.0), quantile_sorted(&draws, (1.0 + level) / 2.0));
        prop_assert!(hi - lo <= q_hi - q_lo + 1e-9);
    }

    #[test]
    fn fitted_rows_reproduce_observed_totals(cells in positive(15)) {
        let n = 5;
        let mut it = cells.into_iter();
        let tri: Vec<Vec<Option<f64>>> = (0..n)
            .map(|i| (0..n).map(|j| if i + j < n { it.next() } else { None }).collect())
            .collect();
        let fit = chain_ladder(&tri).unwrap();
        for i in 0..n {
            let observed: f64 = (0..n - i).map(|j| tri[i][j].unwrap()).sum();
            let fitted: f64 = (0..n - i).map(|j| fit.fitted[i][j]).sum();
            prop_assert!((observed - fitted).abs() < 1e-9 * observed);
        }
    }
}
