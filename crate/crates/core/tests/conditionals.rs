mod common;

use common::{joint_log_density, reference_fixture};
use dgm_reserving::gibbs::conditionals::{
    log_cond_alpha, log_cond_beta, log_cond_gamma, log_cond_hyper_shape, log_cond_z, HyperGroup, ModelData,
};

const TOL: f64 = 1e-8;

fn check(label: &str, cond: impl Fn(f64) -> f64, joint: impl Fn(f64) -> f64, values: &[f64]) {
    let (c0, j0) = (cond(values[0]), joint(values[0]));
    for &v in &values[1..] {
        let lhs = cond(v) - c0;
        let rhs = joint(v) - j0;
        assert!(
            (lhs - rhs).abs() < TOL * (1.0 + rhs.abs()),
            "{label} at {v}: conditional difference {lhs}, joint difference {rhs}"
        );
    }
}

const GRID: [f64; 6] = [0.3, 0.9, 1.7, 3.2, 6.5, 12.0];

#[test]
fn alpha_conditional_matches_joint() {
    let f = reference_fixture(11);
    let data = ModelData::new(&f.panel).unwrap();
    for k in 0..2 {
        for i in 0..4 {
            let cond = log_cond_alpha(&data, &f.params, f.spec.p, i, k);
            let joint = |v: f64| {
                let mut q = f.params.clone();
                q.set_alpha(i, k, v);
                joint_log_density(&f.panel, &q, &f.spec)
            };
            check(&format!("alpha[{i},{k}]"), cond, joint, &GRID);
        }
    }
}

#[test]
fn beta_conditional_matches_joint() {
    let f = reference_fixture(12);
    let data = ModelData::new(&f.panel).unwrap();
    for k in 0..2 {
        for j in 0..4 {
            let cond = log_cond_beta(&data, &f.params, f.spec.p, j, k);
            let joint = |v: f64| {
                let mut q = f.params.clone();
                q.set_beta(j, k, v);
                joint_log_density(&f.panel, &q, &f.spec)
            };
            check(&format!("beta[{j},{k}]"), cond, joint, &GRID);
        }
    }
}

#[test]
fn gamma_conditional_matches_joint_for_every_lag() {
    for p in 0..4 {
        let mut f = reference_fixture(13);
        f.spec.p = p;
        let data = ModelData::new(&f.panel).unwrap();
        for k in 0..2 {
            for j in 0..4 {
                let cond = log_cond_gamma(&data, &f.params, p, j, k);
                let joint = |v: f64| {
                    let mut q = f.params.clone();
                    q.set_gamma(j, k, v);
                    joint_log_density(&f.panel, &q, &f.spec)
                };
                check(&format!("gamma[{j},{k}] p={p}"), cond, joint, &GRID);
            }
        }
    }
}

#[test]
fn z_conditional_matches_joint() {
    for p in [0, 1, 3] {
        let mut f = reference_fixture(14);
        f.spec.p = p;
        let data = ModelData::new(&f.panel).unwrap();
        for k in 0..2 {
            for i in 0..4 {
                for j in 0..4 - i {
                    let cond = log_cond_z(&data, &f.params, p, i, j, k);
                    let joint = |z: u64| {
                        let mut q = f.params.clone();
                        q.set_z(i, j, k, z);
                        joint_log_density(&f.panel, &q, &f.spec)
                    };
                    let (c0, j0) = (cond(0), joint(0));
                    for z in 1..25u64 {
                        let (lhs, rhs) = (cond(z) - c0, joint(z) - j0);
                        assert!((lhs - rhs).abs() < TOL * (1.0 + rhs.abs()), "z[{i},{j},{k}]={z} p={p}");
                    }
                }
            }
        }
    }
}

#[test]
fn hyper_shape_conditionals_match_joint() {
    let f = reference_fixture(15);
    for idx in 0..4 {
        for group in [HyperGroup::Alpha(idx), HyperGroup::Beta(idx), HyperGroup::Gamma(idx)] {
            let prior_spec = f.spec;
            let cond = log_cond_hyper_shape(group, &f.params, &prior_spec);
            let joint = |v: f64| {
                let mut q = f.params.clone();
                group.set_shape(&mut q, v);
                joint_log_density(&f.panel, &q, &f.spec)
            };
            check(&format!("{group:?} shape"), cond, joint, &GRID);
        }
    }
}
