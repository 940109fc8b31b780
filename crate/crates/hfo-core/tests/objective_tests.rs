//! Objective, projection, and box-QP solver checked against central
//! differences and a brute-force grid minimizer.

mod common;

use approx::assert_relative_eq;
use common::{brute_force_box_min, central_diff_grad, frozen};
use hfo_core::config::ExperimentConfig;
use hfo_core::error::Error;
use hfo_core::objective::{
    chosen_rendezvous_point, compute_constants, compute_constants_unchecked, eval_phi, gd_step,
    project_box, reduced_gradient, reduced_hessian, solve_frozen_sample_input,
    solve_optimal_input, InputBox, QuadObjective,
};
use nalgebra::{SMatrix, SVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Vec3 = SVector<f64, 3>;
type Vec6 = SVector<f64, 6>;

fn reference() -> ExperimentConfig {
    ExperimentConfig::reference()
}

/// A small synthetic problem whose stepsize satisfies the contraction
/// hypothesis: input-effort weight dominant, output weight negligible.
fn contractive_objective() -> (QuadObjective, hfo_core::dynamics::StabilizedPlant) {
    let cfg = reference();
    let q_u = SMatrix::<f64, 3, 3>::identity();
    let q_y = SMatrix::<f64, 6, 6>::identity() * 1e-12;
    let y_hat = Vec6::zeros();
    let box_u = InputBox::symmetric(0.4).unwrap();
    let probe = QuadObjective::new(q_u, q_y, y_hat, box_u, 1.0).unwrap();
    let c = compute_constants_unchecked(&probe, &cfg.plant);
    let gamma = 0.9 * c.gamma_max;
    let obj = QuadObjective::new(q_u, q_y, y_hat, box_u, gamma).unwrap();
    (obj, cfg.plant)
}

#[test]
fn reduced_gradient_matches_central_differences() {
    let cfg = reference();
    let obj = &cfg.obj;
    let plant = &cfg.plant;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let u = Vec3::from_fn(|_, _| rng.gen_range(-0.4..0.4));
        let y_s = Vec6::from_fn(|i, _| {
            if i < 3 {
                rng.gen_range(-2000.0..2000.0)
            } else {
                rng.gen_range(-5.0..5.0)
            }
        });
        let g = reduced_gradient(obj, plant, &u, &y_s);
        let f = |v: &Vec3| {
            let y = plant.h * v + (y_s - plant.h * u);
            eval_phi(obj, v, &y)
        };
        let fd = central_diff_grad(f, &u, 1e-3);
        let rel = (g - fd).norm() / g.norm().max(1e-12);
        assert!(rel < 1e-6, "gradient mismatch: rel err {rel}");
    }
}

#[test]
fn constants_match_reference_and_reject_the_default_stepsize() {
    let cfg = reference();
    let c = compute_constants_unchecked(&cfg.obj, &cfg.plant);
    assert_relative_eq!(c.l, frozen::L_DEFAULT, max_relative = 1e-12);
    assert_relative_eq!(c.q, frozen::Q_DEFAULT, max_relative = 1e-12);
    match compute_constants(&cfg.obj, &cfg.plant) {
        Err(Error::StepsizeInvalid { gamma, q, .. }) => {
            assert_eq!(gamma, 0.1);
            assert_relative_eq!(q, frozen::Q_DEFAULT, max_relative = 1e-12);
        }
        other => panic!("expected a stepsize rejection, got {other:?}"),
    }
    // A dominant input-effort weight admits a contractive stepsize.
    let (obj, plant) = contractive_objective();
    let valid = compute_constants(&obj, &plant).unwrap();
    assert!(valid.q > 0.0 && valid.q < 1.0, "q = {}", valid.q);
}

#[test]
fn qp_solver_agrees_with_the_brute_force_grid() {
    let cfg = reference();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let d = Vec6::from_fn(|_, _| rng.gen_range(-6.0..6.0));
        let u_star = solve_optimal_input(&cfg.obj, &cfg.plant, &d, 1e-10).unwrap();
        let f = |u: &Vec3| {
            let y = cfg.plant.h * u + d;
            eval_phi(&cfg.obj, u, &y)
        };
        let (u_grid, v_grid) = brute_force_box_min(
            f,
            &cfg.obj.box_u.lo,
            &cfg.obj.box_u.hi,
            0.02,
        );
        assert!(
            f(&u_star) <= v_grid + 1e-9,
            "solver value {} vs grid value {}",
            f(&u_star),
            v_grid
        );
        assert!(
            (u_star - u_grid).norm() <= 0.02 * 3.0f64.sqrt() + 1e-9,
            "solver point {u_star:?} vs grid point {u_grid:?}"
        );
        // Stationarity: a projected-gradient step from the solution must not
        // move it.
        let p = reduced_hessian(&cfg.obj, &cfg.plant);
        let c = cfg.plant.h.transpose() * (cfg.obj.q_y * (d - cfg.obj.y_hat));
        let step = 1.0 / p.symmetric_eigen().eigenvalues.max();
        let moved = (project_box(&(u_star - step * (p * u_star + c)), &cfg.obj.box_u) - u_star)
            .norm();
        assert!(moved < 1e-8, "solution moved {moved} under one step");
    }
}

#[test]
fn gradient_iteration_contracts_toward_its_frozen_target() {
    let (obj, plant) = contractive_objective();
    let c = compute_constants(&obj, &plant).unwrap();
    let y_s = Vec6::from_fn(|i, _| if i < 3 { 150.0 } else { 0.5 });
    let z_star = solve_frozen_sample_input(&obj, &plant, &y_s);
    let mut z = Vec3::new(0.4, -0.4, 0.4);
    let start = (z - z_star).norm();
    for k in 1..=20u32 {
        z = gd_step(&obj, &plant, &z, &y_s);
        let bound = c.q.powf(k as f64 / 2.0) * start;
        assert!(
            (z - z_star).norm() <= bound + 1e-12,
            "step {k}: distance {} above contraction bound {}",
            (z - z_star).norm(),
            bound
        );
    }
}

#[test]
fn rendezvous_point_matches_frozen_positions() {
    let cfg = reference();
    let d = Vec6::from_element(5.0);
    let x = chosen_rendezvous_point(&cfg.obj, &cfg.plant, &d, 1e-10).unwrap();
    for i in 0..3 {
        assert_relative_eq!(x[i], frozen::XTILDE_D5_POS[i], max_relative = 1e-9);
    }
    // An equilibrium of the stabilized loop carries no velocity.
    for i in 3..6 {
        assert!(x[i].abs() < 1e-9, "velocity component {i} = {}", x[i]);
    }
}

#[test]
fn objective_evaluates_the_quadratic_directly() {
    let cfg = reference();
    let u = Vec3::new(0.1, -0.2, 0.3);
    let y = Vec6::from_fn(|i, _| 10.0 * (i as f64 + 1.0));
    let manual = {
        let dy = y - cfg.obj.y_hat;
        0.5 * ((u.transpose() * cfg.obj.q_u * u)[(0, 0)]
            + (dy.transpose() * cfg.obj.q_y * dy)[(0, 0)])
    };
    assert_relative_eq!(eval_phi(&cfg.obj, &u, &y), manual, max_relative = 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_is_idempotent_and_inside(
        v in proptest::array::uniform3(-3.0f64..3.0),
        r in 0.05f64..1.5,
    ) {
        let box_u = InputBox::symmetric(r).unwrap();
        let p = project_box(&Vec3::from_column_slice(&v), &box_u);
        prop_assert!(box_u.contains(&p, 0.0));
        let pp = project_box(&p, &box_u);
        prop_assert_eq!(p, pp);
    }

    #[test]
    fn projection_is_nonexpansive(
        v in proptest::array::uniform3(-3.0f64..3.0),
        w in proptest::array::uniform3(-3.0f64..3.0),
        r in 0.05f64..1.5,
    ) {
        let box_u = InputBox::symmetric(r).unwrap();
        let a = Vec3::from_column_slice(&v);
        let b = Vec3::from_column_slice(&w);
        let pa = project_box(&a, &box_u);
        let pb = project_box(&b, &box_u);
        prop_assert!((pa - pb).norm() <= (a - b).norm() + 1e-15);
    }
}
