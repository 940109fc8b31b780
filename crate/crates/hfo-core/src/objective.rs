//! Steady-state objective, projected-gradient machinery, and optimal-input
//! solvers.
//!
//! The controller regulates the plant by running projected gradient descent
//! on the quadratic cost
//!
//! ```text
//!   Phi(u, y) = 1/2 u' Q_u u + 1/2 (y - y_hat)' Q_y (y - y_hat)
//! ```
//!
//! where the output is tied to the input through the steady-state map
//! y = H u + d. The solvers below compute the exact constrained minimizer
//! over the input box; the sampled controller only ever takes single
//! projected-gradient steps toward it.

use crate::dynamics::{Mat3, Mat36, Mat6, StabilizedPlant, Vec3, Vec6};
use crate::error::{Error, Result};

/// Axis-aligned box of admissible thrust inputs, N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputBox {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl InputBox {
    pub fn new(lo: Vec3, hi: Vec3) -> Result<Self> {
        for i in 0..3 {
            if !(lo[i].is_finite() && hi[i].is_finite() && lo[i] <= hi[i]) {
                return Err(Error::InvalidArg(format!(
                    "input box component {i} invalid: [{}, {}]",
                    lo[i], hi[i]
                )));
            }
        }
        let b = Self { lo, hi };
        if !(b.diameter() > 0.0) {
            return Err(Error::InvalidArg(
                "input box must have positive diameter".into(),
            ));
        }
        Ok(b)
    }

    /// The symmetric box [-r, r]^3.
    pub fn symmetric(r: f64) -> Result<Self> {
        Self::new(Vec3::from_element(-r), Vec3::from_element(r))
    }

    /// Euclidean diameter ||hi - lo||.
    pub fn diameter(&self) -> f64 {
        (self.hi - self.lo).norm()
    }

    pub fn contains(&self, v: &Vec3, tol: f64) -> bool {
        (0..3).all(|i| v[i] >= self.lo[i] - tol && v[i] <= self.hi[i] + tol)
    }
}

/// Quadratic steady-state objective with its input constraint and the
/// gradient stepsize used by the sampled controller.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadObjective {
    pub q_u: Mat3,
    pub q_y: Mat6,
    pub y_hat: Vec6,
    pub box_u: InputBox,
    pub gamma: f64,
}

fn check_spd<const N: usize>(
    m: &nalgebra::SMatrix<f64, N, N>,
    name: &str,
) -> Result<()> {
    let scale = m.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    for i in 0..N {
        for j in 0..N {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidArg(format!("{name} must be symmetric")));
            }
        }
    }
    if nalgebra::Cholesky::new(*m).is_none() {
        return Err(Error::InvalidArg(format!(
            "{name} must be positive definite"
        )));
    }
    Ok(())
}

impl QuadObjective {
    pub fn new(q_u: Mat3, q_y: Mat6, y_hat: Vec6, box_u: InputBox, gamma: f64) -> Result<Self> {
        check_spd(&q_u, "Q_u")?;
        check_spd(&q_y, "Q_y")?;
        for i in 3..6 {
            if y_hat[i] != 0.0 {
                return Err(Error::InvalidArg(format!(
                    "target velocity components must be zero (component {} is {})",
                    i + 1,
                    y_hat[i]
                )));
            }
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArg(format!(
                "stepsize gamma must be positive and finite, got {gamma}"
            )));
        }
        Ok(Self {
            q_u,
            q_y,
            y_hat,
            box_u,
            gamma,
        })
    }
}

/// Curvature constant and per-step contraction factor of the projected
/// gradient iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityConstants {
    /// L = lambda_max(Q_u + H' Q_y H), the Lipschitz constant of the reduced
    /// gradient.
    pub l: f64,
    /// q = 1 - 2*gamma*lambda_min(Q_u) + gamma^2 L^2; each gradient step
    /// contracts the squared distance to the frozen-sample optimum by q.
    pub q: f64,
    /// Supremum of stepsizes for which both q in (0,1) and
    /// gamma < 2/(lambda_min(Q_u) + L) hold.
    pub gamma_max: f64,
}

/// The reduced Hessian Q_u + H' Q_y H of the input-to-cost composition.
pub fn reduced_hessian(obj: &QuadObjective, plant: &StabilizedPlant) -> Mat3 {
    obj.q_u + plant.h.transpose() * obj.q_y * plant.h
}

/// Evaluate the objective at an input/output pair.
pub fn eval_phi(obj: &QuadObjective, u: &Vec3, y: &Vec6) -> f64 {
    let dy = y - obj.y_hat;
    0.5 * (u.dot(&(obj.q_u * u)) + dy.dot(&(obj.q_y * dy)))
}

/// Gradient of u -> Phi(u, y) with the output sensitivity folded in through
/// the steady-state map: Q_u z + H' Q_y (y_s - y_hat).
pub fn reduced_gradient(
    obj: &QuadObjective,
    plant: &StabilizedPlant,
    z: &Vec3,
    y_s: &Vec6,
) -> Vec3 {
    obj.q_u * z + plant.h.transpose() * (obj.q_y * (y_s - obj.y_hat))
}

/// Euclidean projection onto the input box (componentwise clamp).
pub fn project_box(v: &Vec3, box_u: &InputBox) -> Vec3 {
    Vec3::from_fn(|i, _| v[i].clamp(box_u.lo[i], box_u.hi[i]))
}

/// One projected-gradient update of the optimizer state given a frozen
/// output sample.
pub fn gd_step(obj: &QuadObjective, plant: &StabilizedPlant, z: &Vec3, y_s: &Vec6) -> Vec3 {
    let g = reduced_gradient(obj, plant, z, y_s);
    project_box(&(z - obj.gamma * g), &obj.box_u)
}

/// Evaluate L, q and the stepsize ceiling for the configured stepsize
/// without range validation — for reporting on configurations that run
/// outside the contraction hypothesis.
pub fn compute_constants_unchecked(
    obj: &QuadObjective,
    plant: &StabilizedPlant,
) -> ConvexityConstants {
    let l = reduced_hessian(obj, plant)
        .symmetric_eigen()
        .eigenvalues
        .max();
    let lam_min_qu = obj.q_u.symmetric_eigen().eigenvalues.min();
    let gamma = obj.gamma;
    let q = 1.0 - 2.0 * gamma * lam_min_qu + gamma * gamma * l * l;
    // Two upper limits on gamma: contraction (q < 1) and the descent-range
    // condition gamma < 2/(lambda_min + L).
    let gamma_max = (2.0 * lam_min_qu / (l * l)).min(2.0 / (lam_min_qu + l));
    ConvexityConstants { l, q, gamma_max }
}

/// Compute L and q for the configured stepsize, rejecting stepsizes for
/// which the gradient iteration is not a contraction.
pub fn compute_constants(
    obj: &QuadObjective,
    plant: &StabilizedPlant,
) -> Result<ConvexityConstants> {
    let c = compute_constants_unchecked(obj, plant);
    let lam_min_qu = obj.q_u.symmetric_eigen().eigenvalues.min();
    if !(c.q > 0.0 && c.q < 1.0) || obj.gamma >= 2.0 / (lam_min_qu + c.l) {
        return Err(Error::StepsizeInvalid {
            gamma: obj.gamma,
            l: c.l,
            q: c.q,
            gamma_max: c.gamma_max,
        });
    }
    Ok(c)
}

/// Exact minimizer of 1/2 u'Pu + c'u over a box, for symmetric positive
/// definite P, by enumerating the 27 possible active sets. Each candidate
/// solves the free block with the bound components pinned, then passes the
/// KKT sign conditions (gradient pointing outward at active bounds).
fn solve_box_qp(p: &Mat3, c: &Vec3, box_u: &InputBox) -> Vec3 {
    let scale = c.norm().max(p.norm() * box_u.hi.norm().max(box_u.lo.norm())).max(1.0);
    let feas_tol = 1e-9 * box_u.diameter().max(1.0);
    let kkt_tol = 1e-9 * scale;
    let mut best: Option<(f64, Vec3)> = None;
    // Pattern digit per component: 0 = at lower bound, 1 = free, 2 = at upper.
    for pattern in 0..27u32 {
        let digits = [pattern % 3, (pattern / 3) % 3, (pattern / 9) % 3];
        let mut m = Mat3::zeros();
        let mut rhs = Vec3::zeros();
        for i in 0..3 {
            match digits[i] {
                1 => {
                    for j in 0..3 {
                        m[(i, j)] = p[(i, j)];
                    }
                    rhs[i] = -c[i];
                }
                d => {
                    m[(i, i)] = 1.0;
                    rhs[i] = if d == 0 { box_u.lo[i] } else { box_u.hi[i] };
                }
            }
        }
        let Some(m_inv) = m.try_inverse() else {
            continue;
        };
        let u = m_inv * rhs;
        let g = p * u + c;
        let mut ok = true;
        for i in 0..3 {
            ok &= match digits[i] {
                0 => g[i] >= -kkt_tol,
                2 => g[i] <= kkt_tol,
                _ => u[i] >= box_u.lo[i] - feas_tol && u[i] <= box_u.hi[i] + feas_tol,
            };
        }
        if ok {
            let u = project_box(&u, box_u);
            let value = 0.5 * u.dot(&(p * u)) + c.dot(&u);
            if best.is_none_or(|(v, _)| value < v) {
                best = Some((value, u));
            }
        }
    }
    // P is positive definite, so some active set always satisfies KKT; the
    // fallback below only matters if every candidate was lost to numerics.
    best.map(|(_, u)| u)
        .unwrap_or_else(|| project_box(&(-p.cholesky().map_or(*c, |ch| ch.solve(c))), box_u))
}

/// Residual of the fixed-point condition at the configured stepsize:
/// ||gd_step(u) - u|| with the output taken at steady state for u.
fn fixed_point_residual(obj: &QuadObjective, plant: &StabilizedPlant, d: &Vec6, u: &Vec3) -> f64 {
    let y = plant.h * u + d;
    (gd_step(obj, plant, u, &y) - u).norm()
}

const SOLVER_ITER_CAP: u64 = 1_000_000;

/// Minimize Phi(u, H u + d) over the input box: the steady-state-optimal
/// input for disturbance level `d`. Accepts an optional warm-start iterate.
///
/// The solution is found by a short warm-started projected-gradient phase
/// (safe stepsize 1/L, well conditioned because the reduced Hessian enters
/// in full) followed by an exact active-set solve; the result is certified
/// against the fixed-point condition at the *configured* stepsize, which the
/// exact minimizer satisfies for any positive gamma.
pub fn solve_optimal_input_warm(
    obj: &QuadObjective,
    plant: &StabilizedPlant,
    d: &Vec6,
    tol: f64,
    warm: Option<&Vec3>,
) -> Result<Vec3> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArg(format!(
            "solver tolerance must be positive, got {tol}"
        )));
    }
    let p = reduced_hessian(obj, plant);
    let c = plant.h.transpose() * (obj.q_y * (d - obj.y_hat));

    // Warm phase: cheap when the caller tracks a slowly moving optimum.
    let mut u = warm.map_or_else(|| project_box(&Vec3::zeros(), &obj.box_u), |w| {
        project_box(w, &obj.box_u)
    });
    let l_p = p.symmetric_eigen().eigenvalues.max();
    let step = 1.0 / l_p;
    let mut iters: u64 = 0;
    for _ in 0..64 {
        let next = project_box(&(u - step * (p * u + c)), &obj.box_u);
        iters += 1;
        let moved = (next - u).norm();
        u = next;
        if moved <= 1e-16 * (1.0 + u.norm()) {
            break;
        }
    }
    if fixed_point_residual(obj, plant, d, &u) <= tol {
        return Ok(u);
    }

    u = solve_box_qp(&p, &c, &obj.box_u);
    let mut residual = fixed_point_residual(obj, plant, d, &u);
    while residual > tol {
        if iters >= SOLVER_ITER_CAP {
            return Err(Error::SolverDiverged {
                iterations: iters,
                residual,
            });
        }
        u = project_box(&(u - step * (p * u + c)), &obj.box_u);
        iters += 1;
        residual = fixed_point_residual(obj, plant, d, &u);
    }
    Ok(u)
}

/// Cold-start variant of [`solve_optimal_input_warm`].
pub fn solve_optimal_input(
    obj: &QuadObjective,
    plant: &StabilizedPlant,
    d: &Vec6,
    tol: f64,
) -> Result<Vec3> {
    solve_optimal_input_warm(obj, plant, d, tol, None)
}

/// Fixed point of the gradient iteration when the output sample is frozen:
/// minimizes 1/2 v'Q_u v + v' H'Q_y (y_s - y_hat) over the box. This is the
/// point the optimizer state contracts toward between consecutive samples.
pub fn solve_frozen_sample_input(
    obj: &QuadObjective,
    plant: &StabilizedPlant,
    y_s: &Vec6,
) -> Vec3 {
    let c = plant.h.transpose() * (obj.q_y * (y_s - obj.y_hat));
    solve_box_qp(&obj.q_u, &c, &obj.box_u)
}

/// Steady state the plant settles into when the optimal input for
/// disturbance level `d` is applied against that same disturbance:
/// H (u_opt - K d). Velocity components are zero by the structure of H.
pub fn chosen_rendezvous_point(
    obj: &QuadObjective,
    plant: &StabilizedPlant,
    d: &Vec6,
    tol: f64,
) -> Result<Vec6> {
    let u = solve_optimal_input(obj, plant, d, tol)?;
    Ok(rendezvous_point_for_input(plant, &u, d))
}

/// The steady state for a given input and disturbance, without solving.
pub fn rendezvous_point_for_input(plant: &StabilizedPlant, u: &Vec3, d: &Vec6) -> Vec6 {
    let k: &Mat36 = &plant.k;
    plant.h * (u - k * d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{build_cw, build_stabilized, synthesize_gains, EigenSpec, OrbitParams};
    use approx::assert_relative_eq;

    fn default_plant() -> StabilizedPlant {
        let params = OrbitParams::default();
        let cw = build_cw(params).unwrap();
        let spec = EigenSpec::default();
        let g = synthesize_gains(params.mean_motion(), &spec, params.m_c).unwrap();
        build_stabilized(&cw, &g, &spec).unwrap()
    }

    fn default_objective() -> QuadObjective {
        let mut q_y = Mat6::zeros();
        for i in 0..3 {
            q_y[(i, i)] = 0.04;
            q_y[(i + 3, i + 3)] = 0.055;
        }
        let mut y_hat = Vec6::zeros();
        y_hat[0] = 100.0;
        y_hat[1] = 100.0;
        y_hat[2] = 100.0;
        QuadObjective::new(
            Mat3::identity() * 5e-5,
            q_y,
            y_hat,
            InputBox::symmetric(0.4).unwrap(),
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn phi_zero_at_joint_minimizer_and_matches_hand_values() {
        let obj = default_objective();
        assert_eq!(eval_phi(&obj, &Vec3::zeros(), &obj.y_hat.clone()), 0.0);
        let mut y = obj.y_hat;
        y[0] += 1.0;
        assert_relative_eq!(eval_phi(&obj, &Vec3::zeros(), &y), 0.02, max_relative = 1e-12);
        let u = Vec3::new(1.0, 0.0, 0.0);
        assert_relative_eq!(eval_phi(&obj, &u, &obj.y_hat.clone()), 2.5e-5, max_relative = 1e-12);
    }

    #[test]
    fn projection_clamps_and_is_idempotent() {
        let b = InputBox::symmetric(0.4).unwrap();
        let v = Vec3::new(1.0, 0.0, -1.0);
        let p = project_box(&v, &b);
        assert_eq!(p, Vec3::new(0.4, 0.0, -0.4));
        assert_eq!(project_box(&p, &b), p);
        let interior = Vec3::new(0.2, -0.3, 0.1);
        assert_eq!(project_box(&interior, &b), interior);
    }

    #[test]
    fn constants_match_scalar_identity_case() {
        // With H = 0 and Q_u = I the constants collapse to L = 1 and
        // q = 1 - 2*gamma + gamma^2.
        let mut plant = default_plant();
        plant.h = crate::dynamics::Mat63::zeros();
        let obj = QuadObjective::new(
            Mat3::identity(),
            Mat6::identity(),
            Vec6::zeros(),
            InputBox::symmetric(1.0).unwrap(),
            0.5,
        )
        .unwrap();
        let c = compute_constants(&obj, &plant).unwrap();
        assert_relative_eq!(c.l, 1.0, max_relative = 1e-12);
        assert_relative_eq!(c.q, 0.25, max_relative = 1e-12);
    }

    #[test]
    fn boundary_stepsize_rejected_in_identity_case() {
        let mut plant = default_plant();
        plant.h = crate::dynamics::Mat63::zeros();
        let obj = QuadObjective::new(
            Mat3::identity(),
            Mat6::identity(),
            Vec6::zeros(),
            InputBox::symmetric(1.0).unwrap(),
            1.0, // exactly 2/(lambda_min + L): q = 1
        )
        .unwrap();
        assert!(matches!(
            compute_constants(&obj, &plant),
            Err(Error::StepsizeInvalid { .. })
        ));
    }

    #[test]
    fn default_configuration_stepsize_is_not_contractive() {
        // The reference configuration runs the controller with a stepsize
        // far above the contraction range; the library reports that rather
        // than masking it.
        let plant = default_plant();
        let obj = default_objective();
        match compute_constants(&obj, &plant) {
            Err(Error::StepsizeInvalid { q, .. }) => assert!(q > 1.0),
            other => panic!("expected stepsize rejection, got {other:?}"),
        }
    }

    #[test]
    fn target_velocity_must_be_zero() {
        let mut y_hat = Vec6::zeros();
        y_hat[4] = 1.0;
        assert!(QuadObjective::new(
            Mat3::identity(),
            Mat6::identity(),
            y_hat,
            InputBox::symmetric(1.0).unwrap(),
            0.1
        )
        .is_err());
    }

    #[test]
    fn optimal_input_is_fixed_point_of_gd_step() {
        let plant = default_plant();
        let obj = default_objective();
        let d = Vec6::from_element(5.0);
        let u = solve_optimal_input(&obj, &plant, &d, 1e-10).unwrap();
        assert!(obj.box_u.contains(&u, 0.0));
        let y = plant.h * u + d;
        assert!((gd_step(&obj, &plant, &u, &y) - u).norm() <= 1e-10);
    }

    #[test]
    fn active_set_solver_handles_binding_constraints() {
        // Shrink the box so the unconstrained optimum is clipped on every
        // axis; the solution must sit on the boundary with inward gradient.
        let plant = default_plant();
        let mut obj = default_objective();
        obj.box_u = InputBox::symmetric(0.01).unwrap();
        let u = solve_optimal_input(&obj, &plant, &Vec6::zeros(), 1e-10).unwrap();
        for i in 0..3 {
            assert_relative_eq!(u[i], 0.01, max_relative = 1e-9);
        }
    }

    #[test]
    fn rendezvous_point_satisfies_steady_state_equation() {
        let plant = default_plant();
        let obj = default_objective();
        let d = Vec6::from_element(5.0);
        let u = solve_optimal_input(&obj, &plant, &d, 1e-10).unwrap();
        let x = chosen_rendezvous_point(&obj, &plant, &d, 1e-10).unwrap();
        let residual = plant.a_stab * x + plant.b * u - plant.b * (plant.k * d);
        assert!(residual.norm() <= 1e-9 * x.norm().max(1.0));
    }
}
