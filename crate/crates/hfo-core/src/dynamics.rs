//! Relative orbital dynamics and stabilizing state feedback.
//!
//! The plant is the linearized relative motion of a chaser about a circular
//! reference orbit (local-vertical/local-horizontal frame), with state
//! x = (relative position, relative velocity) in R^6 and thrust input in R^3.
//! A static feedback u = -K x + u_cmd places the closed-loop spectrum at a
//! requested set of six real eigenvalues; the closed-loop matrix then has the
//! block form [[0, I], [-Dk, -Dc]] with diagonal stiffness and damping blocks,
//! which the rest of the library exploits (diagonal steady-state map,
//! closed-form decay bounds).

use nalgebra::{Complex, Matrix3, SMatrix, SVector};

use crate::error::{Error, Result};

pub type Vec3 = SVector<f64, 3>;
pub type Vec6 = SVector<f64, 6>;
pub type Mat3 = Matrix3<f64>;
pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Mat63 = SMatrix<f64, 6, 3>;
pub type Mat36 = SMatrix<f64, 3, 6>;

/// Physical parameters of the relative-motion model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitParams {
    /// Gravitational parameter of the primary body, m^3/s^2.
    pub mu: f64,
    /// Radius of the circular reference orbit, m.
    pub a: f64,
    /// Chaser mass, kg.
    pub m_c: f64,
}

impl Default for OrbitParams {
    fn default() -> Self {
        Self {
            mu: 3.986e14,
            a: 6.871e6,
            m_c: 1.0,
        }
    }
}

impl OrbitParams {
    /// Mean motion of the reference orbit, rad/s.
    pub fn mean_motion(&self) -> f64 {
        (self.mu / self.a.powi(3)).sqrt()
    }

    fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidArg(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::InvalidArg(format!(
                "orbit radius must be positive, got {}",
                self.a
            )));
        }
        if !(self.m_c > 0.0 && self.m_c.is_finite()) {
            return Err(Error::InvalidArg(format!(
                "chaser mass must be positive, got {}",
                self.m_c
            )));
        }
        Ok(())
    }
}

/// Desired closed-loop spectrum: six strictly negative real eigenvalues,
/// consumed pairwise per axis as (l1,l2) radial, (l3,l4) along-track,
/// (l5,l6) cross-track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSpec {
    pub lambda: [f64; 6],
}

impl Default for EigenSpec {
    fn default() -> Self {
        Self {
            lambda: [-0.0155, -0.0163, -0.0155, -0.0170, -0.0165, -0.0170],
        }
    }
}

impl EigenSpec {
    pub fn new(lambda: [f64; 6]) -> Result<Self> {
        for (i, l) in lambda.iter().enumerate() {
            if !(l.is_finite() && *l < 0.0) {
                return Err(Error::InvalidArg(format!(
                    "eigenvalue {} must be finite and strictly negative, got {}",
                    i + 1,
                    l
                )));
            }
        }
        Ok(Self { lambda })
    }

    /// Eigenvalue smallest in magnitude (slowest mode).
    pub fn lambda_slow(&self) -> f64 {
        self.lambda
            .iter()
            .copied()
            .min_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
            .unwrap()
    }

    /// Eigenvalue largest in magnitude (fastest mode).
    pub fn lambda_fast(&self) -> f64 {
        self.lambda
            .iter()
            .copied()
            .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
            .unwrap()
    }

    /// Largest multiplicity among the requested eigenvalues.
    pub fn max_multiplicity(&self) -> u32 {
        let mut mu = 1u32;
        for (i, l) in self.lambda.iter().enumerate() {
            let count = self.lambda[i..].iter().filter(|m| **m == *l).count() as u32;
            mu = mu.max(count);
        }
        mu
    }
}

/// Open-loop relative-motion plant: xdot = A x + B u.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwPlant {
    pub a: Mat6,
    pub b: Mat63,
    pub params: OrbitParams,
}

/// Feedback gains: u = -K x + u_cmd with the sparse 3x6 layout produced by
/// per-axis pole placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub k: Mat36,
}

/// Closed-loop plant xdot = A_stab x + B u_cmd together with the pieces the
/// optimizer needs: the steady-state input-to-state map H = -A_stab^{-1} B
/// and the gain that shaped it.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilizedPlant {
    pub a_stab: Mat6,
    pub b: Mat63,
    pub k: Mat36,
    /// Steady-state map from commanded input to state, -A_stab^{-1} B.
    pub h: Mat63,
    /// Exact inverse of A_stab (block closed form, not a numerical inverse).
    pub a_stab_inv: Mat6,
    /// Operator 2-norm of `a_stab_inv`.
    pub norm_a_inv: f64,
    /// Operator 2-norm of `k`.
    pub norm_k: f64,
    pub params: OrbitParams,
    pub spec: EigenSpec,
}

/// Build the open-loop relative-motion plant for the given orbit.
pub fn build_cw(params: OrbitParams) -> Result<CwPlant> {
    params.validate()?;
    let w = params.mean_motion();
    let mut a = Mat6::zeros();
    a[(0, 3)] = 1.0;
    a[(1, 4)] = 1.0;
    a[(2, 5)] = 1.0;
    a[(3, 0)] = 3.0 * w * w;
    a[(3, 4)] = 2.0 * w;
    a[(4, 3)] = -2.0 * w;
    a[(5, 2)] = -w * w;
    let mut b = Mat63::zeros();
    let inv_m = 1.0 / params.m_c;
    b[(3, 0)] = inv_m;
    b[(4, 1)] = inv_m;
    b[(5, 2)] = inv_m;
    Ok(CwPlant { a, b, params })
}

/// Closed-form feedback synthesis: choose K so that A - B K is block
/// companion with per-axis characteristic polynomials
/// (s - l_{2i-1})(s - l_{2i}). The force-level gains scale with the chaser
/// mass so the *acceleration* feedback, and hence the closed-loop matrix,
/// is mass-independent.
pub fn synthesize_gains(w: f64, spec: &EigenSpec, m_c: f64) -> Result<Gains> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::InvalidArg(format!(
            "mean motion must be positive, got {w}"
        )));
    }
    if !(m_c > 0.0 && m_c.is_finite()) {
        return Err(Error::InvalidArg(format!(
            "chaser mass must be positive, got {m_c}"
        )));
    }
    let [l1, l2, l3, l4, l5, l6] = spec.lambda;
    let k1 = 3.0 * w * w + l1 * l2;
    let k4 = -(l1 + l2);
    let k5 = 2.0 * w;
    let k8 = l3 * l4;
    let k10 = -2.0 * w;
    let k11 = -(l3 + l4);
    let k15 = -w * w + l5 * l6;
    let k18 = -(l5 + l6);
    let mut k = Mat36::zeros();
    k[(0, 0)] = k1;
    k[(0, 3)] = k4;
    k[(0, 4)] = k5;
    k[(1, 1)] = k8;
    k[(1, 3)] = k10;
    k[(1, 4)] = k11;
    k[(2, 2)] = k15;
    k[(2, 5)] = k18;
    Ok(Gains { k: k * m_c })
}

/// Assemble the closed-loop plant from the open-loop model and gains, and
/// precompute the steady-state map. Verifies the closed-loop matrix has the
/// expected block-diagonal structure before trusting the closed-form inverse.
pub fn build_stabilized(cw: &CwPlant, gains: &Gains, spec: &EigenSpec) -> Result<StabilizedPlant> {
    let a_stab = cw.a - cw.b * gains.k;

    // The synthesis above makes the lower blocks diagonal; confirm to guard
    // against mismatched (w, spec, gains) combinations.
    let mut dk = Mat3::zeros();
    let mut dc = Mat3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let upper_left = a_stab[(i, j)];
            let upper_right = a_stab[(i, j + 3)] - if i == j { 1.0 } else { 0.0 };
            if upper_left.abs() > 1e-12 || upper_right.abs() > 1e-12 {
                return Err(Error::NumericalCheck(format!(
                    "closed loop lost its integrator structure at block entry ({i},{j})"
                )));
            }
            let stiff = a_stab[(i + 3, j)];
            let damp = a_stab[(i + 3, j + 3)];
            if i == j {
                dk[(i, i)] = -stiff;
                dc[(i, i)] = -damp;
            } else if stiff.abs() > 1e-12 || damp.abs() > 1e-12 {
                return Err(Error::NumericalCheck(format!(
                    "closed loop has off-diagonal coupling at ({},{})",
                    i + 3,
                    j
                )));
            }
        }
    }
    for i in 0..3 {
        if dk[(i, i)] <= 0.0 || dc[(i, i)] <= 0.0 {
            return Err(Error::NumericalCheck(format!(
                "closed-loop axis {i} is not stabilized (stiffness {}, damping {})",
                dk[(i, i)],
                dc[(i, i)]
            )));
        }
    }

    // Block inverse of [[0, I], [-Dk, -Dc]]: [[-Dk^{-1} Dc, -Dk^{-1}], [I, 0]].
    let dk_inv = Mat3::from_diagonal(&Vec3::from_fn(|i, _| 1.0 / dk[(i, i)]));
    let mut a_inv = Mat6::zeros();
    for i in 0..3 {
        for j in 0..3 {
            a_inv[(i, j)] = -(dk_inv * dc)[(i, j)];
            a_inv[(i, j + 3)] = -dk_inv[(i, j)];
        }
        a_inv[(i + 3, i)] = 1.0;
    }

    let h = -a_inv * cw.b;
    let norm_a_inv = a_inv.singular_values().max();
    let norm_k = gains.k.singular_values().max();
    Ok(StabilizedPlant {
        a_stab,
        b: cw.b,
        k: gains.k,
        h,
        a_stab_inv: a_inv,
        norm_a_inv,
        norm_k,
        params: cw.params,
        spec: *spec,
    })
}

/// Check that the closed-loop spectrum matches the requested one: every
/// computed eigenvalue must be within `tol` of some requested eigenvalue and
/// vice versa (multiset match under tolerance).
pub fn verify_eigen_placement(plant: &StabilizedPlant, tol: f64) -> bool {
    let eig: Vec<Complex<f64>> = plant.a_stab.complex_eigenvalues().iter().copied().collect();
    if eig.iter().any(|e| e.im.abs() > tol) {
        return false;
    }
    let mut got: Vec<f64> = eig.iter().map(|e| e.re).collect();
    let mut want = plant.spec.lambda.to_vec();
    got.sort_by(|a, b| a.partial_cmp(b).unwrap());
    want.sort_by(|a, b| a.partial_cmp(b).unwrap());
    got.iter().zip(want.iter()).all(|(g, w)| (g - w).abs() <= tol)
}

/// Upper bound on the decay of the closed-loop transition matrix:
/// ||exp(A_stab t)|| <= mu_max * (|l_fast| / |l_slow|) * exp(-|l_slow| t).
///
/// Valid for the diagonalizable-by-axis structure produced here; `t` must be
/// nonnegative.
pub fn matrix_exp_decay_bound(plant: &StabilizedPlant, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArg(format!(
            "decay bound requires t >= 0, got {t}"
        )));
    }
    let mu = plant.spec.max_multiplicity() as f64;
    let slow = plant.spec.lambda_slow().abs();
    let fast = plant.spec.lambda_fast().abs();
    Ok(mu * (fast / slow) * (-slow * t).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mean_motion_matches_closed_form() {
        let p = OrbitParams::default();
        assert_relative_eq!(
            p.mean_motion(),
            (3.986e14f64 / 6.871e6f64.powi(3)).sqrt(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn open_loop_sparsity() {
        let plant = build_cw(OrbitParams::default()).unwrap();
        let w = plant.params.mean_motion();
        assert_eq!(plant.a[(0, 3)], 1.0);
        assert_relative_eq!(plant.a[(3, 0)], 3.0 * w * w);
        assert_relative_eq!(plant.a[(3, 4)], 2.0 * w);
        assert_relative_eq!(plant.a[(4, 3)], -2.0 * w);
        assert_relative_eq!(plant.a[(5, 2)], -w * w);
        // Everything else in the bottom-left 3x3 position block is zero.
        assert_eq!(plant.a[(3, 1)], 0.0);
        assert_eq!(plant.a[(4, 0)], 0.0);
        assert_eq!(plant.a[(5, 0)], 0.0);
    }

    #[test]
    fn gains_scale_with_mass_but_closed_loop_does_not() {
        let spec = EigenSpec::default();
        let p1 = OrbitParams::default();
        let p2 = OrbitParams { m_c: 7.5, ..p1 };
        let w = p1.mean_motion();
        let g1 = synthesize_gains(w, &spec, p1.m_c).unwrap();
        let g2 = synthesize_gains(w, &spec, p2.m_c).unwrap();
        assert_relative_eq!(g2.k[(0, 0)], 7.5 * g1.k[(0, 0)], max_relative = 1e-14);
        let s1 = build_stabilized(&build_cw(p1).unwrap(), &g1, &spec).unwrap();
        let s2 = build_stabilized(&build_cw(p2).unwrap(), &g2, &spec).unwrap();
        assert_relative_eq!(s1.a_stab[(3, 0)], s2.a_stab[(3, 0)], max_relative = 1e-12);
        assert_relative_eq!(s1.a_stab[(4, 4)], s2.a_stab[(4, 4)], max_relative = 1e-12);
    }

    #[test]
    fn rejects_nonnegative_eigenvalue() {
        assert!(EigenSpec::new([-0.1, -0.1, -0.1, -0.1, -0.1, 0.0]).is_err());
        assert!(EigenSpec::new([-0.1, 0.2, -0.1, -0.1, -0.1, -0.1]).is_err());
    }

    #[test]
    fn closed_form_inverse_matches_numeric() {
        let spec = EigenSpec::default();
        let cw = build_cw(OrbitParams::default()).unwrap();
        let g = synthesize_gains(cw.params.mean_motion(), &spec, cw.params.m_c).unwrap();
        let s = build_stabilized(&cw, &g, &spec).unwrap();
        let prod = s.a_stab * s.a_stab_inv;
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(prod[(i, j)], expect, epsilon = 1e-10);
            }
        }
    }
}
