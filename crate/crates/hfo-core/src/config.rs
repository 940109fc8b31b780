//! Flat key-value run configuration.
//!
//! Every experiment is described by a flat TOML file (one value per key,
//! arrays bracketed). Unset keys fall back to the reference rendezvous
//! scenario the library reproduces, so an empty file is a complete,
//! runnable configuration.

use std::path::Path;

use serde::Deserialize;

use crate::disturbance::Disturbance;
use crate::dynamics::{
    build_cw, build_stabilized, synthesize_gains, EigenSpec, OrbitParams, StabilizedPlant, Vec3,
    Vec6,
};
use crate::error::{Error, Result};
use crate::hybrid::{Case3Order, HybridState, ResetPolicy, SimOptions, TimerConfig};
use crate::objective::{compute_constants, ConvexityConstants, InputBox, QuadObjective};

fn de_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Raw file-level keys. All optional; defaults reproduce the reference
/// scenario (orbit radius 6.871e6 m, unit chaser mass where unstated).
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    // Orbit / plant.
    pub mu: f64,
    pub a: f64,
    pub m_c: f64,
    pub lambda: [f64; 6],
    // Objective.
    pub q_u_diag: [f64; 3],
    pub q_y_diag: [f64; 6],
    pub y_hat: [f64; 6],
    pub box_lo: [f64; 3],
    pub box_hi: [f64; 3],
    pub gamma: f64,
    // Timers.
    pub tau_c_min: f64,
    pub tau_c_max: f64,
    pub tau_g_comp: f64,
    /// One of "fixed-max", "fixed-min", "midpoint", "uniform-random".
    pub reset_policy: String,
    /// One of "g2-then-g1", "g1-then-g2".
    pub case3_order: String,
    // Disturbance.
    /// One of "zero", "constant", "sine".
    pub disturbance: String,
    pub amplitude: f64,
    pub omega: f64,
    pub level: [f64; 6],
    // Initial condition.
    pub x0: [f64; 6],
    pub u0: [f64; 3],
    pub ys0: [f64; 6],
    pub z0: [f64; 3],
    pub tau_c0: f64,
    pub tau_g0: f64,
    pub tau_d0: f64,
    // Run shape.
    pub horizon: f64,
    pub sample_dt: f64,
    pub substep: f64,
    pub asymptotic_window: f64,
    pub seed: u64,
    pub sample_true_output: bool,
    /// Freeze the envelope's initial-error factor at its t=0 value instead
    /// of tracking the moving setpoint.
    pub freeze_init_err: bool,
    /// Treat a stepsize outside the contraction hypothesis as a load error
    /// instead of a warning.
    pub strict_stepsize: bool,
    pub solver_tol: f64,
    /// Target limiting error for the gain-sizing check.
    pub eta: f64,
    // Campaign grids.
    pub theta_grid: Vec<f64>,
    pub kappa_grid: Vec<f64>,
    pub rho_grid: Vec<f64>,
    // Random-initial-condition batch.
    pub batch_lo: [f64; 6],
    pub batch_hi: [f64; 6],
    pub batch_ys_offset: f64,
    pub batch_n: usize,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            mu: 3.986e14,
            a: 6.871e6,
            m_c: 1.0,
            lambda: [-0.0155, -0.0163, -0.0155, -0.0170, -0.0165, -0.0170],
            q_u_diag: [5e-5; 3],
            q_y_diag: [0.04, 0.04, 0.04, 0.055, 0.055, 0.055],
            y_hat: [100.0, 100.0, 100.0, 0.0, 0.0, 0.0],
            box_lo: [-0.4; 3],
            box_hi: [0.4; 3],
            gamma: 0.1,
            tau_c_min: 1.5,
            tau_c_max: 2.0,
            tau_g_comp: 0.5,
            reset_policy: "fixed-max".into(),
            case3_order: "g2-then-g1".into(),
            disturbance: "sine".into(),
            amplitude: 5.0,
            omega: 1.0,
            level: [0.0; 6],
            x0: [1500.0, -1770.0, 3000.0, 1.0, 3.4, 1.0],
            u0: [0.0; 3],
            ys0: [1505.0, -1775.0, 3005.0, 6.0, 5.4, 6.2],
            z0: [0.0; 3],
            tau_c0: 0.175,
            tau_g0: 0.5,
            tau_d0: 0.0,
            horizon: 2000.0,
            sample_dt: 0.5,
            substep: 0.01,
            asymptotic_window: 400.0,
            seed: 0,
            sample_true_output: false,
            freeze_init_err: false,
            strict_stepsize: false,
            solver_tol: 1e-9,
            eta: 1.0,
            theta_grid: vec![-0.25, 0.5, 1.0],
            kappa_grid: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            rho_grid: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            batch_lo: [1000.0, -2000.0, -3500.0, 0.1, 0.1, 0.1],
            batch_hi: [2000.0, -1000.0, -2500.0, 4.0, 4.0, 4.0],
            batch_ys_offset: 5.0,
            batch_n: 20,
        }
    }
}

impl RawConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(de_err)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        Self::from_toml_str(&text)
    }
}

/// Fully validated run description with the model pieces prebuilt.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub params: OrbitParams,
    pub spec: EigenSpec,
    pub plant: StabilizedPlant,
    pub obj: QuadObjective,
    pub dist: Disturbance,
    pub timers: TimerConfig,
    pub init: HybridState,
    /// Stepsize constants when the contraction hypothesis holds.
    pub constants: Option<ConvexityConstants>,
    /// Diagnostic recorded when the hypothesis fails and strict mode is off.
    pub stepsize_warning: Option<String>,
    pub horizon: f64,
    pub sample_dt: f64,
    pub substep: f64,
    pub window: f64,
    pub seed: u64,
    pub sample_true_output: bool,
    pub freeze_init_err: bool,
    pub solver_tol: f64,
    pub eta: f64,
    pub theta_grid: Vec<f64>,
    pub kappa_grid: Vec<f64>,
    pub rho_grid: Vec<f64>,
    pub batch_lo: [f64; 6],
    pub batch_hi: [f64; 6],
    pub batch_ys_offset: f64,
    pub batch_n: usize,
}

fn parse_reset_policy(name: &str, seed: u64) -> Result<ResetPolicy> {
    match name {
        "fixed-max" => Ok(ResetPolicy::FixedMax),
        "fixed-min" => Ok(ResetPolicy::FixedMin),
        "midpoint" => Ok(ResetPolicy::Midpoint),
        "uniform-random" => Ok(ResetPolicy::UniformRandom { seed }),
        other => Err(Error::Config(format!(
            "reset_policy must be fixed-max, fixed-min, midpoint or uniform-random, got '{other}'"
        ))),
    }
}

fn parse_case3_order(name: &str) -> Result<Case3Order> {
    match name {
        "g2-then-g1" => Ok(Case3Order::G2ThenG1),
        "g1-then-g2" => Ok(Case3Order::G1ThenG2),
        other => Err(Error::Config(format!(
            "case3_order must be g2-then-g1 or g1-then-g2, got '{other}'"
        ))),
    }
}

fn parse_disturbance(raw: &RawConfig) -> Result<Disturbance> {
    match raw.disturbance.as_str() {
        "zero" => Ok(Disturbance::Zero),
        "constant" => Ok(Disturbance::Constant {
            level: Vec6::from_column_slice(&raw.level),
        }),
        "sine" => {
            if !(raw.omega.is_finite() && raw.amplitude.is_finite()) {
                return Err(Error::Config(
                    "sine disturbance needs finite amplitude and omega".into(),
                ));
            }
            Ok(Disturbance::Sine {
                amplitude: raw.amplitude,
                omega: raw.omega,
            })
        }
        other => Err(Error::Config(format!(
            "disturbance must be zero, constant or sine, got '{other}'"
        ))),
    }
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let params = OrbitParams {
            mu: raw.mu,
            a: raw.a,
            m_c: raw.m_c,
        };
        let spec = EigenSpec::new(raw.lambda)?;
        let cw = build_cw(params)?;
        let gains = synthesize_gains(params.mean_motion(), &spec, params.m_c)?;
        let plant = build_stabilized(&cw, &gains, &spec)?;

        let q_u = nalgebra::Matrix3::from_diagonal(&Vec3::from_column_slice(&raw.q_u_diag));
        let q_y = nalgebra::Matrix6::from_diagonal(&Vec6::from_column_slice(&raw.q_y_diag));
        let box_u = InputBox::new(
            Vec3::from_column_slice(&raw.box_lo),
            Vec3::from_column_slice(&raw.box_hi),
        )?;
        let obj = QuadObjective::new(
            q_u,
            q_y,
            Vec6::from_column_slice(&raw.y_hat),
            box_u,
            raw.gamma,
        )?;

        let strict = raw.strict_stepsize;
        let (constants, stepsize_warning) = match compute_constants(&obj, &plant) {
            Ok(c) => (Some(c), None),
            Err(e) if !strict => {
                let msg = format!("stepsize outside the contraction hypothesis: {e}");
                log::warn!("{msg}");
                (None, Some(msg))
            }
            Err(e) => return Err(e),
        };

        let dist = parse_disturbance(raw)?;
        let timers = TimerConfig {
            tau_c_min: raw.tau_c_min,
            tau_c_max: raw.tau_c_max,
            tau_g_comp: raw.tau_g_comp,
            reset_policy: parse_reset_policy(&raw.reset_policy, raw.seed)?,
            case3_order: parse_case3_order(&raw.case3_order)?,
        };
        timers.validate()?;

        let init = HybridState {
            x: Vec6::from_column_slice(&raw.x0),
            u: Vec3::from_column_slice(&raw.u0),
            y_s: Vec6::from_column_slice(&raw.ys0),
            z: Vec3::from_column_slice(&raw.z0),
            tau_c: raw.tau_c0,
            tau_g: raw.tau_g0,
            tau_d: raw.tau_d0,
        };

        for (key, v) in [
            ("horizon", raw.horizon),
            ("sample_dt", raw.sample_dt),
            ("substep", raw.substep),
            ("asymptotic_window", raw.asymptotic_window),
            ("solver_tol", raw.solver_tol),
            ("eta", raw.eta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{key} must be positive, got {v}")));
            }
        }
        for i in 0..6 {
            if raw.batch_lo[i] > raw.batch_hi[i] {
                return Err(Error::Config(format!(
                    "batch box component {i} has lo {} > hi {}",
                    raw.batch_lo[i], raw.batch_hi[i]
                )));
            }
        }
        if raw.batch_n < 1 {
            return Err(Error::Config("batch_n must be at least 1".into()));
        }
        if raw.theta_grid.is_empty() || raw.kappa_grid.is_empty() || raw.rho_grid.is_empty() {
            return Err(Error::Config("perturbation grids must be non-empty".into()));
        }

        Ok(Self {
            params,
            spec,
            plant,
            obj,
            dist,
            timers,
            init,
            constants,
            stepsize_warning,
            horizon: raw.horizon,
            sample_dt: raw.sample_dt,
            substep: raw.substep,
            window: raw.asymptotic_window,
            seed: raw.seed,
            sample_true_output: raw.sample_true_output,
            freeze_init_err: raw.freeze_init_err,
            solver_tol: raw.solver_tol,
            eta: raw.eta,
            theta_grid: raw.theta_grid.clone(),
            kappa_grid: raw.kappa_grid.clone(),
            rho_grid: raw.rho_grid.clone(),
            batch_lo: raw.batch_lo,
            batch_hi: raw.batch_hi,
            batch_ys_offset: raw.batch_ys_offset,
            batch_n: raw.batch_n,
        })
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_raw(&RawConfig::load(path)?)
    }

    /// The reference scenario.
    pub fn reference() -> Self {
        Self::from_raw(&RawConfig::default())
            .expect("built-in reference configuration must validate")
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            sample_dt: self.sample_dt,
            substep: self.substep,
            sample_true_output: self.sample_true_output,
        }
    }

    /// Guaranteed gradient steps per sampling interval.
    pub fn ell(&self) -> Result<u32> {
        self.timers.ell()
    }
}
