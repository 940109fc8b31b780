//! The sampled-controller hybrid automaton and its event-driven simulator.
//!
//! The closed loop is modeled as a hybrid system with state
//! zeta = (x, u, y_s, z, tau_c, tau_g, tau_d) in R^21:
//!
//! * `x`    — plant state (relative position and velocity),
//! * `u`    — input currently applied to the plant,
//! * `y_s`  — most recent output sample the optimizer works against,
//! * `z`    — optimizer iterate,
//! * `tau_c` — countdown until the next input switch / output sample,
//! * `tau_g` — countdown until the next gradient step,
//! * `tau_d` — wall-clock used to evaluate the disturbance.
//!
//! The state flows while both timers are positive and jumps when either
//! reaches zero: a gradient step when `tau_g` expires, an input switch and
//! fresh output sample when `tau_c` expires, both when they expire together.
//! Timer dynamics are affine, so event times are computed exactly and no
//! zero-crossing detection is needed. A perturbed variant widens the timer
//! windows, offsets the resets, and skews the timer rates; the perturbation
//! magnitude is the largest of the five knobs.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::disturbance::Disturbance;
use crate::dynamics::{Mat6, Mat63, StabilizedPlant, Vec3, Vec6};
use crate::error::{Error, Result};
use crate::objective::{gd_step, QuadObjective};

/// Full state of the hybrid closed loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridState {
    pub x: Vec6,
    pub u: Vec3,
    pub y_s: Vec6,
    pub z: Vec3,
    pub tau_c: f64,
    pub tau_g: f64,
    pub tau_d: f64,
}

impl HybridState {
    /// Flatten to the 21-vector (x, u, y_s, z, tau_c, tau_g, tau_d).
    pub fn to_array(&self) -> [f64; 21] {
        let mut a = [0.0; 21];
        a[..6].copy_from_slice(self.x.as_slice());
        a[6..9].copy_from_slice(self.u.as_slice());
        a[9..15].copy_from_slice(self.y_s.as_slice());
        a[15..18].copy_from_slice(self.z.as_slice());
        a[18] = self.tau_c;
        a[19] = self.tau_g;
        a[20] = self.tau_d;
        a
    }

    pub fn from_array(a: &[f64; 21]) -> Self {
        Self {
            x: Vec6::from_column_slice(&a[..6]),
            u: Vec3::from_column_slice(&a[6..9]),
            y_s: Vec6::from_column_slice(&a[9..15]),
            z: Vec3::from_column_slice(&a[15..18]),
            tau_c: a[18],
            tau_g: a[19],
            tau_d: a[20],
        }
    }

    /// Euclidean distance between two full states.
    pub fn distance(&self, other: &Self) -> f64 {
        let a = self.to_array();
        let b = other.to_array();
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

/// How the sampling timer is reset after an input switch. The model allows
/// any value in the configured interval; the policy pins the choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResetPolicy {
    /// Always the top of the interval (deterministic default).
    FixedMax,
    /// Always the bottom of the interval.
    FixedMin,
    /// Midpoint of the interval.
    Midpoint,
    /// Uniform draw from the interval; all draws derive from this seed, so a
    /// run is reproducible bit-for-bit.
    UniformRandom { seed: u64 },
}

/// Order in which the two maps apply when both timers expire simultaneously.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case3Order {
    G1ThenG2,
    G2ThenG1,
}

/// Timer windows and jump sequencing options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimerConfig {
    /// Shortest admissible interval between input switches, s.
    pub tau_c_min: f64,
    /// Longest admissible interval between input switches, s.
    pub tau_c_max: f64,
    /// Interval between gradient steps, s.
    pub tau_g_comp: f64,
    pub reset_policy: ResetPolicy,
    pub case3_order: Case3Order,
}

impl Default for TimerConfig {
    fn default() -> Self {
        Self {
            tau_c_min: 1.5,
            tau_c_max: 2.0,
            tau_g_comp: 0.5,
            reset_policy: ResetPolicy::FixedMax,
            case3_order: Case3Order::G2ThenG1,
        }
    }
}

impl TimerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_c_min > 0.0 && self.tau_c_min <= self.tau_c_max) {
            return Err(Error::Config(format!(
                "need 0 < tau_c_min <= tau_c_max, got [{}, {}]",
                self.tau_c_min, self.tau_c_max
            )));
        }
        if !(self.tau_g_comp > 0.0) {
            return Err(Error::Config(format!(
                "tau_g_comp must be positive, got {}",
                self.tau_g_comp
            )));
        }
        self.ell()?;
        Ok(())
    }

    /// Guaranteed number of gradient steps per sampling interval:
    /// floor(tau_c_min / tau_g_comp), required to be at least 1.
    pub fn ell(&self) -> Result<u32> {
        let ell = (self.tau_c_min / self.tau_g_comp).floor();
        if ell < 1.0 {
            return Err(Error::Config(format!(
                "sampling interval admits no guaranteed gradient step: \
                 floor({} / {}) = 0",
                self.tau_c_min, self.tau_g_comp
            )));
        }
        Ok(ell as u32)
    }
}

/// Free-standing form of [`TimerConfig::ell`].
pub fn assumption_ell(cfg: &TimerConfig) -> Result<u32> {
    cfg.ell()
}

/// Timing perturbation: offsets on the three timer constants plus rate skews
/// on the two countdowns. The scalar size of the perturbation is the largest
/// of the five entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationRho {
    pub theta_g_comp: f64,
    pub theta_c_min: f64,
    pub theta_c_max: f64,
    pub kappa_c: f64,
    pub kappa_g: f64,
}

impl PerturbationRho {
    pub fn zero() -> Self {
        Self {
            theta_g_comp: 0.0,
            theta_c_min: 0.0,
            theta_c_max: 0.0,
            kappa_c: 0.0,
            kappa_g: 0.0,
        }
    }

    /// The common sweep shape: one offset applied to all three timer
    /// constants and one rate skew applied to both countdowns.
    pub fn uniform(theta: f64, kappa: f64) -> Self {
        Self {
            theta_g_comp: theta,
            theta_c_min: theta,
            theta_c_max: theta,
            kappa_c: kappa,
            kappa_g: kappa,
        }
    }

    pub fn scaled(&self, delta: f64) -> Self {
        Self {
            theta_g_comp: delta * self.theta_g_comp,
            theta_c_min: delta * self.theta_c_min,
            theta_c_max: delta * self.theta_c_max,
            kappa_c: delta * self.kappa_c,
            kappa_g: delta * self.kappa_g,
        }
    }

    /// Scalar perturbation size: the maximum of the five entries.
    pub fn rho(&self) -> f64 {
        self.theta_g_comp
            .max(self.theta_c_min)
            .max(self.theta_c_max)
            .max(self.kappa_c)
            .max(self.kappa_g)
    }

    pub fn validate(&self, cfg: &TimerConfig) -> Result<()> {
        if !(self.theta_g_comp > -cfg.tau_g_comp) {
            return Err(Error::Config(format!(
                "theta_g_comp = {} would erase the gradient timer ({})",
                self.theta_g_comp, cfg.tau_g_comp
            )));
        }
        if !(self.theta_c_min > -cfg.tau_c_min && self.theta_c_max > -cfg.tau_c_max) {
            return Err(Error::Config(
                "sampling-timer offsets must keep the reset interval positive".into(),
            ));
        }
        if !(self.kappa_c < 1.0 && self.kappa_g < 1.0) {
            return Err(Error::Config(
                "rate skews must stay below 1 (timers must still count down)".into(),
            ));
        }
        let lo = cfg.tau_c_min + self.theta_c_min;
        let hi = cfg.tau_c_max + self.theta_c_max;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::Config(format!(
                "perturbed reset interval is empty: [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

fn theta(rho: Option<&PerturbationRho>) -> PerturbationRho {
    rho.copied().unwrap_or_else(PerturbationRho::zero)
}

/// Which jump fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpCase {
    /// Gradient step (gradient timer expired).
    CaseI,
    /// Input switch and output sample (sampling timer expired).
    CaseII,
    /// Both timers expired together.
    CaseIII,
}

impl JumpCase {
    pub fn label(&self) -> &'static str {
        match self {
            Self::CaseI => "i",
            Self::CaseII => "ii",
            Self::CaseIII => "iii",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "i" => Some(Self::CaseI),
            "ii" => Some(Self::CaseII),
            "iii" => Some(Self::CaseIII),
            _ => None,
        }
    }
}

impl fmt::Display for JumpCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Membership in the flow set: both timers inside their (possibly widened)
/// windows.
pub fn in_flow_set(s: &HybridState, cfg: &TimerConfig, rho: Option<&PerturbationRho>) -> bool {
    let r = theta(rho);
    s.tau_c >= 0.0
        && s.tau_c <= cfg.tau_c_max + r.theta_c_max
        && s.tau_g >= 0.0
        && s.tau_g <= cfg.tau_g_comp + r.theta_g_comp
}

/// Membership in the jump set: either timer exactly at zero. The simulator
/// lands on events exactly, so exact comparison is intended.
pub fn in_jump_set(s: &HybridState) -> bool {
    s.tau_c == 0.0 || s.tau_g == 0.0
}

/// Pull a state's timers into the (possibly offset) flow windows.
///
/// A reference initial condition chosen for the unperturbed windows can sit
/// above a window that a negative offset has narrowed. Flowing never raises
/// a timer and every reset lands inside the window, so the windows are
/// forward-invariant: the initial instant is the only place an adjustment
/// is ever needed, and only downward.
pub fn clamp_timers(
    s: &HybridState,
    cfg: &TimerConfig,
    rho: Option<&PerturbationRho>,
) -> HybridState {
    let r = theta(rho);
    let mut out = *s;
    out.tau_c = out.tau_c.min(cfg.tau_c_max + r.theta_c_max).max(0.0);
    out.tau_g = out.tau_g.min(cfg.tau_g_comp + r.theta_g_comp).max(0.0);
    out
}

/// Identify which jump applies at a jump-set state.
pub fn classify_jump(s: &HybridState) -> Result<JumpCase> {
    match (s.tau_c == 0.0, s.tau_g == 0.0) {
        (true, true) => Ok(JumpCase::CaseIII),
        (false, true) => Ok(JumpCase::CaseI),
        (true, false) => Ok(JumpCase::CaseII),
        (false, false) => Err(Error::InvalidArg(format!(
            "state is not in the jump set (tau_c = {}, tau_g = {})",
            s.tau_c, s.tau_g
        ))),
    }
}

/// Propagation matrices for one fixed substep, reused across a whole run.
struct StepCache {
    h: f64,
    /// exp(A h)
    e_ah: Mat6,
    /// exp(A h/2)
    e_ah2: Mat6,
    /// Integral of exp(A (h - s)) B ds over [0, h]: the constant-input term.
    phi_u: Mat63,
}

impl StepCache {
    fn new(plant: &StabilizedPlant, h: f64) -> Self {
        let e_ah = (plant.a_stab * h).exp();
        let e_ah2 = (plant.a_stab * (0.5 * h)).exp();
        let phi_u = plant.a_stab_inv * (e_ah - Mat6::identity()) * plant.b;
        Self {
            h,
            e_ah,
            e_ah2,
            phi_u,
        }
    }
}

/// Advance `x` by one substep of length `cache.h` starting at disturbance
/// clock `td`: exact matrix-exponential propagation of the homogeneous and
/// constant-input parts plus Simpson quadrature for the disturbance
/// convolution.
fn substep_x(
    x: &Vec6,
    u: &Vec3,
    td: f64,
    plant: &StabilizedPlant,
    dist: &Disturbance,
    cache: &StepCache,
) -> Result<Vec6> {
    let h = cache.h;
    let forcing = |t: f64| -> Result<Vec6> { Ok(-(plant.b * (plant.k * dist.eval(t)?))) };
    let g0 = forcing(td)?;
    let g1 = forcing(td + 0.5 * h)?;
    let g2 = forcing(td + h)?;
    let quad = (h / 6.0) * (cache.e_ah * g0 + 4.0 * (cache.e_ah2 * g1) + g2);
    Ok(cache.e_ah * x + cache.phi_u * u + quad)
}

fn flow_with_cache(
    s: &HybridState,
    dt: f64,
    plant: &StabilizedPlant,
    dist: &Disturbance,
    rho: Option<&PerturbationRho>,
    cache: &StepCache,
) -> Result<HybridState> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArg(format!(
            "flow duration must be nonnegative, got {dt}"
        )));
    }
    let r = theta(rho);
    let mut out = *s;
    if dt == 0.0 {
        return Ok(out);
    }

    let h = cache.h;
    let n = (dt / h).floor() as u64;
    let rem = dt - n as f64 * h;
    let mut x = s.x;
    let mut td = s.tau_d;
    for _ in 0..n {
        x = substep_x(&x, &s.u, td, plant, dist, cache)?;
        td += h;
    }
    if rem > 1e-14 {
        let tail = StepCache::new(plant, rem);
        x = substep_x(&x, &s.u, td, plant, dist, &tail)?;
    }

    out.x = x;
    out.tau_c = s.tau_c - dt * (1.0 - r.kappa_c);
    out.tau_g = s.tau_g - dt * (1.0 - r.kappa_g);
    out.tau_d = s.tau_d + dt;
    Ok(out)
}

/// Flow the state for `dt` seconds: the plant state advances under the held
/// input and the disturbance feed-through, the countdowns drain (at skewed
/// rates when perturbed), and the disturbance clock advances at unit rate.
/// `substep` sets the quadrature step for the disturbance term.
pub fn flow(
    s: &HybridState,
    dt: f64,
    plant: &StabilizedPlant,
    dist: &Disturbance,
    rho: Option<&PerturbationRho>,
    substep: f64,
) -> Result<HybridState> {
    if !(substep > 0.0) {
        return Err(Error::InvalidArg(format!(
            "quadrature substep must be positive, got {substep}"
        )));
    }
    flow_with_cache(s, dt, plant, dist, rho, &StepCache::new(plant, substep))
}

/// Gradient-step jump: the optimizer iterate advances one projected
/// gradient step against the held output sample and the gradient timer
/// resets. Everything else is unchanged.
pub fn jump_g1(
    s: &HybridState,
    obj: &QuadObjective,
    plant: &StabilizedPlant,
    cfg: &TimerConfig,
    rho: Option<&PerturbationRho>,
) -> HybridState {
    let mut out = *s;
    out.z = gd_step(obj, plant, &s.z, &s.y_s);
    out.tau_g = cfg.tau_g_comp + theta(rho).theta_g_comp;
    out
}

fn draw_tau_c(
    cfg: &TimerConfig,
    rho: Option<&PerturbationRho>,
    rng: Option<&mut ChaCha8Rng>,
) -> f64 {
    let r = theta(rho);
    let lo = cfg.tau_c_min + r.theta_c_min;
    let hi = cfg.tau_c_max + r.theta_c_max;
    match cfg.reset_policy {
        ResetPolicy::FixedMax => hi,
        ResetPolicy::FixedMin => lo,
        ResetPolicy::Midpoint => 0.5 * (lo + hi),
        ResetPolicy::UniformRandom { seed } => match rng {
            Some(rng) => rng.gen_range(lo..=hi),
            // Standalone call without run-owned state: single seeded draw.
            None => ChaCha8Rng::seed_from_u64(seed).gen_range(lo..=hi),
        },
    }
}

/// Input-switch jump: a fresh output sample is taken with the input still
/// held at its pre-jump value, the optimizer iterate becomes the applied
/// input, and the sampling timer resets into its interval per the policy.
///
/// The sample is the steady-state prediction H u + d by default;
/// `sample_true_output` samples the physical state x + d instead, exposing
/// the steady-state approximation error.
#[allow(clippy::too_many_arguments)]
pub fn jump_g2(
    s: &HybridState,
    plant: &StabilizedPlant,
    dist: &Disturbance,
    cfg: &TimerConfig,
    rho: Option<&PerturbationRho>,
    rng: Option<&mut ChaCha8Rng>,
    sample_true_output: bool,
) -> Result<HybridState> {
    let d = dist.eval(s.tau_d)?;
    let mut out = *s;
    out.y_s = if sample_true_output {
        s.x + d
    } else {
        plant.h * s.u + d
    };
    out.u = s.z;
    out.tau_c = draw_tau_c(cfg, rho, rng);
    Ok(out)
}

/// Apply the jump map at a jump-set state: the gradient step, the input
/// switch, or — when both timers expire together — both in the configured
/// order.
#[allow(clippy::too_many_arguments)]
pub fn jump(
    s: &HybridState,
    obj: &QuadObjective,
    plant: &StabilizedPlant,
    dist: &Disturbance,
    cfg: &TimerConfig,
    rho: Option<&PerturbationRho>,
    mut rng: Option<&mut ChaCha8Rng>,
    sample_true_output: bool,
) -> Result<HybridState> {
    match classify_jump(s)? {
        JumpCase::CaseI => Ok(jump_g1(s, obj, plant, cfg, rho)),
        JumpCase::CaseII => jump_g2(s, plant, dist, cfg, rho, rng.as_deref_mut(), sample_true_output),
        JumpCase::CaseIII => {
            let (first_is_g1, _) = match cfg.case3_order {
                Case3Order::G1ThenG2 => (true, ()),
                Case3Order::G2ThenG1 => (false, ()),
            };
            let mid = if first_is_g1 {
                jump_g1(s, obj, plant, cfg, rho)
            } else {
                jump_g2(s, plant, dist, cfg, rho, rng.as_deref_mut(), sample_true_output)?
            };
            if first_is_g1 {
                jump_g2(&mid, plant, dist, cfg, rho, rng, sample_true_output)
            } else {
                Ok(jump_g1(&mid, obj, plant, cfg, rho))
            }
        }
    }
}

/// Analytic ceiling on jumps per one-second window for a (possibly
/// perturbed) timer configuration.
pub fn jump_rate_bound(cfg: &TimerConfig, rho: Option<&PerturbationRho>) -> usize {
    let r = theta(rho);
    let g_per_sec = (1.0 - r.kappa_g) / (cfg.tau_g_comp + r.theta_g_comp);
    let c_per_sec = (1.0 - r.kappa_c) / (cfg.tau_c_min + r.theta_c_min);
    g_per_sec.ceil() as usize + c_per_sec.ceil() as usize + 2
}

/// One recorded point of a hybrid trajectory. `case` is set on rows written
/// immediately after a jump and empty on flow samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub j: u64,
    pub state: HybridState,
    pub case: Option<JumpCase>,
}

/// A jump event: time, post-jump index, and which map fired. Simultaneous
/// expiries produce two consecutive records at the same t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpRecord {
    pub t: f64,
    pub j: u64,
    pub case: JumpCase,
}

/// Recorded run: samples on a fixed grid plus snapshots straddling every
/// jump, and the jump-event log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HybridTrajectory {
    pub samples: Vec<Sample>,
    pub jumps: Vec<JumpRecord>,
}

impl HybridTrajectory {
    pub fn final_sample(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Largest t + j over the recorded domain.
    pub fn max_hybrid_time(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.t + s.j as f64)
            .fold(0.0, f64::max)
    }

    pub fn count_case(&self, case: JumpCase) -> usize {
        self.jumps.iter().filter(|r| r.case == case).count()
    }

    const CSV_HEADER: [&'static str; 24] = [
        "t", "j", "case", "x1", "x2", "x3", "x4", "x5", "x6", "u1", "u2", "u3", "ys1", "ys2",
        "ys3", "ys4", "ys5", "ys6", "z1", "z2", "z3", "tau_c", "tau_g", "tau_d",
    ];

    /// Write the run as CSV, one row per sample; jump rows carry the case
    /// label. Floats are written in shortest round-trip form.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(Self::CSV_HEADER)?;
        for s in &self.samples {
            let mut rec: Vec<String> = Vec::with_capacity(24);
            rec.push(format!("{}", s.t));
            rec.push(format!("{}", s.j));
            rec.push(s.case.map_or(String::new(), |c| c.label().to_string()));
            for v in s.state.to_array() {
                rec.push(format!("{v}"));
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Parse a trajectory back from its CSV form; jump records are rebuilt
    /// from the rows carrying case labels.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        {
            let got = rdr.headers()?.clone();
            if got.len() != Self::CSV_HEADER.len()
                || got.iter().zip(Self::CSV_HEADER.iter()).any(|(a, b)| a != *b)
            {
                return Err(Error::Config(format!(
                    "unexpected trajectory CSV header: {got:?}"
                )));
            }
        }
        let mut out = Self::default();
        for row in rdr.records() {
            let row = row?;
            let field = |i: usize| -> Result<f64> {
                row.get(i)
                    .ok_or_else(|| Error::Config("short trajectory CSV row".into()))?
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad float in trajectory CSV: {e}")))
            };
            let t = field(0)?;
            let j = field(1)? as u64;
            let case_str = row.get(2).unwrap_or("");
            let case = if case_str.is_empty() {
                None
            } else {
                Some(JumpCase::from_label(case_str).ok_or_else(|| {
                    Error::Config(format!("unknown jump case label {case_str:?}"))
                })?)
            };
            let mut a = [0.0; 21];
            for (k, slot) in a.iter_mut().enumerate() {
                *slot = field(3 + k)?;
            }
            let sample = Sample {
                t,
                j,
                state: HybridState::from_array(&a),
                case,
            };
            if let Some(c) = case {
                out.jumps.push(JumpRecord { t, j, case: c });
            }
            out.samples.push(sample);
        }
        Ok(out)
    }

    pub fn read_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Options shared by every simulation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Spacing of the recording grid, s.
    pub sample_dt: f64,
    /// Quadrature substep for the disturbance convolution, s.
    pub substep: f64,
    /// Sample the physical state instead of the steady-state prediction.
    pub sample_true_output: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            sample_dt: 0.5,
            substep: 0.01,
            sample_true_output: false,
        }
    }
}

/// Run the closed loop from `init` until continuous time reaches
/// `horizon_t`, recording grid samples and every jump.
///
/// The loop alternates exact flows to the next event (timer expiry, grid
/// point, or horizon) with jump applications. A sliding-window guard aborts
/// if the jump rate exceeds ten times the analytic ceiling, which cannot
/// happen with valid configurations and protects against misconfigured
/// perturbations.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    init: &HybridState,
    horizon_t: f64,
    obj: &QuadObjective,
    plant: &StabilizedPlant,
    dist: &Disturbance,
    cfg: &TimerConfig,
    rho: Option<&PerturbationRho>,
    opts: &SimOptions,
) -> Result<HybridTrajectory> {
    cfg.validate()?;
    if let Some(r) = rho {
        r.validate(cfg)?;
    }
    if !(horizon_t > 0.0 && horizon_t.is_finite()) {
        return Err(Error::InvalidArg(format!(
            "horizon must be positive, got {horizon_t}"
        )));
    }
    if !(opts.sample_dt > 0.0 && opts.substep > 0.0) {
        return Err(Error::InvalidArg(
            "sample_dt and substep must be positive".into(),
        ));
    }
    if !(in_flow_set(init, cfg, rho) || in_jump_set(init)) {
        return Err(Error::InvalidArg(
            "initial state lies outside both the flow and jump sets".into(),
        ));
    }

    let r = theta(rho);
    let rate_c = 1.0 - r.kappa_c;
    let rate_g = 1.0 - r.kappa_g;
    let cache = StepCache::new(plant, opts.substep);
    let mut rng = match cfg.reset_policy {
        ResetPolicy::UniformRandom { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };

    let guard_limit = 10 * jump_rate_bound(cfg, rho);
    let mut recent_jumps: VecDeque<f64> = VecDeque::new();

    let mut traj = HybridTrajectory::default();
    let mut s = *init;
    let mut t = 0.0f64;
    let mut j = 0u64;
    traj.samples.push(Sample {
        t,
        j,
        state: s,
        case: None,
    });
    let mut next_grid = opts.sample_dt;

    loop {
        if in_jump_set(&s) {
            // Snapshot the pre-jump state unless this instant is already
            // recorded (grid collision or consecutive events).
            let dup = traj
                .samples
                .last()
                .is_some_and(|last| last.t == t && last.j == j && last.state == s);
            if !dup {
                traj.samples.push(Sample {
                    t,
                    j,
                    state: s,
                    case: None,
                });
            }

            let case = classify_jump(&s)?;
            let sub_jumps: u32 = if case == JumpCase::CaseIII { 2 } else { 1 };
            for step in 0..sub_jumps {
                s = match case {
                    JumpCase::CaseI => jump_g1(&s, obj, plant, cfg, rho),
                    JumpCase::CaseII => {
                        jump_g2(&s, plant, dist, cfg, rho, rng.as_mut(), opts.sample_true_output)?
                    }
                    JumpCase::CaseIII => {
                        let g1_first = cfg.case3_order == Case3Order::G1ThenG2;
                        if (step == 0) == g1_first {
                            jump_g1(&s, obj, plant, cfg, rho)
                        } else {
                            jump_g2(
                                &s,
                                plant,
                                dist,
                                cfg,
                                rho,
                                rng.as_mut(),
                                opts.sample_true_output,
                            )?
                        }
                    }
                };
                j += 1;
                traj.jumps.push(JumpRecord { t, j, case });
                traj.samples.push(Sample {
                    t,
                    j,
                    state: s,
                    case: Some(case),
                });
                recent_jumps.push_back(t);
            }
            while recent_jumps.front().is_some_and(|f| *f < t - 1.0) {
                recent_jumps.pop_front();
            }
            if recent_jumps.len() > guard_limit {
                return Err(Error::ZenoGuard {
                    observed: recent_jumps.len(),
                    limit: guard_limit,
                });
            }
            continue;
        }

        if t >= horizon_t - 1e-12 {
            break;
        }

        let dt_c = s.tau_c / rate_c;
        let dt_g = s.tau_g / rate_g;
        let dt = dt_c
            .min(dt_g)
            .min(next_grid - t)
            .min(horizon_t - t);
        debug_assert!(dt > 0.0, "event stepping stalled at t = {t}");

        s = flow_with_cache(&s, dt, plant, dist, rho, &cache)?;
        t += dt;
        // Land exactly on expiring timers; clear rounding dust on the rest.
        s.tau_c = if dt >= dt_c - 1e-12 { 0.0 } else { s.tau_c.max(0.0) };
        s.tau_g = if dt >= dt_g - 1e-12 { 0.0 } else { s.tau_g.max(0.0) };

        if t >= next_grid - 1e-9 {
            traj.samples.push(Sample {
                t,
                j,
                state: s,
                case: None,
            });
            next_grid += opts.sample_dt;
        }
    }

    let last = traj.samples.last();
    if last.is_none_or(|l| l.t != t || l.j != j) {
        traj.samples.push(Sample {
            t,
            j,
            state: s,
            case: None,
        });
    }
    Ok(traj)
}
