//! Analytical error envelopes and trajectory diagnostics.
//!
//! The closed loop is expected to converge to a moving setpoint — the
//! steady state induced by the currently optimal input. This module
//! measures that rendezvous error on simulated runs, evaluates the
//! four-term analytic envelopes that bound it, checks the input-optimality
//! gap epoch by epoch, evaluates the eigenvalue-selection inequalities that
//! size the gains for a target accuracy, and quantifies how far two hybrid
//! runs drift apart in reparametrized time.

use std::path::Path;

use crate::disturbance::Disturbance;
use crate::dynamics::{EigenSpec, StabilizedPlant, Vec3};
use crate::error::{Error, Result};
use crate::hybrid::{HybridTrajectory, JumpCase, TimerConfig};
use crate::objective::{
    rendezvous_point_for_input, solve_frozen_sample_input, solve_optimal_input_warm,
    ConvexityConstants, QuadObjective,
};

/// Largest multiplicity among the configured closed-loop eigenvalues.
pub fn mu_max(spec: &EigenSpec) -> u32 {
    spec.max_multiplicity()
}

/// Every constant appearing in the convergence envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    /// Largest eigenvalue multiplicity.
    pub mu_max: u32,
    /// |lambda| of the slowest closed-loop mode.
    pub lam_slow: f64,
    /// |lambda| of the fastest closed-loop mode.
    pub lam_fast: f64,
    /// Euclidean diameter of the input box.
    pub d_u: f64,
    /// Chaser mass, kg.
    pub m_c: f64,
    /// Per-step contraction factor of the gradient iteration.
    pub q: f64,
    /// Guaranteed gradient steps per sampling interval.
    pub ell: u32,
    /// Bound on the disturbance derivative norm.
    pub d_bar: f64,
    /// Operator 2-norm of the closed-loop matrix inverse.
    pub norm_a_inv: f64,
    /// Operator 2-norm of the feedback gain.
    pub norm_k: f64,
    pub tau_c_min: f64,
    pub tau_c_max: f64,
}

impl BoundParams {
    /// Validating constructor: the envelopes are only meaningful when every
    /// scale is positive, the contraction factor lies in (0,1), and at
    /// least one gradient step is guaranteed per sampling interval.
    /// `d_bar` may be zero (disturbance constant or absent).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mu_max: u32,
        lam_slow: f64,
        lam_fast: f64,
        d_u: f64,
        m_c: f64,
        q: f64,
        ell: u32,
        d_bar: f64,
        norm_a_inv: f64,
        norm_k: f64,
        tau_c_min: f64,
        tau_c_max: f64,
    ) -> Result<Self> {
        let p = Self {
            mu_max,
            lam_slow,
            lam_fast,
            d_u,
            m_c,
            q,
            ell,
            d_bar,
            norm_a_inv,
            norm_k,
            tau_c_min,
            tau_c_max,
        };
        p.validate()?;
        Ok(p)
    }

    /// Assemble the envelope constants from the model pieces of a run.
    pub fn from_run(
        spec: &EigenSpec,
        obj: &QuadObjective,
        plant: &StabilizedPlant,
        dist: &Disturbance,
        cfg: &TimerConfig,
        constants: &ConvexityConstants,
    ) -> Result<Self> {
        Self::new(
            spec.max_multiplicity(),
            spec.lambda_slow().abs(),
            spec.lambda_fast().abs(),
            obj.box_u.diameter(),
            plant.params.m_c,
            constants.q,
            cfg.ell()?,
            dist.derivative_bound(),
            plant.norm_a_inv,
            plant.norm_k,
            cfg.tau_c_min,
            cfg.tau_c_max,
        )
    }

    /// Build without range validation. Lets callers evaluate the envelope
    /// formulas for out-of-hypothesis configurations (q outside (0,1)) so
    /// the resulting numbers can be reported honestly; such envelopes carry
    /// no guarantee.
    #[allow(clippy::too_many_arguments)]
    pub fn new_unchecked(
        mu_max: u32,
        lam_slow: f64,
        lam_fast: f64,
        d_u: f64,
        m_c: f64,
        q: f64,
        ell: u32,
        d_bar: f64,
        norm_a_inv: f64,
        norm_k: f64,
        tau_c_min: f64,
        tau_c_max: f64,
    ) -> Self {
        Self {
            mu_max,
            lam_slow,
            lam_fast,
            d_u,
            m_c,
            q,
            ell,
            d_bar,
            norm_a_inv,
            norm_k,
            tau_c_min,
            tau_c_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("lam_slow", self.lam_slow),
            ("lam_fast", self.lam_fast),
            ("d_u", self.d_u),
            ("m_c", self.m_c),
            ("norm_a_inv", self.norm_a_inv),
            ("norm_k", self.norm_k),
            ("tau_c_min", self.tau_c_min),
            ("tau_c_max", self.tau_c_max),
        ];
        for (name, v) in positives {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArg(format!(
                    "envelope constant {name} must be positive, got {v}"
                )));
            }
        }
        if self.mu_max < 1 || self.mu_max > 6 {
            return Err(Error::InvalidArg(format!(
                "mu_max must lie in 1..=6, got {}",
                self.mu_max
            )));
        }
        if !(self.d_bar >= 0.0 && self.d_bar.is_finite()) {
            return Err(Error::InvalidArg(format!(
                "d_bar must be nonnegative, got {}",
                self.d_bar
            )));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidArg(format!(
                "contraction factor q must lie in (0,1), got {}",
                self.q
            )));
        }
        if self.ell < 1 {
            return Err(Error::InvalidArg("ell must be at least 1".into()));
        }
        if self.tau_c_min > self.tau_c_max {
            return Err(Error::InvalidArg(format!(
                "tau_c_min {} exceeds tau_c_max {}",
                self.tau_c_min, self.tau_c_max
            )));
        }
        Ok(())
    }

    /// Shared prefactor mu_max |l_fast| / (m_c |l_slow|^2).
    fn prefactor(&self) -> f64 {
        self.mu_max as f64 * self.lam_fast / (self.m_c * self.lam_slow * self.lam_slow)
    }
}

fn envelope(t: f64, p: &BoundParams, init_err: f64, double_tau_exp: bool) -> f64 {
    let mu = p.mu_max as f64;
    let ls = p.lam_slow;
    let decay = (-ls * t).exp();
    let c = p.prefactor();
    let tau_term = if double_tau_exp {
        (-2.0 * ls * p.tau_c_max).exp()
    } else {
        (-ls * p.tau_c_max).exp()
    };
    let t1 = mu * (p.lam_fast / ls) * decay * init_err;
    let t2 = c * p.d_u * (2.0 - tau_term - decay);
    let t3 = c * p.d_u * p.q.powf(p.ell as f64 / 2.0) * (1.0 - (ls * p.tau_c_min).exp() * decay);
    let t4 = c * p.norm_a_inv * p.norm_k * p.d_bar * (1.0 + (mu * p.lam_fast * t - 1.0) * decay);
    t1 + t2 + t3 + t4
}

fn envelope_asymptote(p: &BoundParams, double_tau_exp: bool) -> f64 {
    let tau_term = if double_tau_exp {
        (-2.0 * p.lam_slow * p.tau_c_max).exp()
    } else {
        (-p.lam_slow * p.tau_c_max).exp()
    };
    p.prefactor()
        * (2.0 * p.d_u - p.d_u * tau_term
            + p.d_u * p.q.powf(p.ell as f64 / 2.0)
            + p.norm_a_inv * p.norm_k * p.d_bar)
}

/// Four-term error envelope under sampling-aligned initial conditions.
pub fn prop_bound(t: f64, p: &BoundParams, init_err: f64) -> f64 {
    envelope(t, p, init_err, false)
}

/// Limit of [`prop_bound`] as t grows.
pub fn prop_asymptote(p: &BoundParams) -> f64 {
    envelope_asymptote(p, false)
}

/// Four-term error envelope for arbitrary initial conditions; differs from
/// [`prop_bound`] only in the doubled exponent on the sampling-interval
/// term, making it the larger of the two.
pub fn thm_bound(t: f64, p: &BoundParams, init_err: f64) -> f64 {
    envelope(t, p, init_err, true)
}

/// Limit of [`thm_bound`] as t grows.
pub fn thm_asymptote(p: &BoundParams) -> f64 {
    envelope_asymptote(p, true)
}

/// One point of a rendezvous-error series. `init_err` is the distance from
/// the run's initial plant state to the *current* setpoint, which moves
/// with the disturbance; envelope checks may use it per-sample or frozen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrPoint {
    pub t: f64,
    pub j: u64,
    pub err: f64,
    pub init_err: f64,
}

/// Rendezvous error along a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorSeries {
    pub points: Vec<ErrPoint>,
}

impl ErrorSeries {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn span(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn max_err(&self) -> f64 {
        self.points.iter().map(|p| p.err).fold(0.0, f64::max)
    }
}

/// Distance from each recorded state to the moving setpoint: the steady
/// state under the disturbance-optimal input at that sample's disturbance
/// clock. The per-sample optimum is warm-started from the previous sample.
pub fn rendezvous_error(
    traj: &HybridTrajectory,
    obj: &QuadObjective,
    plant: &StabilizedPlant,
    dist: &Disturbance,
    tol: f64,
) -> Result<ErrorSeries> {
    if traj.samples.is_empty() {
        return Err(Error::InsufficientData("trajectory has no samples".into()));
    }
    let x0 = traj.samples[0].state.x;
    let mut warm: Option<Vec3> = None;
    let mut points = Vec::with_capacity(traj.samples.len());
    for s in &traj.samples {
        let d = dist.eval(s.state.tau_d)?;
        let u_opt = solve_optimal_input_warm(obj, plant, &d, tol, warm.as_ref())?;
        warm = Some(u_opt);
        let setpoint = rendezvous_point_for_input(plant, &u_opt, &d);
        points.push(ErrPoint {
            t: s.t,
            j: s.j,
            err: (s.state.x - setpoint).norm(),
            init_err: (x0 - setpoint).norm(),
        });
    }
    Ok(ErrorSeries { points })
}

/// Supremum of the error over the final `window` seconds — the empirical
/// stand-in for the limiting error. The series must span at least twice the
/// window so a transient cannot masquerade as the limit.
pub fn asymptotic_error(series: &ErrorSeries, window: f64) -> Result<f64> {
    if !(window > 0.0) {
        return Err(Error::InvalidArg(format!(
            "window must be positive, got {window}"
        )));
    }
    if series.span() < 2.0 * window {
        return Err(Error::InsufficientData(format!(
            "series spans {:.3} s, need at least twice the {window} s window",
            series.span()
        )));
    }
    let t_end = series.points.last().unwrap().t;
    Ok(series
        .points
        .iter()
        .filter(|p| p.t >= t_end - window)
        .map(|p| p.err)
        .fold(0.0, f64::max))
}

/// Outcome of checking a run against the global envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeReport {
    pub samples: usize,
    pub violations: usize,
    /// Smallest thm_bound(t) - err(t) over the series.
    pub min_margin: f64,
    /// Time at which the margin is smallest.
    pub worst_t: f64,
}

impl EnvelopeReport {
    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

/// Check err(t) <= thm_bound(t) pointwise. `frozen_init_err` pins the
/// initial-error factor to one value; by default it tracks the moving
/// setpoint sample by sample.
pub fn check_envelope(
    series: &ErrorSeries,
    p: &BoundParams,
    frozen_init_err: Option<f64>,
) -> EnvelopeReport {
    let mut report = EnvelopeReport {
        samples: series.len(),
        violations: 0,
        min_margin: f64::INFINITY,
        worst_t: 0.0,
    };
    for pt in &series.points {
        let init_err = frozen_init_err.unwrap_or(pt.init_err);
        let margin = thm_bound(pt.t, p, init_err) - pt.err;
        if margin < report.min_margin {
            report.min_margin = margin;
            report.worst_t = pt.t;
        }
        if margin < 0.0 {
            report.violations += 1;
        }
    }
    report
}

/// Write `t,err,prop_bound,thm_bound,margin` rows for a series.
pub fn write_bound_report<P: AsRef<Path>>(
    path: P,
    series: &ErrorSeries,
    p: &BoundParams,
    frozen_init_err: Option<f64>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(std::fs::File::create(path)?);
    wtr.write_record(["t", "err", "prop_bound", "thm_bound", "margin"])?;
    for pt in &series.points {
        let init_err = frozen_init_err.unwrap_or(pt.init_err);
        let pb = prop_bound(pt.t, p, init_err);
        let tb = thm_bound(pt.t, p, init_err);
        wtr.write_record([
            format!("{}", pt.t),
            format!("{}", pt.err),
            format!("{pb}"),
            format!("{tb}"),
            format!("{}", tb - pt.err),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Gap between the input applied at one sampling event and the optimal
/// input for the previous sampling instant, with its contraction bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochGap {
    /// Time of the sampling event whose applied input is being checked.
    pub t: f64,
    pub j: u64,
    /// Gradient steps taken during the preceding inter-sample epoch.
    pub alpha: u32,
    /// Distance from the applied input to the disturbance-optimal input at
    /// the previous sampling instant.
    pub gap: f64,
    /// Distance from the applied input to the fixed point of the frozen
    /// iteration the optimizer was actually contracting toward.
    pub gap_frozen: f64,
    /// Contraction bound q^(alpha/2) * d_U.
    pub bound: f64,
}

/// Epoch-by-epoch input-optimality report.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InputGapReport {
    pub epochs: Vec<EpochGap>,
    /// Epochs where the gap to the time optimum exceeds the bound.
    pub violations: usize,
    /// Epochs where the gap to the frozen target exceeds the bound.
    pub violations_frozen: usize,
}

impl InputGapReport {
    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

/// Boundary events of the input epochs: each input switch, with
/// simultaneous-expiry pairs folded into one event.
struct EpochEvent {
    t: f64,
    j: u64,
    gradient_steps_inside: bool,
}

fn epoch_events(traj: &HybridTrajectory) -> Vec<(usize, EpochEvent)> {
    let mut events = Vec::new();
    let mut skip_next = false;
    for (idx, rec) in traj.jumps.iter().enumerate() {
        if skip_next {
            skip_next = false;
            continue;
        }
        match rec.case {
            JumpCase::CaseII => events.push((
                idx,
                EpochEvent {
                    t: rec.t,
                    j: rec.j,
                    gradient_steps_inside: false,
                },
            )),
            JumpCase::CaseIII => {
                // Two records per simultaneous event; fold them.
                skip_next = true;
                events.push((
                    idx,
                    EpochEvent {
                        t: rec.t,
                        j: rec.j + 1,
                        gradient_steps_inside: true,
                    },
                ));
            }
            JumpCase::CaseI => {}
        }
    }
    events
}

/// For every sampling event after the first, verify that the input applied
/// there lies within the contraction bound of the previous instant's
/// optimal input. The optimum is recomputed independently per epoch; the
/// report also carries the gap to the frozen-sample fixed point, the target
/// the gradient iteration contracts toward between samples.
pub fn input_gap_check(
    traj: &HybridTrajectory,
    obj: &QuadObjective,
    plant: &StabilizedPlant,
    dist: &Disturbance,
    p: &BoundParams,
) -> Result<InputGapReport> {
    let events = epoch_events(traj);
    let mut report = InputGapReport::default();
    if events.len() < 2 {
        return Ok(report);
    }

    // Post-event states indexed by jump record (t, j).
    let state_at = |t: f64, j: u64| {
        traj.samples
            .iter()
            .find(|s| s.t == t && s.j == j)
            .map(|s| s.state)
            .ok_or_else(|| {
                Error::InsufficientData(format!(
                    "trajectory lacks the post-jump sample at (t={t}, j={j})"
                ))
            })
    };

    for w in events.windows(2) {
        let (prev_idx, prev) = (&w[0].0, &w[0].1);
        let (cur_idx, cur) = (&w[1].0, &w[1].1);
        // Gradient steps in the open epoch between the two events, plus any
        // folded into the boundary events themselves.
        let mut alpha: u32 = 0;
        for rec in &traj.jumps[*prev_idx..*cur_idx] {
            if rec.case == JumpCase::CaseI {
                alpha += 1;
            }
        }
        if prev.gradient_steps_inside {
            alpha += 1;
        }

        let prev_state = state_at(prev.t, prev.j)?;
        let cur_state = state_at(cur.t, cur.j)?;
        let d_prev = dist.eval(prev_state.tau_d)?;
        let u_star = solve_optimal_input_warm(obj, plant, &d_prev, 1e-10, Some(&cur_state.u))?;
        let z_frozen = solve_frozen_sample_input(obj, plant, &prev_state.y_s);
        let gap = (cur_state.u - u_star).norm();
        let gap_frozen = (cur_state.u - z_frozen).norm();
        let bound = p.q.powf(alpha as f64 / 2.0) * p.d_u;
        if gap > bound {
            report.violations += 1;
        }
        if gap_frozen > bound {
            report.violations_frozen += 1;
        }
        report.epochs.push(EpochGap {
            t: cur.t,
            j: cur.j,
            alpha,
            gap,
            gap_frozen,
            bound,
        });
    }
    Ok(report)
}

/// Result of the gain-sizing inequalities for a target limiting error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionReport {
    /// Fast-mode magnitude meets its lower bound.
    pub fast_ok: bool,
    /// Slow-mode magnitude meets its lower bound.
    pub slow_ok: bool,
    /// The limiting error implied by the constants (envelope asymptote with
    /// the vanishing exponential dropped).
    pub implied_asymptote: f64,
    /// implied_asymptote <= eta.
    pub implied_ok: bool,
}

impl SelectionReport {
    pub fn satisfied(&self) -> bool {
        self.fast_ok && self.slow_ok
    }
}

/// Check the two eigenvalue lower bounds that guarantee a limiting error of
/// at most `eta`, and evaluate the guarantee they imply.
pub fn eigenvalue_selection_check(
    spec: &EigenSpec,
    eta: f64,
    p: &BoundParams,
) -> Result<SelectionReport> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidArg(format!(
            "target error eta must be positive, got {eta}"
        )));
    }
    let mu = p.mu_max as f64;
    let lam_fast = spec.lambda_fast().abs();
    let lam_slow = spec.lambda_slow().abs();
    let s = 2.0 * p.d_u + p.d_u * p.q.powf(p.ell as f64 / 2.0) + p.norm_a_inv * p.norm_k * p.d_bar;
    let fast_req = mu * s / (p.m_c * eta);
    let slow_req = (mu * s * lam_fast / (p.m_c * eta)).sqrt();
    let implied = mu * lam_fast * s / (p.m_c * lam_slow * lam_slow);
    Ok(SelectionReport {
        fast_ok: lam_fast >= fast_req,
        slow_ok: lam_slow >= slow_req,
        implied_asymptote: implied,
        implied_ok: implied <= eta,
    })
}

/// Per-jump-count bucket of trajectory points, for closeness matching.
struct Buckets {
    by_j: Vec<Vec<(f64, [f64; 21])>>,
}

impl Buckets {
    fn build(traj: &HybridTrajectory) -> Self {
        let max_j = traj.samples.iter().map(|s| s.j).max().unwrap_or(0) as usize;
        let mut by_j: Vec<Vec<(f64, [f64; 21])>> = vec![Vec::new(); max_j + 1];
        for s in &traj.samples {
            by_j[s.j as usize].push((s.t, s.state.to_array()));
        }
        Self { by_j }
    }

    /// Smallest distance from `point` to the polyline of bucket `j`
    /// restricted to times within `eps` of `t`, or None if the bucket has
    /// no coverage there.
    fn min_distance_within(&self, j: usize, t: f64, eps: f64, point: &[f64; 21]) -> Option<f64> {
        let bucket = self.by_j.get(j)?;
        if bucket.is_empty() {
            return None;
        }
        let lo_t = t - eps;
        let hi_t = t + eps;
        // First index with time >= lo_t.
        let start = bucket.partition_point(|(s, _)| *s < lo_t);
        let mut best: Option<f64> = None;
        let mut consider = |d: f64| {
            best = Some(best.map_or(d, |b: f64| b.min(d)));
        };
        // Isolated points inside the window.
        for (s, p) in &bucket[start..] {
            if *s > hi_t {
                break;
            }
            consider(dist21(point, p));
        }
        // Segments straddling the window edges: clip each segment touching
        // the window and take the closest point on the clipped part.
        let seg_start = start.saturating_sub(1);
        for idx in seg_start..bucket.len().saturating_sub(1) {
            let (t0, ref p0) = bucket[idx];
            let (t1, ref p1) = bucket[idx + 1];
            if t0 > hi_t {
                break;
            }
            if t1 < lo_t || t1 <= t0 {
                continue;
            }
            // Clip [t0, t1] to the window, then minimize the quadratic
            // distance over the clipped parameter range.
            let a0 = ((lo_t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            let a1 = ((hi_t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            if a1 <= a0 {
                continue;
            }
            consider(segment_min_distance(point, p0, p1, a0, a1));
        }
        best
    }
}

fn dist21(a: &[f64; 21], b: &[f64; 21]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Minimum distance from `p` to the segment p0 + a*(p1-p0), a in [a0, a1].
fn segment_min_distance(p: &[f64; 21], p0: &[f64; 21], p1: &[f64; 21], a0: f64, a1: f64) -> f64 {
    let mut dir_sq = 0.0;
    let mut proj = 0.0;
    for i in 0..21 {
        let d = p1[i] - p0[i];
        dir_sq += d * d;
        proj += (p[i] - p0[i]) * d;
    }
    let a = if dir_sq > 0.0 {
        (proj / dir_sq).clamp(a0, a1)
    } else {
        a0
    };
    let mut acc = 0.0;
    for i in 0..21 {
        let v = p0[i] + a * (p1[i] - p0[i]) - p[i];
        acc += v * v;
    }
    acc.sqrt()
}

fn direction_holds(a: &HybridTrajectory, b: &Buckets, tau: f64, eps: f64) -> bool {
    for s in &a.samples {
        if s.t + s.j as f64 > tau {
            continue;
        }
        let point = s.state.to_array();
        match b.min_distance_within(s.j as usize, s.t, eps, &point) {
            Some(d) if d < eps => {}
            _ => return false,
        }
    }
    true
}

/// Smallest slack (to 1e-6 resolution) under which the two runs shadow each
/// other over hybrid times t + j <= tau: every recorded point of either run
/// has a point of the other at the same jump count, within the slack in
/// both time and state. Returns infinity if one run's jump structure has no
/// counterpart in the other at any slack.
pub fn tau_eps_closeness(
    traj_a: &HybridTrajectory,
    traj_b: &HybridTrajectory,
    tau: f64,
) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArg(format!(
            "tau must be positive, got {tau}"
        )));
    }
    for (name, tr) in [("first", traj_a), ("second", traj_b)] {
        if tr.max_hybrid_time() < tau {
            return Err(Error::InsufficientData(format!(
                "{name} trajectory spans hybrid time {:.3}, short of tau = {tau}",
                tr.max_hybrid_time()
            )));
        }
    }
    let ba = Buckets::build(traj_a);
    let bb = Buckets::build(traj_b);
    let feasible = |eps: f64| {
        direction_holds(traj_a, &bb, tau, eps) && direction_holds(traj_b, &ba, tau, eps)
    };

    let mut hi = 1.0;
    while !feasible(hi) {
        hi *= 2.0;
        if hi > 1e9 {
            return Ok(f64::INFINITY);
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn synthetic_params() -> BoundParams {
        BoundParams::new(2, 0.5, 2.0, 1.0, 1.0, 0.25, 3, 0.1, 4.0, 0.5, 1.0, 2.0).unwrap()
    }

    #[test]
    fn envelopes_converge_to_their_asymptotes() {
        let p = synthetic_params();
        assert_relative_eq!(
            prop_bound(200.0, &p, 7.0),
            prop_asymptote(&p),
            max_relative = 1e-9
        );
        assert_relative_eq!(
            thm_bound(200.0, &p, 7.0),
            thm_asymptote(&p),
            max_relative = 1e-9
        );
    }

    #[test]
    fn global_envelope_dominates_the_aligned_one() {
        let p = synthetic_params();
        for k in 0..50 {
            let t = k as f64 * 0.7;
            assert!(thm_bound(t, &p, 1.0) >= prop_bound(t, &p, 1.0));
        }
        assert!(thm_asymptote(&p) >= prop_asymptote(&p));
    }

    #[test]
    fn pure_decay_when_only_the_initial_term_survives() {
        let p = BoundParams::new(2, 0.5, 2.0, 1e-300, 1.0, 0.25, 3, 0.0, 4.0, 0.5, 1.0, 2.0)
            .unwrap();
        let t = 3.0;
        let expect = 2.0 * (2.0 / 0.5) * (-0.5f64 * t).exp();
        assert_relative_eq!(thm_bound(t, &p, 1.0), expect, max_relative = 1e-9);
    }

    #[test]
    fn params_reject_invalid_contraction() {
        assert!(BoundParams::new(2, 0.5, 2.0, 1.0, 1.0, 1.5, 3, 0.1, 4.0, 0.5, 1.0, 2.0).is_err());
        assert!(BoundParams::new(2, 0.5, 2.0, 1.0, 1.0, 0.25, 0, 0.1, 4.0, 0.5, 1.0, 2.0).is_err());
    }

    #[test]
    fn asymptotic_error_requires_enough_span() {
        let series = ErrorSeries {
            points: (0..=100)
                .map(|k| ErrPoint {
                    t: k as f64,
                    j: 0,
                    err: 3.0,
                    init_err: 1.0,
                })
                .collect(),
        };
        assert_relative_eq!(asymptotic_error(&series, 20.0).unwrap(), 3.0);
        assert!(asymptotic_error(&series, 60.0).is_err());
    }

    #[test]
    fn selection_check_limits() {
        let spec = EigenSpec::new([-0.5, -0.6, -0.7, -0.8, -1.9, -2.0]).unwrap();
        let p = synthetic_params();
        let generous = eigenvalue_selection_check(&spec, 1e9, &p).unwrap();
        assert!(generous.satisfied() && generous.implied_ok);
        let hopeless = eigenvalue_selection_check(&spec, 1e-9, &p).unwrap();
        assert!(!hopeless.satisfied());
    }
}
