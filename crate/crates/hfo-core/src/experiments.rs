//! Experiment campaigns and the command-line interface.
//!
//! Three campaigns: a nominal rendezvous run, a timer-perturbation sweep
//! over a (theta, kappa) grid with a per-rho diagonal aggregate, and a
//! batch of runs from randomized initial conditions. A quadratic
//! response-surface fit summarizes how the limiting error responds to the
//! two perturbation knobs.

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis::{
    asymptotic_error, check_envelope, eigenvalue_selection_check, rendezvous_error,
    write_bound_report, BoundParams, EnvelopeReport, ErrorSeries,
};
use crate::config::{ExperimentConfig, RawConfig};
use crate::disturbance::Disturbance;
use crate::error::{Error, Result};
use crate::hybrid::{
    clamp_timers, simulate, HybridState, HybridTrajectory, JumpCase, PerturbationRho, ResetPolicy,
    TimerConfig,
};
use crate::objective::compute_constants_unchecked;

/// Published reference response table for the perturbation study:
/// (kappa, theta, limiting error in meters) per grid cell.
pub const REFERENCE_RESPONSE_TABLE: [(f64, f64, f64); 15] = [
    (0.1, -0.25, 0.13),
    (0.1, 0.5, 0.14),
    (0.1, 1.0, 0.27),
    (0.3, -0.25, 0.19),
    (0.3, 0.5, 0.15),
    (0.3, 1.0, 0.31),
    (0.5, -0.25, 0.43),
    (0.5, 0.5, 0.27),
    (0.5, 1.0, 1.57),
    (0.7, -0.25, 0.54),
    (0.7, 0.5, 2.23),
    (0.7, 1.0, 4.39),
    (0.9, -0.25, 1.22),
    (0.9, 0.5, 4.32),
    (0.9, 1.0, 3.53),
];

/// Published reference coefficients of the quadratic response fit,
/// ordered (1, kappa, theta, kappa^2, theta^2, kappa*theta).
pub const REFERENCE_RESPONSE_COEF: [f64; 6] = [0.256, -1.62, -0.449, 4.131, -0.023, 3.364];

/// What a run was part of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Nominal,
    GridCell,
    RhoDiagonal,
    RandomIc,
}

/// Summary row for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub label: String,
    pub kind: RunKind,
    pub theta: f64,
    pub kappa: f64,
    pub seed: u64,
    pub init_x: [f64; 6],
    pub asymptotic_err: f64,
    pub jumps_gradient: usize,
    pub jumps_sample: usize,
}

/// Full output of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub record: RunRecord,
    pub traj: HybridTrajectory,
    pub series: ErrorSeries,
}

/// Aggregated campaign output.
#[derive(Debug, Clone, Default)]
pub struct CampaignResult {
    pub outputs: Vec<RunOutput>,
    /// (rho, limiting error) from the diagonal theta = kappa = rho runs.
    pub rho_aggregate: Vec<(f64, f64)>,
    /// Envelope check of the first run, when the contraction hypothesis
    /// held so the envelope constants exist.
    pub envelope: Option<EnvelopeReport>,
    /// Disturbance-reduction ratios of the first run: 1 - err/amplitude
    /// against the per-component amplitude and the vector-norm amplitude.
    pub reduction: Option<(f64, f64)>,
    pub notes: Vec<String>,
}

impl CampaignResult {
    pub fn records(&self) -> impl Iterator<Item = &RunRecord> {
        self.outputs.iter().map(|o| &o.record)
    }

    pub fn max_asymptotic_err(&self) -> f64 {
        self.records()
            .map(|r| r.asymptotic_err)
            .fold(f64::NAN, f64::max)
    }

    /// Records of one kind, in insertion order.
    pub fn records_of(&self, kind: RunKind) -> Vec<&RunRecord> {
        self.records().filter(|r| r.kind == kind).collect()
    }
}

struct RunSpec {
    label: String,
    kind: RunKind,
    theta: f64,
    kappa: f64,
    seed: u64,
    timers: TimerConfig,
    rho: PerturbationRho,
    init: HybridState,
}

fn execute_run(cfg: &ExperimentConfig, spec: &RunSpec) -> Result<RunOutput> {
    let traj = simulate(
        &spec.init,
        cfg.horizon,
        &cfg.obj,
        &cfg.plant,
        &cfg.dist,
        &spec.timers,
        Some(&spec.rho),
        &cfg.sim_options(),
    )?;
    let series = rendezvous_error(&traj, &cfg.obj, &cfg.plant, &cfg.dist, cfg.solver_tol)?;
    let asym = asymptotic_error(&series, cfg.window)?;
    let record = RunRecord {
        label: spec.label.clone(),
        kind: spec.kind,
        theta: spec.theta,
        kappa: spec.kappa,
        seed: spec.seed,
        init_x: [
            spec.init.x[0],
            spec.init.x[1],
            spec.init.x[2],
            spec.init.x[3],
            spec.init.x[4],
            spec.init.x[5],
        ],
        asymptotic_err: asym,
        jumps_gradient: traj.count_case(JumpCase::CaseI),
        jumps_sample: traj.count_case(JumpCase::CaseII),
    };
    Ok(RunOutput {
        record,
        traj,
        series,
    })
}

/// Simulate the reference scenario without timer perturbations and report
/// the limiting error, the disturbance-reduction ratios, and — when the
/// contraction hypothesis holds — the envelope check.
pub fn run_nominal(cfg: &ExperimentConfig) -> Result<CampaignResult> {
    let spec = RunSpec {
        label: "nominal".into(),
        kind: RunKind::Nominal,
        theta: 0.0,
        kappa: 0.0,
        seed: cfg.seed,
        timers: cfg.timers,
        rho: PerturbationRho::zero(),
        init: cfg.init,
    };
    let out = execute_run(cfg, &spec)?;
    let asym = out.record.asymptotic_err;

    let amp_component = match cfg.dist {
        Disturbance::Zero => 0.0,
        Disturbance::Constant { level } => level.abs().max(),
        Disturbance::Sine { amplitude, .. } => amplitude.abs(),
    };
    let amp_norm = cfg.dist.magnitude_bound();
    let reduction = (amp_component > 0.0).then(|| (1.0 - asym / amp_component, 1.0 - asym / amp_norm));

    let mut notes = Vec::new();
    let envelope = match (&cfg.constants, &cfg.stepsize_warning) {
        (Some(c), _) => {
            let p = BoundParams::from_run(&cfg.spec, &cfg.obj, &cfg.plant, &cfg.dist, &cfg.timers, c)?;
            let frozen = cfg
                .freeze_init_err
                .then(|| out.series.points.first().map(|pt| pt.init_err))
                .flatten();
            Some(check_envelope(&out.series, &p, frozen))
        }
        (None, Some(w)) => {
            notes.push(format!("envelope not certified: {w}"));
            None
        }
        (None, None) => None,
    };

    Ok(CampaignResult {
        outputs: vec![out],
        rho_aggregate: Vec::new(),
        envelope,
        reduction,
        notes,
    })
}

/// Sweep timer perturbations over the configured (theta, kappa) grid with
/// seeded random timer resets, and add diagonal theta = kappa = rho runs
/// over the rho grid as the per-rho aggregate.
pub fn run_perturbation_sweep(cfg: &ExperimentConfig) -> Result<CampaignResult> {
    let mut specs = Vec::new();
    let mut idx = 0u64;
    for &theta in &cfg.theta_grid {
        for &kappa in &cfg.kappa_grid {
            let seed = cfg.seed.wrapping_add(1000 + idx);
            let timers = TimerConfig {
                reset_policy: ResetPolicy::UniformRandom { seed },
                ..cfg.timers
            };
            let rho = PerturbationRho::uniform(theta, kappa);
            let init = clamp_timers(&cfg.init, &cfg.timers, Some(&rho));
            specs.push(RunSpec {
                label: format!("theta={theta},kappa={kappa}"),
                kind: RunKind::GridCell,
                theta,
                kappa,
                seed,
                timers,
                rho,
                init,
            });
            idx += 1;
        }
    }
    for (i, &level) in cfg.rho_grid.iter().enumerate() {
        let seed = cfg.seed.wrapping_add(2000 + i as u64);
        let timers = TimerConfig {
            reset_policy: ResetPolicy::UniformRandom { seed },
            ..cfg.timers
        };
        let rho = PerturbationRho::uniform(level, level);
        let init = clamp_timers(&cfg.init, &cfg.timers, Some(&rho));
        specs.push(RunSpec {
            label: format!("rho={level}"),
            kind: RunKind::RhoDiagonal,
            theta: level,
            kappa: level,
            seed,
            timers,
            rho,
            init,
        });
    }
    for spec in &specs {
        spec.rho.validate(&spec.timers)?;
    }

    let outputs: Result<Vec<RunOutput>> =
        specs.par_iter().map(|s| execute_run(cfg, s)).collect();
    let outputs = outputs?;

    let rho_aggregate = outputs
        .iter()
        .filter(|o| o.record.kind == RunKind::RhoDiagonal)
        .map(|o| (o.record.theta, o.record.asymptotic_err))
        .collect();

    Ok(CampaignResult {
        outputs,
        rho_aggregate,
        envelope: None,
        reduction: None,
        notes: vec![format!(
            "grid {}x{} plus {} diagonal runs, random timer resets seeded from {}",
            cfg.theta_grid.len(),
            cfg.kappa_grid.len(),
            cfg.rho_grid.len(),
            cfg.seed
        )],
    })
}

/// Draw `n` initial plant states uniformly from the configured box (seeded)
/// and simulate each; the sampled output starts offset from the state by the
/// configured amount in every component.
pub fn run_random_ic_batch(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<CampaignResult> {
    if n < 1 {
        return Err(Error::InvalidArg("batch size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut specs = Vec::with_capacity(n);
    for i in 0..n {
        let mut init = cfg.init;
        for k in 0..6 {
            let (lo, hi) = (cfg.batch_lo[k], cfg.batch_hi[k]);
            init.x[k] = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
        }
        init.y_s = init.x.add_scalar(cfg.batch_ys_offset);
        let run_seed = seed.wrapping_add(3000 + i as u64);
        let timers = match cfg.timers.reset_policy {
            ResetPolicy::UniformRandom { .. } => TimerConfig {
                reset_policy: ResetPolicy::UniformRandom { seed: run_seed },
                ..cfg.timers
            },
            _ => cfg.timers,
        };
        specs.push(RunSpec {
            label: format!("ic-{i}"),
            kind: RunKind::RandomIc,
            theta: 0.0,
            kappa: 0.0,
            seed: run_seed,
            timers,
            rho: PerturbationRho::zero(),
            init,
        });
    }

    let outputs: Result<Vec<RunOutput>> =
        specs.par_iter().map(|s| execute_run(cfg, s)).collect();
    let outputs = outputs?;
    let max = outputs
        .iter()
        .map(|o| o.record.asymptotic_err)
        .fold(f64::NAN, f64::max);

    Ok(CampaignResult {
        outputs,
        rho_aggregate: Vec::new(),
        envelope: None,
        reduction: None,
        notes: vec![format!("{n} initial conditions from seed {seed}; max limiting error {max}")],
    })
}

/// Quadratic response surface err ~ c0 + c1*kappa + c2*theta + c3*kappa^2
/// + c4*theta^2 + c5*kappa*theta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFit {
    pub coef: [f64; 6],
    pub r2: f64,
}

/// Least-squares fit of the quadratic response surface to (kappa, theta,
/// err) observations.
pub fn fit_quadratic_surface(points: &[(f64, f64, f64)]) -> Result<QuadraticFit> {
    if points.len() < 6 {
        return Err(Error::InsufficientData(format!(
            "quadratic surface needs at least 6 observations, got {}",
            points.len()
        )));
    }
    let n = points.len();
    let mut design = DMatrix::zeros(n, 6);
    let mut rhs = DVector::zeros(n);
    for (i, &(kappa, theta, err)) in points.iter().enumerate() {
        design[(i, 0)] = 1.0;
        design[(i, 1)] = kappa;
        design[(i, 2)] = theta;
        design[(i, 3)] = kappa * kappa;
        design[(i, 4)] = theta * theta;
        design[(i, 5)] = kappa * theta;
        rhs[i] = err;
    }
    let svd = design.clone().svd(true, true);
    let eps = 1e-10 * svd.singular_values.max() * n as f64;
    if svd.rank(eps) < 6 {
        return Err(Error::NumericalCheck(
            "regression design is rank-deficient: the (kappa, theta) grid does not \
             identify all six coefficients"
                .into(),
        ));
    }
    let sol = svd
        .solve(&rhs, eps)
        .map_err(|e| Error::NumericalCheck(format!("least-squares solve failed: {e}")))?;
    let fitted = design * &sol;
    let mean = rhs.mean();
    let ss_res: f64 = (&rhs - &fitted).norm_squared();
    let ss_tot: f64 = rhs.iter().map(|v| (v - mean) * (v - mean)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(QuadraticFit {
        coef: [sol[0], sol[1], sol[2], sol[3], sol[4], sol[5]],
        r2,
    })
}

/// Fit the response surface to a sweep's grid cells.
pub fn fit_quadratic_response(sweep: &CampaignResult) -> Result<QuadraticFit> {
    let points: Vec<(f64, f64, f64)> = sweep
        .records()
        .filter(|r| r.kind == RunKind::GridCell)
        .map(|r| (r.kappa, r.theta, r.asymptotic_err))
        .collect();
    fit_quadratic_surface(&points)
}

// ---------------------------------------------------------------------------
// CSV artifacts
// ---------------------------------------------------------------------------

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Write per-cell sweep rows: `label,theta,kappa,seed,asymptotic_err`.
pub fn write_sweep_csv<P: AsRef<Path>>(path: P, result: &CampaignResult) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(std::fs::File::create(path)?);
    wtr.write_record(["label", "theta", "kappa", "seed", "asymptotic_err"])?;
    for r in result.records() {
        wtr.write_record([
            r.label.clone(),
            fmt(r.theta),
            fmt(r.kappa),
            format!("{}", r.seed),
            fmt(r.asymptotic_err),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Write the per-rho aggregate: `rho,asymptotic_err`.
pub fn write_rho_csv<P: AsRef<Path>>(path: P, result: &CampaignResult) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(std::fs::File::create(path)?);
    wtr.write_record(["rho", "asymptotic_err"])?;
    for (rho, err) in &result.rho_aggregate {
        wtr.write_record([fmt(*rho), fmt(*err)])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Write batch rows: `label,seed,x1..x6,asymptotic_err`.
pub fn write_batch_csv<P: AsRef<Path>>(path: P, result: &CampaignResult) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(std::fs::File::create(path)?);
    wtr.write_record([
        "label", "seed", "x1", "x2", "x3", "x4", "x5", "x6", "asymptotic_err",
    ])?;
    for r in result.records() {
        let mut row = vec![r.label.clone(), format!("{}", r.seed)];
        row.extend(r.init_x.iter().map(|v| fmt(*v)));
        row.push(fmt(r.asymptotic_err));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read (kappa, theta, err) observations from a CSV with that header.
pub fn read_response_table<P: AsRef<Path>>(path: P) -> Result<Vec<(f64, f64, f64)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let want = ["kappa", "theta", "err"];
    let got = rdr.headers()?.clone();
    if got.iter().collect::<Vec<_>>() != want {
        return Err(Error::Config(format!(
            "response table must have header kappa,theta,err, got {got:?}"
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Config("short row in response table".into()))?
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad number in response table: {e}")))
        };
        rows.push((parse(0)?, parse(1)?, parse(2)?));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Command-line interface
// ---------------------------------------------------------------------------

#[derive(Parser, Debug)]
#[command(
    name = "hfo",
    version,
    about = "Hybrid feedback-optimization rendezvous simulator"
)]
struct Cli {
    /// TOML config path; omitted means the built-in reference scenario.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (.csv) or directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's horizon, seconds.
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Override the config's sample period, seconds.
    #[arg(long, global = true)]
    sample_dt: Option<f64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Print the synthesized feedback gain and closed-loop matrix.
    SynthesizeGains,
    /// Simulate one run and write the trajectory CSV.
    Simulate,
    /// Run the perturbation sweep and write sweep/rho CSVs.
    Sweep,
    /// Run the random-initial-condition batch and write its CSV.
    BatchIc {
        /// Number of initial conditions (default from config).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Evaluate error envelopes for a trajectory (simulated or from CSV).
    Bounds {
        /// Reuse a previously written trajectory CSV instead of simulating.
        #[arg(long)]
        traj: Option<PathBuf>,
    },
    /// Fit the quadratic response surface to a table of observations.
    FitRegression {
        /// CSV with header kappa,theta,err; omitted means the published
        /// reference table.
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut raw = match &cli.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    if let Some(seed) = cli.seed {
        raw.seed = seed;
    }
    if let Some(h) = cli.horizon {
        raw.horizon = h;
    }
    if let Some(dt) = cli.sample_dt {
        raw.sample_dt = dt;
    }
    ExperimentConfig::from_raw(&raw)
}

/// Resolve `--out` for a single-file artifact: explicit .csv path, a
/// directory to place the default name in, or the default name in the
/// working directory.
fn resolve_out(out: &Option<PathBuf>, default_name: &str) -> Result<PathBuf> {
    match out {
        Some(p) if p.extension().map(|e| e == "csv").unwrap_or(false) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Ok(p.clone())
        }
        Some(p) => {
            std::fs::create_dir_all(p)?;
            Ok(p.join(default_name))
        }
        None => Ok(PathBuf::from(default_name)),
    }
}

fn print_mat<const R: usize, const C: usize>(name: &str, m: &nalgebra::SMatrix<f64, R, C>) {
    println!("{name} =");
    for i in 0..R {
        let row: Vec<String> = (0..C).map(|j| format!("{:>12.6}", m[(i, j)])).collect();
        println!("  [{}]", row.join(" "));
    }
}

fn cmd_synthesize_gains(cfg: &ExperimentConfig) -> Result<()> {
    print_mat("K", &cfg.plant.k);
    print_mat("A_stab", &cfg.plant.a_stab);
    let placed = crate::dynamics::verify_eigen_placement(&cfg.plant, 1e-8);
    println!("eigenvalue placement verified to 1e-8: {placed}");
    Ok(())
}

fn cmd_simulate(cfg: &ExperimentConfig, out: &Option<PathBuf>) -> Result<()> {
    let result = run_nominal(cfg)?;
    let run = &result.outputs[0];
    let path = resolve_out(out, "traj.csv")?;
    run.traj.write_csv_path(&path)?;
    println!(
        "wrote {} ({} samples, {} gradient jumps, {} sample jumps)",
        path.display(),
        run.traj.samples.len(),
        run.record.jumps_gradient,
        run.record.jumps_sample
    );
    println!("limiting error: {} m", run.record.asymptotic_err);
    if let Some((per_component, per_norm)) = result.reduction {
        println!(
            "disturbance reduction: {:.2}% of per-component amplitude, {:.2}% of norm amplitude",
            100.0 * per_component,
            100.0 * per_norm
        );
    }
    for note in &result.notes {
        println!("note: {note}");
    }
    Ok(())
}

fn cmd_sweep(cfg: &ExperimentConfig, out: &Option<PathBuf>) -> Result<()> {
    let result = run_perturbation_sweep(cfg)?;
    let sweep_path = resolve_out(out, "sweep.csv")?;
    let rho_path = sweep_path.with_file_name("rho_aggregate.csv");
    write_sweep_csv(&sweep_path, &result)?;
    write_rho_csv(&rho_path, &result)?;
    println!("wrote {} and {}", sweep_path.display(), rho_path.display());
    for r in result.records_of(RunKind::GridCell) {
        println!(
            "theta={:>6} kappa={:>4}  err={:.6} m",
            r.theta, r.kappa, r.asymptotic_err
        );
    }
    for (rho, err) in &result.rho_aggregate {
        println!("rho={rho:>4}  err={err:.6} m");
    }
    match fit_quadratic_response(&result) {
        Ok(fit) => println!("response fit: coef={:?} r2={:.4}", fit.coef, fit.r2),
        Err(e) => println!("response fit unavailable: {e}"),
    }
    Ok(())
}

fn cmd_batch(cfg: &ExperimentConfig, n: Option<usize>, out: &Option<PathBuf>) -> Result<()> {
    let n = n.unwrap_or(cfg.batch_n);
    let result = run_random_ic_batch(cfg, n, cfg.seed)?;
    let path = resolve_out(out, "batch.csv")?;
    write_batch_csv(&path, &result)?;
    println!("wrote {}", path.display());
    println!("max limiting error over {n} runs: {} m", result.max_asymptotic_err());
    Ok(())
}

fn cmd_bounds(cfg: &ExperimentConfig, traj: &Option<PathBuf>, out: &Option<PathBuf>) -> Result<()> {
    let traj = match traj {
        Some(path) => HybridTrajectory::read_csv_path(path)?,
        None => run_nominal(cfg)?.outputs.remove(0).traj,
    };
    let series = rendezvous_error(&traj, &cfg.obj, &cfg.plant, &cfg.dist, cfg.solver_tol)?;

    let (params, certified) = match &cfg.constants {
        Some(c) => (
            BoundParams::from_run(&cfg.spec, &cfg.obj, &cfg.plant, &cfg.dist, &cfg.timers, c)?,
            true,
        ),
        None => {
            // Out-of-hypothesis stepsize: evaluate the formulas anyway so the
            // numbers can be inspected, but say clearly they certify nothing.
            let c = compute_constants_unchecked(&cfg.obj, &cfg.plant);
            (
                BoundParams::new_unchecked(
                    cfg.spec.max_multiplicity(),
                    cfg.spec.lambda_slow().abs(),
                    cfg.spec.lambda_fast().abs(),
                    cfg.obj.box_u.diameter(),
                    cfg.params.m_c,
                    c.q,
                    cfg.timers.ell()?,
                    cfg.dist.derivative_bound(),
                    cfg.plant.norm_a_inv,
                    cfg.plant.norm_k,
                    cfg.timers.tau_c_min,
                    cfg.timers.tau_c_max,
                ),
                false,
            )
        }
    };
    if !certified {
        println!(
            "warning: stepsize is outside the contraction hypothesis (q = {}); \
             the envelope below carries no guarantee",
            params.q
        );
    }

    let frozen = cfg
        .freeze_init_err
        .then(|| series.points.first().map(|p| p.init_err))
        .flatten();
    let report = check_envelope(&series, &params, frozen);
    let path = resolve_out(out, "bounds.csv")?;
    write_bound_report(&path, &series, &params, frozen)?;
    println!("wrote {}", path.display());
    println!(
        "envelope: {} samples, {} violations, min margin {:.6} at t = {:.3}",
        report.samples, report.violations, report.min_margin, report.worst_t
    );

    match eigenvalue_selection_check(&cfg.spec, cfg.eta, &params) {
        Ok(sel) => println!(
            "gain sizing for eta = {}: fast_ok={} slow_ok={} implied limiting error {:.6}",
            cfg.eta, sel.fast_ok, sel.slow_ok, sel.implied_asymptote
        ),
        Err(e) => println!("gain sizing check unavailable: {e}"),
    }
    Ok(())
}

fn cmd_fit(table: &Option<PathBuf>) -> Result<()> {
    let rows = match table {
        Some(path) => read_response_table(path)?,
        None => REFERENCE_RESPONSE_TABLE.to_vec(),
    };
    let fit = fit_quadratic_surface(&rows)?;
    println!("coefficients (1, kappa, theta, kappa^2, theta^2, kappa*theta):");
    for (c, r) in fit.coef.iter().zip(REFERENCE_RESPONSE_COEF.iter()) {
        println!("  {c:>12.6}   (published reference {r})");
    }
    println!("r2 = {:.6}", fit.r2);
    Ok(())
}

/// Parse arguments, dispatch, and return the process exit code: 0 success,
/// 2 for usage/config problems, 1 for runtime failures.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };

    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };

    let result = match &cli.cmd {
        Cmd::SynthesizeGains => cmd_synthesize_gains(&cfg),
        Cmd::Simulate => cmd_simulate(&cfg, &cli.out),
        Cmd::Sweep => cmd_sweep(&cfg, &cli.out),
        Cmd::BatchIc { n } => cmd_batch(&cfg, *n, &cli.out),
        Cmd::Bounds { traj } => cmd_bounds(&cfg, traj, &cli.out),
        Cmd::FitRegression { table } => cmd_fit(table),
    };

    match result {
        Ok(()) => 0,
        Err(e @ (Error::Config(_) | Error::InvalidArg(_))) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Initialize logging from the HFO_LOG environment variable.
pub fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("HFO_LOG")).try_init();
}
