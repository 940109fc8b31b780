//! Error type shared across the library.

use thiserror::Error;

/// All failures the library reports.
#[derive(Debug, Error)]
pub enum Error {
    /// A scalar or structured argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArg(String),

    /// A configuration file could not be read or parsed.
    #[error("config error: {0}")]
    Config(String),

    /// The gradient stepsize is not contractive for the given problem:
    /// q = 1 - 2*gamma*lambda_min(Q_u) + gamma^2 L^2 must lie in (0, 1).
    #[error(
        "stepsize gamma = {gamma} is not contractive: q = {q} with L = {l} \
         (need q in (0,1); any gamma in (0, {gamma_max}) works)"
    )]
    StepsizeInvalid {
        gamma: f64,
        l: f64,
        q: f64,
        gamma_max: f64,
    },

    /// An eigenvalue-placement or matrix-structure check failed.
    #[error("numerical check failed: {0}")]
    NumericalCheck(String),

    /// The fixed-point solver hit its iteration cap before meeting tolerance.
    #[error("solver did not converge within {iterations} iterations (residual {residual})")]
    SolverDiverged { iterations: u64, residual: f64 },

    /// A trajectory violated the non-Zeno jump-rate guard.
    #[error(
        "jump rate exceeded the non-Zeno guard: {observed} jumps within a \
         1-second window (guard limit {limit})"
    )]
    ZenoGuard { observed: usize, limit: usize },

    /// A requested series or trajectory was too short for the analysis.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Filesystem or CSV output failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// CSV encoding failure.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Convenient alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
