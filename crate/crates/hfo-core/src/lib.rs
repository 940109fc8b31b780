//! Hybrid feedback optimization for autonomous satellite rendezvous.
//!
//! A chaser satellite tracks a moving rendezvous point near an orbiting
//! target. The plant is the linearized relative motion about a circular
//! reference orbit, stabilized by closed-form pole placement; the input is
//! produced by a sampled projected-gradient iteration on a box-constrained
//! quadratic objective, fed by periodically sampled outputs. The whole loop
//! — continuous flow plus discrete optimizer and sampler events — is modeled
//! and simulated as a hybrid automaton.
//!
//! The crate provides:
//! - [`dynamics`]: the relative-motion model and gain synthesis;
//! - [`objective`]: the steady-state optimization problem and its solvers;
//! - [`disturbance`]: the exogenous disturbance signals;
//! - [`hybrid`]: the hybrid automaton and event-driven simulator;
//! - [`analysis`]: convergence envelopes and trajectory diagnostics;
//! - [`config`] / [`experiments`]: run configuration, campaign runners and
//!   the `hfo` command-line interface.

// Validation code writes `!(x > 0.0)` on purpose so that NaN fails the
// check; the suggested `partial_cmp` rewrites lose that property.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod disturbance;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod hybrid;
pub mod objective;

pub use config::{ExperimentConfig, RawConfig};
pub use error::{Error, Result};
