//! Zeroth-order solvers for `(δ, ε)`-Goldstein stationary points of
//! Lipschitz, non-smooth, non-convex stochastic objectives.
//!
//! The quantum gradient estimators are realized classically at their
//! statistical contract (unbiased, bounded mean-square error) while a
//! [`qoracle::QueryLedger`] charges what the quantum construction would
//! cost. Scaling exponents measured from the ledger are what the
//! [`harness`] reports.
//!
//! Layout:
//!
//! * [`objectives`]: test problems with known Lipschitz constants and minima.
//! * [`smoothing`]: sphere/ball samplers and the two-point estimator.
//! * [`qoracle`]: sampling oracles, mini-batch estimators, cost models.
//! * [`algorithms`]: QGFM, QGFM+ and the smooth-track QGM+.
//! * [`circuit`]: state-vector and fixed-point emulation of the oracle circuits.
//! * [`stationarity`]: residual estimation and exact Goldstein distances.
//! * [`harness`]: configuration, CSV rows and log-log fits.

pub mod algorithms;
pub mod circuit;
pub mod error;
pub mod harness;
pub mod objectives;
pub mod qoracle;
pub mod rng;
pub mod smoothing;
pub mod stationarity;
pub mod stats;
mod vecops;

pub use error::{Error, Result};
