//! Soft-constrained iterative LQR (soft-CILQR) for vehicle lane keeping.
//!
//! The crate is organised bottom-up:
//!
//! * [`vehicle`] builds the discrete lateral-dynamics model.
//! * [`lqr`] solves the Riccati equation and derives terminal weights.
//! * [`linprog`] is a small dense simplex solver.
//! * [`mpi`] computes the maximal positively invariant set of the
//!   augmented state-slack system and the resulting horizon bound.
//! * [`cost`] holds the barrier-augmented objective and its derivatives.
//! * [`solver`] is the trajectory optimizer (hard and soft modes).
//! * [`sim`] runs disturbance-injected closed-loop experiments.
//! * [`config`] parses the flat `key = value` run configuration.

pub mod config;
pub mod cost;
pub mod error;
pub mod linprog;
pub mod lqr;
pub mod mpi;
pub mod sim;
pub mod solver;
pub mod vehicle;

pub use error::{Error, Result};
