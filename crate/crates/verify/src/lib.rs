//! Acceptance suite for the `softcilqr` controller.
//!
//! [`oracle`] holds independent reference solvers; [`criteria`] runs each
//! acceptance criterion against them and reports measured value, bound and
//! verdict.

pub mod criteria;
pub mod oracle;

pub use criteria::{Check, Suite, Tolerances, ALL};
