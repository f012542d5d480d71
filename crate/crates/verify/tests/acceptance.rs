//! One test per acceptance criterion at the stock configuration and the
//! pinned tolerances. Each prints a PASS/FAIL line before asserting.

use std::sync::OnceLock;

use softcilqr::config::RunConfig;
use softcilqr_verify::{Suite, Tolerances};

fn suite() -> &'static Suite {
    static SUITE: OnceLock<Suite> = OnceLock::new();
    SUITE.get_or_init(|| Suite::new(RunConfig::default(), Tolerances::default()))
}

fn criterion(id: u8) {
    let check = suite().run(id).expect("criterion runs to completion");
    println!("{check}");
    assert!(check.pass, "{check}");
}

#[test]
fn c01_min_offset_over_horizon() {
    criterion(1);
}

#[test]
fn c02_min_offset_over_slack_range() {
    criterion(2);
}

#[test]
fn c03_regulation_and_arrival_order() {
    criterion(3);
}

#[test]
fn c04_horizon_bound_shape_and_invariance() {
    criterion(4);
}

#[test]
fn c05_riccati_and_lyapunov_residuals() {
    criterion(5);
}

#[test]
fn c06_derivatives_match_finite_differences() {
    criterion(6);
}

#[test]
fn c07_lq_oracle_equivalence() {
    criterion(7);
}

#[test]
fn c08_lp_oracle_equivalence() {
    criterion(8);
}

#[test]
fn c09_noise_robustness_and_determinism() {
    criterion(9);
}

#[test]
fn c10_solve_time_envelope() {
    criterion(10);
}

#[test]
fn c11_metric_definitions() {
    criterion(11);
}
