//! Acceptance suite: one test per criterion, printing one pass/fail line
//! each plus the measured details.
//!
//! Criteria 4 and 5 encode target windows that the exact solutions of the
//! continuous problem provably miss at the pinned parameters (see the
//! printed details); they are kept as stated and report their measured
//! values rather than being loosened to pass.

use nsing::acceptance::{format_result, run_criterion};

fn run(id: u32) -> bool {
    let result = run_criterion(id);
    println!("{}", format_result(&result));
    for line in &result.details {
        println!("    {line}");
    }
    result.passed
}

#[test]
fn criterion_01_exponent_identities() {
    assert!(run(1));
}

#[test]
fn criterion_02_spectral_recovery() {
    assert!(run(2));
}

#[test]
fn criterion_03_hemisphere_profile() {
    assert!(run(3));
}

#[test]
fn criterion_04_weak_singularity_reproduction() {
    assert!(run(4));
}

#[test]
fn criterion_05_strong_limit_saturation() {
    assert!(run(5));
}

#[test]
fn criterion_06_removability_contrast() {
    assert!(run(6));
}

#[test]
fn criterion_07_scaling_covariance() {
    assert!(run(7));
}

#[test]
fn criterion_08_transform_suite() {
    assert!(run(8));
}

#[test]
fn criterion_09_subsolution_sign() {
    assert!(run(9));
}

#[test]
fn criterion_10_classifier() {
    assert!(run(10));
}
