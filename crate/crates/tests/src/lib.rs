//! Shared helpers for the acceptance suite.

use std::time::Duration;

/// Prints the one-line verdict for a criterion and fails the test if it
/// did not pass.
pub fn verdict(criterion: u8, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion}: {tag}: {detail}");
    assert!(pass, "criterion {criterion} failed: {detail}");
}

/// `points` log-spaced values in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| lo * (hi / lo).powf(i as f64 / (points - 1) as f64))
        .collect()
}

pub fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}
