//! Acceptance battery as an integration target: one test per shipped
//! guarantee, each printing its verdict line (run with `--nocapture` to see
//! the lines for passing checks too).

use mfg_core::acceptance::{self, CriterionReport};

fn check(report: CriterionReport) {
    println!("{}", report.line());
    assert!(report.passed, "{}", report.line());
}

#[test]
fn stationary_persistence() {
    check(acceptance::stationary_persistence());
}

#[test]
fn linearization_order() {
    check(acceptance::linearization_order());
}

#[test]
fn drift_identity() {
    check(acceptance::drift_identity());
}

#[test]
fn probe_remainder_decay() {
    check(acceptance::probe_remainder_decay());
}

#[test]
fn fourier_pairing() {
    check(acceptance::fourier_pairing());
}

#[test]
fn end_to_end_reconstruction() {
    check(acceptance::end_to_end_reconstruction());
}

#[test]
fn measurement_uniqueness_gate() {
    check(acceptance::measurement_uniqueness_gate());
}

#[test]
fn operator_exactness() {
    check(acceptance::operator_exactness());
}

#[test]
fn convergence_orders() {
    check(acceptance::convergence_orders());
}

#[test]
fn noise_robustness() {
    check(acceptance::noise_robustness());
}
