mod common;

use common::{composite_cases, op_cases, worst_error, TOLERANCE};

#[test]
fn every_tape_op_matches_finite_differences() {
    let mut failures = Vec::new();
    for (name, make) in op_cases() {
        let err = worst_error(name, make.as_ref());
        if !(err <= TOLERANCE) {
            failures.push(format!("{name}: {err:.3e}"));
        }
    }
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn composite_losses_match_finite_differences() {
    let mut failures = Vec::new();
    for (name, make) in composite_cases() {
        let err = worst_error(name, make.as_ref());
        if !(err <= TOLERANCE) {
            failures.push(format!("{name}: {err:.3e}"));
        }
    }
    assert!(failures.is_empty(), "{failures:?}");
}
