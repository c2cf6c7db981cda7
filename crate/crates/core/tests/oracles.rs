mod common;

use common::oracles;

// The library and the oracles order their floating-point operations
// differently in places, so agreement is asserted to within a few ulps of
// the magnitudes involved rather than bit for bit.
const TOL: f64 = 1e-12;

#[test]
fn independent_policy_matches_scalar_formulas() {
    let r = oracles::independent(64, 1);
    assert!(r.worst < TOL, "{r:?}");
}

#[test]
fn transformer_policy_matches_scalar_attention() {
    let r = oracles::transformer(64, 2);
    assert!(r.worst < TOL, "{r:?}");
}

#[test]
fn discounted_returns_match_double_loop() {
    let r = oracles::returns(64, 3);
    assert!(r.worst < TOL, "{r:?}");
}

#[test]
fn independent_with_zero_gate_is_softmax_of_attention() {
    let memory = vec![vec![0.3, -0.1], vec![0.2, 0.4], vec![-0.5, 0.0]];
    let entry = [1.0, 2.0];
    let (g, pi, _) = common::independent_oracle(&memory, &entry, &[0.0; 3], &[0.0, 0.0], 0.0);
    let a = common::softmax(&[0.1, 1.0, -0.5]);
    assert_eq!(g, a);
    assert_eq!(pi, common::softmax(&a));
}
