//! Rebuilt e-graphs against a naive congruence-closure oracle.

mod common;

#[test]
fn rebuild_matches_naive_closure() {
    for seed in 0..200 {
        common::congruence::check_seed(seed).unwrap();
    }
}
