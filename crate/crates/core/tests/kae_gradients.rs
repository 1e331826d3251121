//! Analytic loss gradients against central finite differences.

mod common;

use common::grad::{max_rel_error, random_model, weights_only};
use kae_enkf::kae::LossWeights;

#[test]
fn each_term_matches_finite_differences() {
    for term in 0..5 {
        for seed in 0..10 {
            let (m, x, y, dts) = random_model(100 * term as u64 + seed);
            let err = max_rel_error(&m, &x, &y, &dts, &weights_only(term));
            assert!(err < 1e-4, "term {term} seed {seed}: {err}");
        }
    }
}

#[test]
fn full_loss_matches_finite_differences() {
    for seed in 0..10 {
        let (m, x, y, dts) = random_model(1000 + seed);
        let err = max_rel_error(&m, &x, &y, &dts, &LossWeights::default());
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}
