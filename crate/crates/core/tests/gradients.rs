mod common;

use common::grad::{end_to_end_error, layer_errors};

const SEEDS: u64 = 20;

#[test]
fn every_layer_matches_finite_differences() {
    for seed in 0..SEEDS {
        for (name, err) in layer_errors(seed) {
            assert!(err < 1e-4, "seed {seed} {name}: relative error {err:e}");
        }
    }
}

#[test]
fn tiny_network_matches_finite_differences() {
    for seed in 0..SEEDS {
        let err = end_to_end_error(seed, false);
        assert!(err < 1e-3, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn shared_attention_variant_matches_finite_differences() {
    for seed in 0..3 {
        let err = end_to_end_error(seed, true);
        assert!(err < 1e-3, "seed {seed}: relative error {err:e}");
    }
}
