//! Fixed inputs shared by the benchmarks.

use rollpack_core::families::{large_lb_instance, random_lm_instance, LARGE_LB_EPSILON};
use rollpack_core::Instance;

/// The large-item lower-bound family with `k` pairs.
pub fn large_lb(k: usize) -> Instance {
    large_lb_instance(k, LARGE_LB_EPSILON)
        .expect("k within the epsilon bound")
        .instance()
        .clone()
}

/// A reproducible random LM instance with `k` pairs over denominator 120.
pub fn random_lm(k: usize, seed: u64) -> Instance {
    random_lm_instance(k, seed, 120)
        .expect("valid generator parameters")
        .instance()
        .clone()
}
