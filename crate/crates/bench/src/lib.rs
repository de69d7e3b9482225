//! Shared fixtures for the benchmarks.

use prtest_core::simulation::{gen_two_groups, SimModel, SimVariant};
use prtest_core::{Eta, Theta};

/// A seeded C1 sample with 10% non-null cases.
pub fn c1_sample(n: usize, seed: u64) -> Vec<f64> {
    gen_two_groups(&SimModel::new(SimVariant::C1, 0.9, n), seed).expect("valid model").zs
}

/// A parameter point typical of a fitted C1 sample.
pub fn typical_theta() -> Theta {
    Theta::new(0.0, 1.0, 2.2, 0.95).expect("valid parameters")
}

pub fn typical_eta() -> Eta {
    typical_theta().to_eta()
}
