//! Shared fixtures for the criterion benches.

use upal_core::data::{synth_pool, SyntheticModel};
use upal_core::LabeledPool;

/// Classification pool from the alternating-sign benchmark model.
pub fn benchmark_pool(n: usize, d: usize, seed: u64) -> LabeledPool {
    let model = SyntheticModel::benchmark(d, 0.3).expect("valid model");
    synth_pool(&model, n, seed).expect("valid pool").pool
}

/// Deterministic positive weights in `[0.5, 3)`.
pub fn weights(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 + (i * 37 % 100) as f64 / 40.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_requested_shape() {
        let p = benchmark_pool(30, 4, 1);
        assert_eq!((p.len(), p.dim()), (30, 4));
        assert!(weights(30).iter().all(|&w| (0.5..3.0).contains(&w)));
    }
}
