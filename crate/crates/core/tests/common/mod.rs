#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use upal_core::{Hypothesis, LabeledPool};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_points(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| {
        let u: f64 = rng.random_range(-1.0..1.0);
        let v: f64 = rng.random_range(-1.0..1.0);
        u + 0.5 * v
    })
}

/// Labels from a noisy random linear rule.
pub fn classification_pool(n: usize, d: usize, seed: u64) -> LabeledPool {
    let mut r = rng(seed);
    let x = gaussian_points(n, d, &mut r);
    let w: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
    let labels = (0..n)
        .map(|i| {
            let s: f64 = (0..d).map(|k| x[(i, k)] * w[k]).sum::<f64>() + r.random_range(-0.3..0.3);
            if s >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    LabeledPool::new(x, labels).unwrap()
}

pub fn regression_pool(n: usize, d: usize, seed: u64) -> LabeledPool {
    let mut r = rng(seed);
    let x = gaussian_points(n, d, &mut r);
    let y = (0..n)
        .map(|i| (0..d).map(|k| x[(i, k)] * (k as f64 - 1.0)).sum::<f64>() + r.random_range(-1.0..1.0))
        .collect();
    LabeledPool::regression(x, y).unwrap()
}

pub fn random_weights(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n)
        .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.5..20.0) })
        .collect()
}

pub fn random_hypothesis(d: usize, scale: f64, rng: &mut ChaCha8Rng) -> Hypothesis {
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(-scale..scale)).collect();
    Hypothesis::from_slice(&w).unwrap()
}

/// Objective recomputed from scratch, independent of the solver's caches.
pub fn reference_objective(pool: &LabeledPool, z: &[f64], logistic: bool, lambda: f64, h: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..pool.len() {
        if z[i] == 0.0 {
            continue;
        }
        let s: f64 = pool.point(i).iter().zip(h).map(|(a, b)| a * b).sum();
        let y = pool.label(i);
        let phi = if logistic {
            let m = -y * s;
            if m > 0.0 {
                m + (-m).exp().ln_1p()
            } else {
                m.exp().ln_1p()
            }
        } else {
            (y - s) * (y - s)
        };
        total += z[i] * phi;
    }
    total + lambda * h.iter().map(|v| v * v).sum::<f64>()
}
