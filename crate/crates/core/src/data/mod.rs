//! Dataset ingestion, preprocessing and synthetic generators.

mod cache;
mod csv;
mod libsvm;
mod pca;
mod synth;

pub use self::cache::{read_cache, write_cache, CACHE_MAGIC};
pub use self::csv::{load_csv, CsvOptions, LabelRule};
pub use self::libsvm::{load_libsvm, parse_libsvm, write_libsvm};
pub use self::pca::{pca_reduce, Pca};
pub use self::synth::{synth_pool, LabelMode, SyntheticDraw, SyntheticModel, XLaw};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, UpalError};
use crate::pool::LabeledPool;

/// Seeded shuffle split into (train, test). The test part gets
/// `round(n * test_fraction)` points, clamped so both sides are nonempty.
pub fn split(pool: &LabeledPool, test_fraction: f64, seed: u64) -> Result<(LabeledPool, LabeledPool)> {
    let (train, test) = split_indices(pool.len(), test_fraction, seed)?;
    Ok((pool.select(&train)?, pool.select(&test)?))
}

pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(UpalError::InvalidConfig(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if n < 2 {
        return Err(UpalError::InvalidConfig("cannot split fewer than 2 points".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let train = idx.split_off(n_test);
    Ok((train, idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn pool(n: usize) -> LabeledPool {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        LabeledPool::from_rows(&rows, vec![1.0; n]).unwrap()
    }

    #[test]
    fn half_split() {
        let (train, test) = split(&pool(10), 0.5, 3).unwrap();
        assert_eq!((train.len(), test.len()), (5, 5));
    }

    #[test]
    fn split_is_seeded_disjoint_and_exhaustive() {
        let a = split_indices(37, 0.3, 11).unwrap();
        assert_eq!(a, split_indices(37, 0.3, 11).unwrap());
        assert_ne!(a, split_indices(37, 0.3, 12).unwrap());
        let train: HashSet<_> = a.0.iter().copied().collect();
        let test: HashSet<_> = a.1.iter().copied().collect();
        assert!(train.is_disjoint(&test));
        assert_eq!(train.union(&test).count(), 37);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        assert!(split_indices(10, 0.0, 1).is_err());
        assert!(split_indices(10, 1.0, 1).is_err());
    }
}
