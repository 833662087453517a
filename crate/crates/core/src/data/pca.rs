use nalgebra::{DMatrix, DVector};

use crate::error::{Result, UpalError};
use crate::linalg::sym_eigen;
use crate::pool::LabeledPool;

/// Principal-component projection fitted on one pool and reusable on others.
///
/// Directions are ordered by decreasing variance and signed so that each
/// direction's largest-magnitude coordinate is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    mean: DVector<f64>,
    /// `d x k`, one direction per column.
    components: DMatrix<f64>,
    variances: DVector<f64>,
}

impl Pca {
    pub fn fit(pool: &LabeledPool, k: usize) -> Result<Self> {
        let (n, d) = (pool.len(), pool.dim());
        if k == 0 || k > d {
            return Err(UpalError::InvalidConfig(format!(
                "PCA target dimension {k} must lie in 1..={d}"
            )));
        }
        let mean = pool.points().row_mean().transpose();
        let centered = center(pool.points(), &mean);
        let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
        let cov = centered.tr_mul(&centered) / denom;
        let (values, vectors) = sym_eigen(&cov);
        let mut components = DMatrix::zeros(d, k);
        let mut variances = DVector::zeros(k);
        for c in 0..k {
            let src = d - 1 - c;
            let mut dir = vectors.column(src).into_owned();
            let lead = dir
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |best, (i, v)| if v.abs() > best.1.abs() { (i, *v) } else { best })
                .1;
            if lead < 0.0 {
                dir = -dir;
            }
            components.set_column(c, &dir);
            variances[c] = values[src].max(0.0);
        }
        Ok(Self {
            mean,
            components,
            variances,
        })
    }

    pub fn transform(&self, pool: &LabeledPool) -> Result<LabeledPool> {
        if pool.dim() != self.mean.len() {
            return Err(UpalError::DimensionMismatch {
                expected: self.mean.len(),
                got: pool.dim(),
            });
        }
        let projected = center(pool.points(), &self.mean) * &self.components;
        LabeledPool::regression(projected, pool.labels().to_vec())
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    /// Sample-covariance eigenvalues of the kept directions, descending.
    pub fn variances(&self) -> &DVector<f64> {
        &self.variances
    }
}

fn center(points: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = points.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    c
}

/// Mean-centered projection of `pool` onto its top-`k` principal directions.
pub fn pca_reduce(pool: &LabeledPool, k: usize) -> Result<LabeledPool> {
    Pca::fit(pool, k)?.transform(pool)
}
