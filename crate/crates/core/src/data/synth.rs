use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Result, UpalError};
use crate::linalg::{eigen_extremes, sym_pow};
use crate::pool::{Hypothesis, LabeledPool};
use crate::theory::AssumptionParams;

/// Distribution of the raw points before the `Sigma^{1/2}`-style mixing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XLaw {
    /// Coordinates uniform on `[-sqrt 3, sqrt 3]` (unit variance, bounded).
    #[default]
    BoundedUniformCube,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// `y = beta . x + xi`.
    Regression,
    /// `y = sign(beta . x + xi)`, with sign(0) = +1.
    #[default]
    Classification,
}

/// Linear model `y = beta . x + xi` with `x = L u`, `L L^T = Sigma`, and
/// `xi` uniform on `[-a, a]`, `a <= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticModel {
    beta: Hypothesis,
    sigma: DMatrix<f64>,
    mixing: DMatrix<f64>,
    x_law: XLaw,
    noise: f64,
    mode: LabelMode,
}

impl SyntheticModel {
    pub fn new(beta: Hypothesis, sigma: DMatrix<f64>, x_law: XLaw, noise: f64, mode: LabelMode) -> Result<Self> {
        let d = beta.dim();
        if sigma.shape() != (d, d) {
            return Err(UpalError::DimensionMismatch {
                expected: d,
                got: sigma.nrows(),
            });
        }
        if !(0.0..=2.0).contains(&noise) {
            return Err(UpalError::InvalidConfig(format!(
                "noise amplitude must lie in [0, 2], got {noise}"
            )));
        }
        let mixing = Cholesky::new(sigma.clone())
            .ok_or(UpalError::NotPositiveDefinite)?
            .l();
        Ok(Self {
            beta,
            sigma,
            mixing,
            x_law,
            noise,
            mode,
        })
    }

    /// Identity covariance model.
    pub fn isotropic(beta: Hypothesis, x_law: XLaw, noise: f64, mode: LabelMode) -> Result<Self> {
        let d = beta.dim();
        Self::new(beta, DMatrix::identity(d, d), x_law, noise, mode)
    }

    /// Classification benchmark: isotropic cube, `beta_i = (-1)^i (1 + 0.3 i)`.
    pub fn benchmark(d: usize, noise: f64) -> Result<Self> {
        let beta = Hypothesis::new(DVector::from_fn(d, |i, _| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * (1.0 + 0.3 * i as f64)
        }))?;
        Self::isotropic(beta, XLaw::BoundedUniformCube, noise, LabelMode::Classification)
    }

    pub fn dim(&self) -> usize {
        self.beta.dim()
    }

    pub fn beta(&self) -> &Hypothesis {
        &self.beta
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn mode(&self) -> LabelMode {
        self.mode
    }

    pub fn x_law(&self) -> XLaw {
        self.x_law
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.dim();
        let u = match self.x_law {
            XLaw::BoundedUniformCube => {
                let s3 = 3f64.sqrt();
                let law = Uniform::new_inclusive(-s3, s3).expect("valid range");
                DVector::from_fn(d, |_, _| law.sample(rng))
            }
            XLaw::Gaussian => DVector::from_fn(d, |_, _| StandardNormal.sample(rng)),
        };
        &self.mixing * u
    }

    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.noise == 0.0 {
            0.0
        } else {
            rng.random_range(-self.noise..=self.noise)
        }
    }

    pub fn label(&self, x: &DVector<f64>, xi: f64) -> f64 {
        let y = self.beta.weights().dot(x) + xi;
        match self.mode {
            LabelMode::Regression => y,
            LabelMode::Classification => {
                if y >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    fn assumption_params(&self, points: &DMatrix<f64>) -> Result<AssumptionParams> {
        let d = self.dim() as f64;
        let (_, lmax) = eigen_extremes(&self.sigma);
        let (gamma0, gamma1) = match self.x_law {
            XLaw::BoundedUniformCube => (3f64.sqrt(), (3.0 * lmax).sqrt().max(1.0)),
            XLaw::Gaussian => {
                let whiten = sym_pow(&self.sigma, -0.5)?;
                let worst = points
                    .row_iter()
                    .map(|r| (&whiten * r.transpose()).norm())
                    .fold(0.0f64, f64::max);
                ((worst / d.sqrt()).max(1.0), lmax.sqrt().max(1.0))
            }
        };
        Ok(AssumptionParams {
            gamma0,
            gamma1,
            delta: 0.1,
            sigma: self.sigma.clone(),
            beta: self.beta.clone(),
            noise_bound: 2.0,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDraw {
    pub pool: LabeledPool,
    /// Realized noise values.
    pub xi: Vec<f64>,
    pub params: AssumptionParams,
}

pub fn synth_pool(model: &SyntheticModel, n: usize, seed: u64) -> Result<SyntheticDraw> {
    if n == 0 {
        return Err(UpalError::InvalidPool("synthetic pool needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.dim();
    let mut points = DMatrix::zeros(n, d);
    let mut xi = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let x = model.sample_point(&mut rng);
        let e = model.sample_noise(&mut rng);
        labels.push(model.label(&x, e));
        points.set_row(i, &x.transpose());
        xi.push(e);
    }
    let params = model.assumption_params(&points)?;
    let pool = match model.mode {
        LabelMode::Regression => LabeledPool::regression(points, labels)?,
        LabelMode::Classification => LabeledPool::new(points, labels)?,
    };
    Ok(SyntheticDraw { pool, xi, params })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beta3() -> Hypothesis {
        Hypothesis::from_slice(&[1.0, -0.5, 0.25]).unwrap()
    }

    #[test]
    fn noiseless_regression_is_exact() {
        let model = SyntheticModel::isotropic(beta3(), XLaw::Gaussian, 0.0, LabelMode::Regression).unwrap();
        let draw = synth_pool(&model, 50, 1).unwrap();
        for i in 0..50 {
            let y = draw.params.beta.weights().dot(&draw.pool.point(i));
            assert_eq!(draw.pool.label(i), y);
            assert_eq!(draw.xi[i], 0.0);
        }
    }

    #[test]
    fn noise_stays_bounded_on_cube() {
        let model =
            SyntheticModel::isotropic(beta3(), XLaw::BoundedUniformCube, 2.0, LabelMode::Regression).unwrap();
        let draw = synth_pool(&model, 5000, 2).unwrap();
        assert!(draw.xi.iter().all(|e| e.abs() <= 2.0));
        let s3 = 3f64.sqrt();
        assert!(draw.pool.points().iter().all(|v| v.abs() <= s3));
    }

    #[test]
    fn noise_mean_is_centered() {
        let model =
            SyntheticModel::isotropic(beta3(), XLaw::BoundedUniformCube, 1.5, LabelMode::Regression).unwrap();
        let n = 100_000;
        let draw = synth_pool(&model, n, 3).unwrap();
        let mean = draw.xi.iter().sum::<f64>() / n as f64;
        let var = draw.xi.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() <= 4.0 * var.sqrt() / (n as f64).sqrt());
    }

    #[test]
    fn gaussian_sample_covariance_converges() {
        let d = 5;
        let sigma = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 + i as f64 * 0.5 } else { 0.2 });
        let beta = Hypothesis::zeros(d);
        let model = SyntheticModel::new(beta, sigma.clone(), XLaw::Gaussian, 0.5, LabelMode::Classification).unwrap();
        let n = 100_000;
        let draw = synth_pool(&model, n, 4).unwrap();
        let emp = draw.pool.points().tr_mul(draw.pool.points()) / n as f64;
        assert!((emp - sigma).norm() <= 0.1);
    }

    #[test]
    fn rejects_invalid_models() {
        assert!(SyntheticModel::isotropic(beta3(), XLaw::Gaussian, 2.5, LabelMode::Regression).is_err());
        let not_pd = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(SyntheticModel::new(beta3(), not_pd, XLaw::Gaussian, 1.0, LabelMode::Regression).is_err());
    }

    #[test]
    fn classification_labels_are_signs() {
        let model =
            SyntheticModel::isotropic(beta3(), XLaw::BoundedUniformCube, 0.3, LabelMode::Classification).unwrap();
        let draw = synth_pool(&model, 200, 5).unwrap();
        assert!(draw.pool.labels().iter().all(|y| *y == 1.0 || *y == -1.0));
    }
}
