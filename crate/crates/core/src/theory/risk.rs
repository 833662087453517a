use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::AssumptionParams;
use crate::error::{Result, UpalError};
use crate::linalg::{eigen_extremes, op_norm, sym_pow};
use crate::pool::{Hypothesis, LabeledPool, QueryHistory};
use crate::solver::{closed_form_from_moments, WeightedMoments};

/// Relative eigenvalue floor below which a Gram matrix counts as singular.
const INVERTIBLE_TOL: f64 = 1e-10;

/// `(h - beta)^T Sigma (h - beta)`.
pub fn excess_risk(params: &AssumptionParams, h: &Hypothesis) -> Result<f64> {
    let d = params.beta.dim();
    h.check_dim(d)?;
    let diff = h.weights() - params.beta.weights();
    Ok((&params.sigma * &diff).dot(&diff).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub n0: f64,
    pub t0: f64,
    pub t1: f64,
}

impl Thresholds {
    /// `t0` multiplies by `lambda_min(Sigma)^{8/3}`, exactly as the formula
    /// is stated; an inverse power would scale the other way.
    pub const T0_NOTE: &'static str =
        "t0 evaluated with lambda_min(Sigma)^(8/3) as a factor, as stated; an inverse power is likely intended";
}

pub fn sample_thresholds(
    d: usize,
    gamma0: f64,
    gamma1: f64,
    delta: f64,
    n: usize,
    sigma: &DMatrix<f64>,
) -> Result<Thresholds> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(UpalError::InvalidConfig(format!("delta must lie in (0, 1), got {delta}")));
    }
    if sigma.shape() != (d, d) {
        return Err(UpalError::DimensionMismatch { expected: d, got: sigma.nrows() });
    }
    let df = d as f64;
    let (lmin, lmax) = eigen_extremes(sigma);
    if lmin <= 0.0 {
        return Err(UpalError::NotPositiveDefinite);
    }
    let ld = (df / delta).ln();
    let ln_n = (n as f64 / delta).ln();
    let n0 = 7200.0 * df * df * gamma0.powi(4) * (df * 5f64.ln() + (10.0 / delta).ln());
    let t1 = 12.0 + 512.0 * 2f64.sqrt() * df.powf(8.0 / 3.0) * gamma0.powf(16.0 / 3.0) * ld.powf(4.0 / 3.0);
    let t0 = gamma1.powf(16.0 / 3.0)
        * df.powf(8.0 / 3.0)
        * ld.powf(4.0 / 3.0)
        * ln_n.powf(8.0 / 3.0)
        * lmin.powf(8.0 / 3.0)
        + 4.0 * ld * lmax / lmin;
    Ok(Thresholds { n0, t0, t1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenDiagnostics {
    pub lam_min_j: f64,
    pub lam_max_j: f64,
    pub lam_min_sighat: f64,
    pub lam_max_sighat: f64,
}

/// Extreme eigenvalues of `J = sum_i Sigma^{-1/2} x_i x_i^T Sigma^{-1/2}` and
/// of `Sighat = (1/n) sum_i x_i x_i^T` for the rows of `points`.
pub fn eigen_diagnostics(points: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<EigenDiagnostics> {
    let d = points.ncols();
    if sigma.shape() != (d, d) {
        return Err(UpalError::DimensionMismatch { expected: d, got: sigma.nrows() });
    }
    let gram = points.tr_mul(points);
    let whiten = sym_pow(sigma, -0.5)?;
    let j = &whiten * &gram * &whiten;
    let (lam_min_j, lam_max_j) = eigen_extremes(&j);
    let (lo, hi) = eigen_extremes(&gram);
    let n = points.nrows() as f64;
    Ok(EigenDiagnostics {
        lam_min_j,
        lam_max_j,
        lam_min_sighat: lo / n,
        lam_max_sighat: hi / n,
    })
}

/// Reference values for the three decomposition factors. Informational.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaBounds {
    /// `400 / (n^2 T^2)`
    pub term_a: f64,
    pub term_b: f64,
    /// `(2 n T^2 + 56 n^3 T^{3/2}) (d + 2 sqrt(d ln(1/delta)) + 2 ln(1/delta))`
    pub term_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub lam_min_j: f64,
    pub lam_max_j: f64,
    pub lam_min_sighat: f64,
    pub lam_max_sighat: f64,
    pub lam_min_sigz: f64,
    pub sighat_invertible: bool,
    pub sigz_invertible: bool,
    /// `||Sigma^{1/2} Sigma_z^{-1} Sigma^{1/2}||^2`
    pub term_a: Option<f64>,
    /// `||Sigma^{-1/2} Sighat^{1/2}||^2`
    pub term_b: Option<f64>,
    /// `||Sighat^{-1/2} psi_z||^2`
    pub term_c: Option<f64>,
    /// Excess risk of the unregularized closed-form fit on the history.
    pub excess: Option<f64>,
    /// `excess <= term_a * term_b * term_c`, when every factor exists.
    pub bound_holds: Option<bool>,
    pub thresholds: Thresholds,
    pub lemma_bounds: LemmaBounds,
}

impl DiagnosticsReport {
    pub fn product(&self) -> Option<f64> {
        Some(self.term_a? * self.term_b? * self.term_c?)
    }
}

fn invertible(lo: f64, hi: f64) -> bool {
    hi > 0.0 && lo > INVERTIBLE_TOL * hi
}

/// Factors of the excess-risk bound for the closed-form fit on `history`.
///
/// `xi[i]` must equal `y_i - beta . x_i`; singular matrices are reported
/// through the invertibility flags rather than as errors.
pub fn risk_decomposition_terms(
    pool: &LabeledPool,
    history: &QueryHistory,
    params: &AssumptionParams,
    xi: &[f64],
) -> Result<DiagnosticsReport> {
    let (n, d) = (pool.len(), pool.dim());
    if xi.len() != n {
        return Err(UpalError::DimensionMismatch { expected: n, got: xi.len() });
    }
    if history.pool_size() != n {
        return Err(UpalError::DimensionMismatch { expected: n, got: history.pool_size() });
    }
    params.beta.check_dim(d)?;
    let eig = eigen_diagnostics(pool.points(), &params.sigma)?;
    let moments = WeightedMoments::from_weights(pool, history.z())?;
    let (lam_min_sigz, lam_max_sigz) = eigen_extremes(&moments.sigma_z);
    let sighat_invertible = invertible(eig.lam_min_sighat, eig.lam_max_sighat);
    let sigz_invertible = invertible(lam_min_sigz, lam_max_sigz);

    let sigma_half = sym_pow(&params.sigma, 0.5)?;
    let sigma_inv_half = sym_pow(&params.sigma, -0.5)?;
    let sighat = pool.points().tr_mul(pool.points()) / n as f64;
    let mut psi = DVector::zeros(d);
    for (i, &z) in history.z().iter().enumerate() {
        if z > 0.0 {
            psi.axpy(z * xi[i], &pool.point(i), 1.0);
        }
    }

    let (mut term_a, mut excess) = (None, None);
    if sigz_invertible {
        let inv = sym_pow(&moments.sigma_z, -1.0)?;
        term_a = Some(op_norm(&(&sigma_half * inv * &sigma_half)).powi(2));
        if let Ok(h) = closed_form_from_moments(&moments, 0.0) {
            excess = Some(excess_risk(params, &h)?);
        }
    }
    let term_b = Some(op_norm(&(&sigma_inv_half * sym_pow(&sighat, 0.5)?)).powi(2));
    let term_c = if sighat_invertible {
        Some((sym_pow(&sighat, -0.5)? * &psi).norm_squared())
    } else {
        None
    };

    let mut report = DiagnosticsReport {
        lam_min_j: eig.lam_min_j,
        lam_max_j: eig.lam_max_j,
        lam_min_sighat: eig.lam_min_sighat,
        lam_max_sighat: eig.lam_max_sighat,
        lam_min_sigz,
        sighat_invertible,
        sigz_invertible,
        term_a,
        term_b,
        term_c,
        excess,
        bound_holds: None,
        thresholds: sample_thresholds(d, params.gamma0, params.gamma1, params.delta, n, &params.sigma)?,
        lemma_bounds: lemma_bounds(n, history.len(), d, params.delta),
    };
    if let (Some(e), Some(p)) = (report.excess, report.product()) {
        // rounding floor of forming h_A - beta in double precision
        let scale = op_norm(&sigma_half) * (params.beta.weights().norm() + psi.norm() / lam_min_sigz.max(f64::MIN_POSITIVE));
        let floor = (64.0 * f64::EPSILON * scale).powi(2);
        report.bound_holds = Some(e <= p * (1.0 + 1e-9) + floor);
    }
    Ok(report)
}

fn lemma_bounds(n: usize, t: usize, d: usize, delta: f64) -> LemmaBounds {
    let (n, t, d) = (n as f64, t.max(1) as f64, d as f64);
    let l = (1.0 / delta).ln();
    LemmaBounds {
        term_a: 400.0 / (n * n * t * t),
        term_b: 1.5,
        term_c: (2.0 * n * t * t + 56.0 * n.powi(3) * t.powf(1.5)) * (d + 2.0 * (d * l).sqrt() + 2.0 * l),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(d: usize, beta: &[f64]) -> AssumptionParams {
        AssumptionParams {
            gamma0: 1.0,
            gamma1: 1.0,
            delta: 0.1,
            sigma: DMatrix::identity(d, d),
            beta: Hypothesis::from_slice(beta).unwrap(),
            noise_bound: 2.0,
        }
    }

    #[test]
    fn excess_risk_small_cases() {
        let p = params(2, &[0.5, -1.0]);
        assert_eq!(excess_risk(&p, &p.beta).unwrap(), 0.0);
        let h = Hypothesis::from_slice(&[1.5, -1.0]).unwrap();
        assert_relative_eq!(excess_risk(&p, &h).unwrap(), 1.0);
    }

    #[test]
    fn n0_reference_value() {
        // 28800 (2 ln 5 + ln 100), evaluated with mpmath
        let t = sample_thresholds(2, 1.0, 1.0, 0.1, 100, &DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(t.n0, 225_332.525_112_661_2, max_relative = 1e-12);
    }

    #[test]
    fn thresholds_finite_in_one_dimension() {
        let t = sample_thresholds(1, 1.0, 1.0, 0.1, 100, &DMatrix::identity(1, 1)).unwrap();
        for v in [t.n0, t.t0, t.t1] {
            assert!(v.is_finite() && v > 0.0);
        }
        assert!(sample_thresholds(1, 1.0, 1.0, 1.0, 100, &DMatrix::identity(1, 1)).is_err());
    }

    #[test]
    fn n0_decreases_in_delta() {
        let sigma = DMatrix::identity(3, 3);
        let mut prev = f64::INFINITY;
        for k in 1..100 {
            let t = sample_thresholds(3, 1.2, 1.0, k as f64 / 100.0, 50, &sigma).unwrap();
            assert!(t.n0 < prev);
            prev = t.n0;
        }
    }

    #[test]
    fn basis_pool_has_flat_spectrum() {
        let d = 3;
        let pool = LabeledPool::regression(DMatrix::identity(d, d), vec![0.5, -0.2, 0.1]).unwrap();
        let mut history = QueryHistory::new(d);
        for i in 0..d {
            history.push(i, 1.0 / d as f64, true).unwrap();
        }
        let p = params(d, &[0.0, 0.0, 0.0]);
        let xi = pool.labels().to_vec();
        let r = risk_decomposition_terms(&pool, &history, &p, &xi).unwrap();
        assert_relative_eq!(r.lam_min_j, 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.lam_max_j, 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.lam_min_sigz, 3.0, epsilon = 1e-12);
        assert_eq!(r.bound_holds, Some(true));
    }

    #[test]
    fn noiseless_fit_has_zero_excess() {
        let pool = LabeledPool::regression(
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]),
            vec![2.0, -1.0, 1.0],
        )
        .unwrap();
        let mut history = QueryHistory::new(3);
        for (i, p) in [(0, 0.3), (1, 0.3), (2, 0.4)] {
            history.push(i, p, true).unwrap();
        }
        let p = params(2, &[2.0, -1.0]);
        let r = risk_decomposition_terms(&pool, &history, &p, &[0.0; 3]).unwrap();
        assert!(r.excess.unwrap() <= 1e-20);
        assert_eq!(r.bound_holds, Some(true));
    }

    #[test]
    fn singular_weights_are_flagged() {
        let pool = LabeledPool::regression(DMatrix::identity(2, 2), vec![1.0, 1.0]).unwrap();
        let mut history = QueryHistory::new(2);
        history.push(0, 0.5, true).unwrap();
        let p = params(2, &[1.0, 1.0]);
        let r = risk_decomposition_terms(&pool, &history, &p, &[0.0, 0.0]).unwrap();
        assert!(!r.sigz_invertible);
        assert!(r.term_a.is_none() && r.bound_holds.is_none());
    }
}
