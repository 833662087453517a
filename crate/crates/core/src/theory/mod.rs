//! Numerical checks of the estimator's statistical guarantees: unbiasedness
//! of the importance-weighted risk, the exponentially weighted average
//! identity for the squared loss, the excess-risk decomposition, the sample
//! size thresholds, and empirical violation rates of the concentration
//! bounds used along the way.

mod estimator;
mod risk;
mod tails;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::pool::Hypothesis;

pub use estimator::{
    ewa_check, unbiasedness_check, unbiasedness_check_with, Estimator, EwaReport, QuerySampler,
    UnbiasednessReport, UnbiasednessSetup,
};
pub use risk::{
    eigen_diagnostics, excess_risk, risk_decomposition_terms, sample_thresholds, DiagnosticsReport,
    EigenDiagnostics, LemmaBounds, Thresholds,
};
pub use tails::{allowed_violation_rate, tail_bound_suite, TailSuiteConfig, TailReport};

/// Population-level quantities of a synthetic model.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionParams {
    /// Leverage constant: `||Sigma^{-1/2} x|| <= gamma0 sqrt(d)`.
    pub gamma0: f64,
    /// Subgaussian moment constant.
    pub gamma1: f64,
    pub delta: f64,
    pub sigma: DMatrix<f64>,
    pub beta: Hypothesis,
    /// Bound on `|xi|`.
    pub noise_bound: f64,
}

/// One line of a diagnostics JSON report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, statistic: f64, threshold: f64, pass: bool) -> Self {
        Self {
            name: name.into(),
            statistic,
            threshold,
            pass,
        }
    }
}

/// Independent per-replicate seed derived from a base seed (splitmix64).
pub(crate) fn stream_seed(seed: u64, k: u64) -> u64 {
    let mut x = seed ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
