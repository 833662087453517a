use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::{stream_seed, CheckRecord};
use crate::error::{Result, UpalError};
use crate::losses::LossSpec;
use crate::pool::{importance_weighted_risk, pool_risk, Hypothesis, LabeledPool, QueryHistory};
use crate::solver::{closed_form_from_moments, WeightedMoments};
use crate::upal::{sample_index, PminVariant, StopRule, UpalConfig, UpalRun};

/// How query histories are generated for the unbiasedness check.
#[derive(Debug, Clone, PartialEq)]
pub enum QuerySampler {
    /// The UPAL engine's own adaptive distributions.
    Engine(PminVariant),
    /// The same fixed distribution in every round.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// `(1/(n T)) sum_i z_i phi_i`.
    ImportanceWeighted,
    /// `(1/T) sum_t phi_{j_t}`; biased whenever the query law is not uniform.
    Unweighted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnbiasednessSetup {
    pub rounds: usize,
    pub replicates: usize,
    pub seed: u64,
    pub sampler: QuerySampler,
    pub estimator: Estimator,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnbiasednessReport {
    pub mean: f64,
    pub se: f64,
    pub risk: f64,
    pub replicates: usize,
    pub pass: bool,
}

impl UnbiasednessReport {
    pub fn record(&self, name: &str) -> CheckRecord {
        CheckRecord::new(name, (self.mean - self.risk).abs(), self.allowance(), self.pass)
    }

    fn allowance(&self) -> f64 {
        4.0 * self.se + 1e-12 * self.risk.abs().max(1.0)
    }
}

/// Monte-Carlo mean of the importance-weighted risk over `replicates`
/// independent `rounds`-round histories drawn by the engine.
pub fn unbiasedness_check(
    pool: &LabeledPool,
    h: &Hypothesis,
    loss: &LossSpec,
    rounds: usize,
    replicates: usize,
    seed: u64,
) -> Result<UnbiasednessReport> {
    let setup = UnbiasednessSetup {
        rounds,
        replicates,
        seed,
        sampler: QuerySampler::Engine(PminVariant::default()),
        estimator: Estimator::ImportanceWeighted,
    };
    unbiasedness_check_with(pool, h, loss, &setup)
}

pub fn unbiasedness_check_with(
    pool: &LabeledPool,
    h: &Hypothesis,
    loss: &LossSpec,
    setup: &UnbiasednessSetup,
) -> Result<UnbiasednessReport> {
    if setup.rounds == 0 || setup.replicates < 2 {
        return Err(UpalError::InvalidConfig(
            "unbiasedness check needs rounds >= 1 and replicates >= 2".into(),
        ));
    }
    if let QuerySampler::Fixed(p) = &setup.sampler {
        if p.len() != pool.len() || p.iter().any(|&v| !(v > 0.0)) {
            return Err(UpalError::InvalidConfig(
                "fixed query distribution must be positive on every pool point".into(),
            ));
        }
    }
    let risk = pool_risk(pool, h, loss)?;
    let values: Vec<f64> = (0..setup.replicates)
        .into_par_iter()
        .map(|r| {
            let history = simulate_history(pool, loss, setup, stream_seed(setup.seed, r as u64))?;
            estimate(pool, &history, h, loss, setup.estimator)
        })
        .collect::<Result<_>>()?;
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let se = (var / m).sqrt();
    let mut report = UnbiasednessReport {
        mean,
        se,
        risk,
        replicates: setup.replicates,
        pass: false,
    };
    report.pass = (mean - risk).abs() <= report.allowance();
    Ok(report)
}

fn simulate_history(
    pool: &LabeledPool,
    loss: &LossSpec,
    setup: &UnbiasednessSetup,
    seed: u64,
) -> Result<QueryHistory> {
    match &setup.sampler {
        QuerySampler::Engine(variant) => {
            let mut config = UpalConfig::new(pool.len(), *loss, seed);
            config.pmin = *variant;
            config.stop = StopRule::Rounds(setup.rounds);
            let mut run = UpalRun::new(pool, config)?;
            while !run.finished() {
                if run.step()?.is_none() {
                    break;
                }
            }
            Ok(run.finish().history)
        }
        QuerySampler::Fixed(p) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut history = QueryHistory::new(pool.len());
            let mut seen = vec![false; pool.len()];
            let total: f64 = p.iter().sum();
            for _ in 0..setup.rounds {
                let j = sample_index(p, &mut rng)?;
                history.push(j, p[j] / total, !seen[j])?;
                seen[j] = true;
            }
            Ok(history)
        }
    }
}

fn estimate(
    pool: &LabeledPool,
    history: &QueryHistory,
    h: &Hypothesis,
    loss: &LossSpec,
    estimator: Estimator,
) -> Result<f64> {
    match estimator {
        Estimator::ImportanceWeighted => importance_weighted_risk(pool, history, h, loss),
        Estimator::Unweighted => {
            let total: f64 = history
                .rounds()
                .iter()
                .map(|r| loss.point_loss(h.weights().dot(&pool.point(r.index)), pool.label(r.index)))
                .sum();
            Ok(total / history.len() as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EwaReport {
    /// `h_A . x0` from the closed form.
    pub closed: f64,
    /// Self-normalized Monte-Carlo estimate of the weighted-average prediction.
    pub ewa_estimate: f64,
    pub se: f64,
    pub effective_samples: f64,
    pub pass: bool,
}

impl EwaReport {
    pub fn record(&self, name: &str) -> CheckRecord {
        CheckRecord::new(
            name,
            (self.ewa_estimate - self.closed).abs(),
            ewa_allowance(self.se, self.closed),
            self.pass,
        )
    }
}

fn ewa_allowance(se: f64, closed: f64) -> f64 {
    5.0 * se + 1e-12 * closed.abs().max(1.0)
}

const EWA_CHUNK: usize = 1 << 16;

/// Compares `h_A . x0` with the mean prediction under the density
/// `exp(-sum_i z_i (y_i - h . x_i)^2)`.
///
/// The density is evaluated pointwise and integrated by importance sampling
/// from a Gaussian twice as wide as the closed form's, so the estimate
/// would drift away if `h_A` were not the density's mean.
pub fn ewa_check(
    pool: &LabeledPool,
    history: &QueryHistory,
    x0: &DVector<f64>,
    samples: usize,
    seed: u64,
) -> Result<EwaReport> {
    let d = pool.dim();
    if d > 5 {
        return Err(UpalError::InvalidConfig(format!(
            "weighted-average check is limited to d <= 5, got {d}"
        )));
    }
    if x0.len() != d {
        return Err(UpalError::DimensionMismatch { expected: d, got: x0.len() });
    }
    if samples < 2 {
        return Err(UpalError::InvalidConfig("weighted-average check needs samples >= 2".into()));
    }
    let moments = WeightedMoments::from_weights(pool, history.z())?;
    let center = closed_form_from_moments(&moments, 0.0)?;
    let closed = center.weights().dot(x0);

    let chol = moments
        .sigma_z
        .clone()
        .cholesky()
        .ok_or(UpalError::NotPositiveDefinite)?;
    // h = center + L^{-T} eps has covariance Sigma_z^{-1}
    let lt = chol.l().transpose();
    let active: Vec<(DVector<f64>, f64, f64)> = history
        .z()
        .iter()
        .enumerate()
        .filter(|(_, &z)| z > 0.0)
        .map(|(i, &z)| {
            let x = pool.point(i);
            let r = pool.label(i) - center.weights().dot(&x);
            (x, z, r)
        })
        .collect();

    let chunks = samples.div_ceil(EWA_CHUNK);
    let draws: Vec<Vec<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = EWA_CHUNK.min(samples - c * EWA_CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, c as u64));
            (0..len)
                .map(|_| {
                    let eps = DVector::<f64>::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                    let offset = solve_upper(&lt, &eps);
                    let delta: f64 = active
                        .iter()
                        .map(|(x, z, r)| {
                            let s = offset.dot(x);
                            z * (s * s - 2.0 * r * s)
                        })
                        .sum();
                    let log_w = -delta + 0.5 * eps.norm_squared();
                    (log_w, closed + offset.dot(x0))
                })
                .collect()
        })
        .collect();

    let max_log = draws
        .iter()
        .flatten()
        .fold(f64::NEG_INFINITY, |m, (lw, _)| m.max(*lw));
    let (mut sw, mut swf, mut sw2) = (0.0, 0.0, 0.0);
    for &(lw, f) in draws.iter().flatten() {
        let w = (lw - max_log).exp();
        sw += w;
        swf += w * f;
        sw2 += w * w;
    }
    let estimate = swf / sw;
    let spread: f64 = draws
        .iter()
        .flatten()
        .map(|&(lw, f)| {
            let w = (lw - max_log).exp();
            (w * (f - estimate)).powi(2)
        })
        .sum();
    let se = spread.sqrt() / sw;
    Ok(EwaReport {
        closed,
        ewa_estimate: estimate,
        se,
        effective_samples: sw * sw / sw2,
        pass: (estimate - closed).abs() <= ewa_allowance(se, closed),
    })
}

/// Solves `U x = b` for upper-triangular `U`.
fn solve_upper(u: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    u.solve_upper_triangular(b).expect("nonzero Cholesky diagonal")
}
