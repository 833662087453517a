//! The UPAL round loop: entropy-driven query distribution with a probability
//! floor, one sampled point per round, label reuse on requery, and an
//! importance-weighted ERM refit after every round.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UpalError};
use crate::losses::{label_entropy, LossKind, LossSpec};
use crate::pool::{Hypothesis, LabelOracle, LabeledPool, OracleStats, QueryHistory};
use crate::solver::{
    closed_form_from_moments, solve_weighted_erm, ErmProblem, SolverOptions, WeightedMoments,
    JITTER,
};

/// Below this total entropy the distribution falls back to uniform.
const MIN_ENTROPY_MASS: f64 = 1e-12;

/// Probability floor schedule `p_min^t`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PminVariant {
    /// `1 / (n t^{1/4})`
    #[default]
    Quartic,
    /// `1 / (n sqrt(t))`
    Sqrt,
    /// `1 / (n t)`
    Linear,
}

impl FromStr for PminVariant {
    type Err = UpalError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quartic" => Ok(Self::Quartic),
            "sqrt" => Ok(Self::Sqrt),
            "linear" => Ok(Self::Linear),
            other => Err(UpalError::InvalidConfig(format!(
                "unknown p_min variant {other:?} (expected quartic, sqrt or linear)"
            ))),
        }
    }
}

impl fmt::Display for PminVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Quartic => "quartic",
            Self::Sqrt => "sqrt",
            Self::Linear => "linear",
        })
    }
}

pub fn pmin_schedule(n: usize, t: usize, variant: PminVariant) -> f64 {
    let n = n as f64;
    let t = t.max(1) as f64;
    match variant {
        PminVariant::Quartic => 1.0 / (n * t.powf(0.25)),
        PminVariant::Sqrt => 1.0 / (n * t.sqrt()),
        PminVariant::Linear => 1.0 / (n * t),
    }
}

/// Round-`t` ridge coefficient `lambda0 * max(1, sum z) / n`.
pub fn ridge_schedule(lambda0: f64, weight_sum: f64, n: usize) -> f64 {
    lambda0 * weight_sum.max(1.0) / n as f64
}

/// When a run stops.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "rounds")]
pub enum StopRule {
    /// Stop as soon as `budget` distinct labels have been revealed.
    #[default]
    Budget,
    /// Run exactly this many rounds (the budget still caps oracle calls).
    Rounds(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpalConfig {
    pub budget: usize,
    pub pmin: PminVariant,
    pub loss: LossSpec,
    pub lambda0: f64,
    pub seed: u64,
    /// Safety cap on rounds; `None` means `50 * budget`.
    pub max_rounds: Option<usize>,
    pub stop: StopRule,
    pub solver: SolverOptions,
}

impl UpalConfig {
    pub fn new(budget: usize, loss: LossSpec, seed: u64) -> Self {
        Self {
            budget,
            pmin: PminVariant::default(),
            loss,
            lambda0: 1e-3,
            seed,
            max_rounds: None,
            stop: StopRule::Budget,
            solver: SolverOptions::default(),
        }
    }

    pub fn round_cap(&self) -> usize {
        match self.stop {
            StopRule::Budget => self.max_rounds.unwrap_or(50 * self.budget),
            StopRule::Rounds(t) => t,
        }
    }

    pub fn validate(&self, pool_size: usize) -> Result<()> {
        if self.budget == 0 {
            return Err(UpalError::InvalidConfig("budget must be at least 1".into()));
        }
        if self.budget > pool_size {
            return Err(UpalError::BudgetExceedsPool {
                budget: self.budget,
                pool: pool_size,
            });
        }
        if let (StopRule::Budget, Some(cap)) = (self.stop, self.max_rounds) {
            if cap < self.budget {
                return Err(UpalError::InvalidConfig(format!(
                    "max_rounds {cap} is below the budget {}",
                    self.budget
                )));
            }
        }
        if !(self.lambda0 >= 0.0 && self.lambda0.is_finite()) {
            return Err(UpalError::InvalidConfig(format!(
                "lambda0 must be finite and >= 0, got {}",
                self.lambda0
            )));
        }
        Ok(())
    }
}

/// State carried between rounds.
#[derive(Debug, Clone)]
pub struct RoundState {
    /// Index of the next round to play (starts at 1).
    pub t: usize,
    /// `h_{A,t-1}`.
    pub h_prev: Hypothesis,
    /// Distribution used in the most recent round.
    pub probs: Vec<f64>,
    pub history: QueryHistory,
}

/// Step-5 distribution: floor `p_min^t` plus the remaining mass split in
/// proportion to each point's label entropy under `h_prev`.
pub fn query_distribution(
    pool: &LabeledPool,
    h_prev: &Hypothesis,
    t: usize,
    loss: &LossSpec,
    variant: PminVariant,
) -> Result<Vec<f64>> {
    let scores = pool.scores(h_prev)?;
    let entropies: Vec<f64> = scores
        .iter()
        .map(|&s| label_entropy(loss.eta_from_score(s)))
        .collect();
    Ok(distribution_from_entropies(&entropies, t, variant))
}

pub(crate) fn distribution_from_entropies(entropies: &[f64], t: usize, variant: PminVariant) -> Vec<f64> {
    let n = entropies.len();
    let total: f64 = entropies.iter().sum();
    if total < MIN_ENTROPY_MASS {
        return vec![1.0 / n as f64; n];
    }
    let pmin = pmin_schedule(n, t, variant);
    let spread = (1.0 - n as f64 * pmin).max(0.0);
    entropies.iter().map(|h| pmin + spread * h / total).collect()
}

pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    let dist = WeightedIndex::new(probs)
        .map_err(|e| UpalError::InvalidConfig(format!("invalid query distribution: {e}")))?;
    Ok(dist.sample(rng))
}

/// What happened in one round; handed to run observers.
#[derive(Debug, Clone, Copy)]
pub struct RoundEvent<'a> {
    pub round: usize,
    pub index: usize,
    pub prob: f64,
    pub pmin: f64,
    pub newly_revealed: bool,
    pub unique_queries: usize,
    pub lambda: f64,
    pub hypothesis: &'a Hypothesis,
}

#[derive(Debug, Clone)]
pub struct UpalOutcome {
    pub hypothesis: Hypothesis,
    pub history: QueryHistory,
    pub oracle: OracleStats,
    /// Ridge coefficient of the final refit.
    pub lambda: f64,
    /// The round cap ended the run before the budget was spent.
    pub capped: bool,
    /// Rounds in which a singular system forced the jitter ridge.
    pub jitter_rounds: usize,
}

/// A UPAL run that can be advanced one round at a time.
pub struct UpalRun<'a> {
    pool: &'a LabeledPool,
    config: UpalConfig,
    oracle: LabelOracle<'a>,
    state: RoundState,
    moments: WeightedMoments,
    rng: ChaCha8Rng,
    lambda: f64,
    jitter_rounds: usize,
}

impl<'a> UpalRun<'a> {
    pub fn new(pool: &'a LabeledPool, config: UpalConfig) -> Result<Self> {
        config.validate(pool.len())?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            pool,
            oracle: LabelOracle::new(pool),
            state: RoundState {
                t: 1,
                h_prev: Hypothesis::zeros(pool.dim()),
                probs: Vec::new(),
                history: QueryHistory::new(pool.len()),
            },
            moments: WeightedMoments::zeros(pool.dim()),
            rng,
            lambda: 0.0,
            jitter_rounds: 0,
            config,
        })
    }

    pub fn state(&self) -> &RoundState {
        &self.state
    }

    pub fn unique_queries(&self) -> usize {
        self.oracle.calls()
    }

    /// Whether the configured stopping rule (or the round cap) has fired.
    pub fn finished(&self) -> bool {
        let played = self.state.t - 1;
        match self.config.stop {
            StopRule::Budget => {
                self.oracle.calls() >= self.config.budget || played >= self.config.round_cap()
            }
            StopRule::Rounds(t) => played >= t,
        }
    }

    /// Plays one round. Returns `None` when the sampled point would need an
    /// oracle call beyond the budget; the run is then over.
    pub fn step(&mut self) -> Result<Option<RoundEvent<'_>>> {
        let t = self.state.t;
        let n = self.pool.len();
        let probs = query_distribution(
            self.pool,
            &self.state.h_prev,
            t,
            &self.config.loss,
            self.config.pmin,
        )?;
        let j = sample_index(&probs, &mut self.rng)?;
        let p = probs[j];
        self.state.probs = probs;

        if !self.oracle.is_revealed(j) && self.oracle.calls() >= self.config.budget {
            return Ok(None);
        }
        let (_label, fresh) = self.oracle.query(j);
        self.state.history.push(j, p, fresh)?;
        self.moments.add_point(self.pool, j, 1.0 / p);

        self.lambda = ridge_schedule(self.config.lambda0, self.moments.c, n);
        let h = self
            .refit()
            .map_err(|e| UpalError::Round { round: t, source: Box::new(e) })?;
        self.state.h_prev = h;
        self.state.t += 1;

        Ok(Some(RoundEvent {
            round: t,
            index: j,
            prob: p,
            pmin: pmin_schedule(n, t, self.config.pmin),
            newly_revealed: fresh,
            unique_queries: self.oracle.calls(),
            lambda: self.lambda,
            hypothesis: &self.state.h_prev,
        }))
    }

    fn refit(&mut self) -> Result<Hypothesis> {
        match self.config.loss.kind {
            LossKind::Squared => match closed_form_from_moments(&self.moments, self.lambda) {
                Ok(h) => Ok(h),
                Err(UpalError::SingularSystem { .. }) if self.lambda == 0.0 => {
                    self.jitter_rounds += 1;
                    let jitter = JITTER * self.moments.sigma_z.trace() / self.pool.dim() as f64;
                    closed_form_from_moments(&self.moments, jitter)
                }
                Err(e) => Err(e),
            },
            LossKind::Logistic => {
                let problem = ErmProblem::new(
                    self.pool,
                    self.state.history.z(),
                    self.config.loss,
                    self.lambda,
                )?;
                let fit = solve_weighted_erm(&problem, &self.state.h_prev, &self.config.solver)?;
                if fit.jittered {
                    self.jitter_rounds += 1;
                }
                Ok(fit.hypothesis)
            }
        }
    }

    pub fn finish(self) -> UpalOutcome {
        let capped = matches!(self.config.stop, StopRule::Budget)
            && self.oracle.calls() < self.config.budget;
        UpalOutcome {
            hypothesis: self.state.h_prev,
            history: self.state.history,
            oracle: self.oracle.stats(),
            lambda: self.lambda,
            capped,
            jitter_rounds: self.jitter_rounds,
        }
    }
}

/// Runs UPAL to completion, calling `observer` after every round's refit.
pub fn run_upal_observed<F>(pool: &LabeledPool, config: &UpalConfig, mut observer: F) -> Result<UpalOutcome>
where
    F: FnMut(&RoundEvent<'_>),
{
    let mut run = UpalRun::new(pool, config.clone())?;
    while !run.finished() {
        match run.step()? {
            Some(event) => observer(&event),
            None => break,
        }
    }
    Ok(run.finish())
}

pub fn run_upal(pool: &LabeledPool, config: &UpalConfig) -> Result<UpalOutcome> {
    run_upal_observed(pool, config, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    fn line_pool(n: usize) -> LabeledPool {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![1.0, i as f64 / n as f64 - 0.5]).collect();
        let labels = (0..n).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        LabeledPool::from_rows(&rows, labels).unwrap()
    }

    #[test]
    fn pmin_variants() {
        assert_relative_eq!(pmin_schedule(100, 16, PminVariant::Quartic), 0.005, epsilon = 1e-15);
        assert_relative_eq!(pmin_schedule(100, 16, PminVariant::Linear), 0.000625, epsilon = 1e-15);
        assert_relative_eq!(pmin_schedule(100, 16, PminVariant::Sqrt), 0.0025, epsilon = 1e-15);
        for v in [PminVariant::Quartic, PminVariant::Sqrt, PminVariant::Linear] {
            assert_eq!(pmin_schedule(7, 1, v), 1.0 / 7.0);
        }
    }

    #[test]
    fn zero_hypothesis_gives_uniform() {
        let pool = line_pool(5);
        let p = query_distribution(&pool, &Hypothesis::zeros(2), 9, &LossSpec::logistic(), PminVariant::Linear)
            .unwrap();
        for pi in p {
            assert_relative_eq!(pi, 0.2, epsilon = 1e-15);
        }
    }

    #[test]
    fn first_round_quartic_is_uniform() {
        let pool = line_pool(4);
        let h = Hypothesis::from_slice(&[0.3, 2.0]).unwrap();
        let p = query_distribution(&pool, &h, 1, &LossSpec::logistic(), PminVariant::Quartic).unwrap();
        for pi in p {
            assert_relative_eq!(pi, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn two_point_distribution() {
        // p_min = 1/(2 * 16^{1/4}) = 0.25; spread 0.5 goes entirely to point 0.
        let p = distribution_from_entropies(&[LN_2, 0.0], 16, PminVariant::Quartic);
        assert_relative_eq!(p[0], 0.75, epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn saturated_predictions_fall_back_to_uniform() {
        let p = distribution_from_entropies(&[0.0, 0.0, 0.0], 4, PminVariant::Linear);
        assert_eq!(p, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn degenerate_distribution_samples_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(sample_index(&[1.0, 0.0, 0.0], &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn budget_accounting_small_pool() {
        let pool = line_pool(3);
        let out = run_upal(&pool, &UpalConfig::new(3, LossSpec::logistic(), 1)).unwrap();
        assert_eq!(out.history.unique_queries(), 3);
        assert_eq!(out.oracle.calls, 3);
        assert!(!out.capped);
    }

    #[test]
    fn rejects_budget_larger_than_pool() {
        let pool = line_pool(3);
        assert!(matches!(
            run_upal(&pool, &UpalConfig::new(4, LossSpec::squared(), 1)),
            Err(UpalError::BudgetExceedsPool { .. })
        ));
        assert!(run_upal(&pool, &UpalConfig::new(0, LossSpec::squared(), 1)).is_err());
    }

    #[test]
    fn round_cap_flags_run() {
        let pool = line_pool(40);
        let mut cfg = UpalConfig::new(40, LossSpec::squared(), 5);
        cfg.max_rounds = Some(40);
        let out = run_upal(&pool, &cfg).unwrap();
        assert!(out.history.len() <= 40);
        if out.oracle.calls < 40 {
            assert!(out.capped);
        }
    }

    #[test]
    fn fixed_round_runs_play_every_round() {
        let pool = line_pool(6);
        let mut cfg = UpalConfig::new(6, LossSpec::squared(), 2);
        cfg.stop = StopRule::Rounds(25);
        let out = run_upal(&pool, &cfg).unwrap();
        assert_eq!(out.history.len(), 25);
        assert!(out.oracle.calls <= 6);
    }
}
