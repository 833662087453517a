//! Comparison learners: passive learning (PL), random active learning (RAL)
//! and an approximate batch-mode active learner (BMAL).
//!
//! None of them requery or importance-weight: every revealed point enters
//! the refit with unit weight.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UpalError};
use crate::losses::{sigmoid, LossSpec};
use crate::pool::{Hypothesis, LabelOracle, LabeledPool, OracleStats};
use crate::solver::{solve_weighted_erm, ErmProblem, SolverOptions};
use crate::upal::ridge_schedule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub loss: LossSpec,
    pub lambda0: f64,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl BaselineConfig {
    pub fn new(loss: LossSpec, seed: u64) -> Self {
        Self {
            loss,
            lambda0: 1e-3,
            seed,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BmalConfig {
    pub budget: usize,
    pub subsample: usize,
    pub lambda0: f64,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl BmalConfig {
    pub fn new(budget: usize, seed: u64) -> Self {
        Self {
            budget,
            subsample: 300,
            lambda0: 1e-3,
            seed,
            solver: SolverOptions::default(),
        }
    }
}

/// Hypothesis after each query, for learning curves.
#[derive(Debug, Clone, Copy)]
pub struct QueryEvent<'a> {
    pub queries: usize,
    pub index: usize,
    pub hypothesis: &'a Hypothesis,
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub hypothesis: Hypothesis,
    /// Pool indices in query order.
    pub queried: Vec<usize>,
    pub oracle: OracleStats,
}

fn check_budget(pool: &LabeledPool, budget: usize) -> Result<()> {
    if budget == 0 {
        return Err(UpalError::InvalidConfig("budget must be at least 1".into()));
    }
    if budget > pool.len() {
        return Err(UpalError::BudgetExceedsPool {
            budget,
            pool: pool.len(),
        });
    }
    Ok(())
}

/// Unit-weight refit on the revealed points.
struct Refitter<'a> {
    pool: &'a LabeledPool,
    loss: LossSpec,
    lambda0: f64,
    solver: SolverOptions,
    z: Vec<f64>,
    h: Hypothesis,
}

impl<'a> Refitter<'a> {
    fn new(pool: &'a LabeledPool, loss: LossSpec, lambda0: f64, solver: SolverOptions) -> Self {
        Self {
            pool,
            loss,
            lambda0,
            solver,
            z: vec![0.0; pool.len()],
            h: Hypothesis::zeros(pool.dim()),
        }
    }

    fn add(&mut self, i: usize) {
        self.z[i] = 1.0;
    }

    fn refit(&mut self, queries: usize) -> Result<&Hypothesis> {
        let lambda = ridge_schedule(self.lambda0, queries as f64, self.pool.len());
        let problem = ErmProblem::new(self.pool, &self.z, self.loss, lambda)?;
        let fit = solve_weighted_erm(&problem, &self.h, &self.solver).map_err(|e| UpalError::Round {
            round: queries,
            source: Box::new(e),
        })?;
        self.h = fit.hypothesis;
        Ok(&self.h)
    }
}

/// Passive learning: `budget` points drawn uniformly without replacement,
/// unweighted regularized ERM on them.
pub fn run_passive_observed<F>(
    pool: &LabeledPool,
    budget: usize,
    config: &BaselineConfig,
    mut observer: F,
) -> Result<BaselineOutcome>
where
    F: FnMut(&QueryEvent<'_>),
{
    check_budget(pool, budget)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let order = index::sample(&mut rng, pool.len(), budget).into_vec();
    let mut oracle = LabelOracle::new(pool);
    let mut fit = Refitter::new(pool, config.loss, config.lambda0, config.solver);
    for (q, &i) in order.iter().enumerate() {
        oracle.query(i);
        fit.add(i);
        let h = fit.refit(q + 1)?;
        observer(&QueryEvent {
            queries: q + 1,
            index: i,
            hypothesis: h,
        });
    }
    Ok(BaselineOutcome {
        hypothesis: fit.h,
        queried: order,
        oracle: oracle.stats(),
    })
}

pub fn run_passive(pool: &LabeledPool, budget: usize, config: &BaselineConfig) -> Result<BaselineOutcome> {
    run_passive_observed(pool, budget, config, |_| {})
}

/// Random active learning: each round draws uniformly from the unqueried
/// points and refits without importance weights.
pub fn run_ral_observed<F>(
    pool: &LabeledPool,
    budget: usize,
    config: &BaselineConfig,
    mut observer: F,
) -> Result<BaselineOutcome>
where
    F: FnMut(&QueryEvent<'_>),
{
    check_budget(pool, budget)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut unqueried: Vec<usize> = (0..pool.len()).collect();
    let mut oracle = LabelOracle::new(pool);
    let mut fit = Refitter::new(pool, config.loss, config.lambda0, config.solver);
    let mut queried = Vec::with_capacity(budget);
    for q in 1..=budget {
        let i = unqueried.swap_remove(rng.random_range(0..unqueried.len()));
        oracle.query(i);
        fit.add(i);
        queried.push(i);
        let h = fit.refit(q)?;
        observer(&QueryEvent {
            queries: q,
            index: i,
            hypothesis: h,
        });
    }
    Ok(BaselineOutcome {
        hypothesis: fit.h,
        queried,
        oracle: oracle.stats(),
    })
}

pub fn run_ral(pool: &LabeledPool, budget: usize, config: &BaselineConfig) -> Result<BaselineOutcome> {
    run_ral_observed(pool, budget, config, |_| {})
}

/// Fisher-information surrogate for querying `candidate`:
/// `sum_{j in unqueried} pi_j (1 - pi_j) (xhat_j . xhat_c)^2`, with `pi` the
/// logistic probability under `h` and `xhat` the unit-normalized points.
///
/// This is an approximation of the batch-mode Fisher ratio criterion, not
/// the original objective.
pub fn bmal_score(candidate: usize, unqueried: &[usize], h: &Hypothesis, pool: &LabeledPool) -> Result<f64> {
    h.check_dim(pool.dim())?;
    let xc = unit(&pool.point(candidate));
    let mut total = 0.0;
    for &j in unqueried {
        let xj = pool.point(j);
        let pi = sigmoid(h.weights().dot(&xj));
        let cos = unit(&xj).dot(&xc);
        total += pi * (1.0 - pi) * cos * cos;
    }
    Ok(total)
}

fn unit(x: &DVector<f64>) -> DVector<f64> {
    let norm = x.norm();
    if norm > 0.0 {
        x / norm
    } else {
        x.clone()
    }
}

/// Approximate BMAL with one query per round: score a uniform subsample of
/// the unqueried points against the whole unqueried set, query the best
/// (lowest index on ties), refit logistic ERM.
pub fn run_bmal_observed<F>(pool: &LabeledPool, config: &BmalConfig, mut observer: F) -> Result<BaselineOutcome>
where
    F: FnMut(&QueryEvent<'_>),
{
    check_budget(pool, config.budget)?;
    if config.subsample == 0 {
        return Err(UpalError::InvalidConfig("BMAL subsample size must be at least 1".into()));
    }
    let n = pool.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normalized = {
        let mut m = pool.points().clone();
        for mut row in m.row_iter_mut() {
            let norm = row.norm();
            if norm > 0.0 {
                row /= norm;
            }
        }
        m
    };
    let mut unqueried: Vec<usize> = (0..n).collect();
    let mut oracle = LabelOracle::new(pool);
    let mut fit = Refitter::new(pool, LossSpec::logistic(), config.lambda0, config.solver);
    let mut queried = Vec::with_capacity(config.budget);

    for q in 1..=config.budget {
        let k = config.subsample.min(unqueried.len());
        let mut candidates: Vec<usize> = index::sample(&mut rng, unqueried.len(), k)
            .into_iter()
            .map(|pos| unqueried[pos])
            .collect();
        candidates.sort_unstable();

        // Fisher weights of the unqueried points under the current h.
        let xu = normalized.select_rows(&unqueried);
        let raw_scores = pool.points().select_rows(&unqueried) * fit.h.weights();
        let info = raw_scores.map(|s| {
            let pi = sigmoid(s);
            pi * (1.0 - pi)
        });
        let xc = normalized.select_rows(&candidates);
        // cosines[j, c] = xhat_j . xhat_c
        let cosines: DMatrix<f64> = &xu * xc.transpose();
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (col, &c) in candidates.iter().enumerate() {
            let score: f64 = cosines
                .column(col)
                .iter()
                .zip(info.iter())
                .map(|(cos, w)| w * cos * cos)
                .sum();
            if score > best.0 {
                best = (score, c);
            }
        }
        let pick = best.1;
        let pos = unqueried.binary_search(&pick).expect("candidate is unqueried");
        unqueried.remove(pos);
        oracle.query(pick);
        fit.add(pick);
        queried.push(pick);
        let h = fit.refit(q)?;
        observer(&QueryEvent {
            queries: q,
            index: pick,
            hypothesis: h,
        });
    }
    Ok(BaselineOutcome {
        hypothesis: fit.h,
        queried,
        oracle: oracle.stats(),
    })
}

pub fn run_bmal(pool: &LabeledPool, config: &BmalConfig) -> Result<BaselineOutcome> {
    run_bmal_observed(pool, config, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::collections::HashSet;

    fn grid_pool(n: usize) -> LabeledPool {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let a = i as f64 * 0.37;
                vec![a.cos(), a.sin() + 0.1]
            })
            .collect();
        let labels = rows.iter().map(|r| if r[0] + 0.3 * r[1] >= 0.0 { 1.0 } else { -1.0 }).collect();
        LabeledPool::from_rows(&rows, labels).unwrap()
    }

    #[test]
    fn orthonormal_self_term() {
        let pool = LabeledPool::from_rows(
            &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            vec![1.0, -1.0, 1.0],
        )
        .unwrap();
        let h = Hypothesis::zeros(3);
        for c in 0..3 {
            assert_relative_eq!(bmal_score(c, &[0, 1, 2], &h, &pool).unwrap(), 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn duplicates_add_fisher_weight() {
        let pool = LabeledPool::from_rows(
            &[vec![1.0, 0.0], vec![2.0, 0.0], vec![0.0, 1.0]],
            vec![1.0, 1.0, -1.0],
        )
        .unwrap();
        let h = Hypothesis::zeros(2);
        let alone = bmal_score(0, &[0, 2], &h, &pool).unwrap();
        let with_dup = bmal_score(0, &[0, 1, 2], &h, &pool).unwrap();
        assert_relative_eq!(with_dup - alone, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn saturated_probabilities_score_zero() {
        let pool = LabeledPool::from_rows(&[vec![1.0], vec![2.0]], vec![1.0, 1.0]).unwrap();
        let h = Hypothesis::from_slice(&[1e4]).unwrap();
        assert_eq!(bmal_score(0, &[0, 1], &h, &pool).unwrap(), 0.0);
    }

    #[test]
    fn passive_full_budget_uses_whole_pool() {
        let pool = grid_pool(12);
        let out = run_passive(&pool, 12, &BaselineConfig::new(LossSpec::logistic(), 4)).unwrap();
        let set: HashSet<_> = out.queried.iter().copied().collect();
        assert_eq!(set.len(), 12);
        assert_eq!(out.oracle.calls, 12);
    }

    #[test]
    fn ral_queries_each_point_once() {
        let pool = grid_pool(10);
        let out = run_ral(&pool, 10, &BaselineConfig::new(LossSpec::squared(), 9)).unwrap();
        let set: HashSet<_> = out.queried.iter().copied().collect();
        assert_eq!(set.len(), 10);
        assert_eq!(out.oracle.calls, 10);
    }

    #[test]
    fn bmal_never_requeries() {
        let pool = grid_pool(30);
        let mut cfg = BmalConfig::new(20, 2);
        cfg.subsample = 7;
        let out = run_bmal(&pool, &cfg).unwrap();
        let set: HashSet<_> = out.queried.iter().copied().collect();
        assert_eq!(set.len(), 20);
        assert_eq!(out.oracle.calls, 20);
    }

    #[test]
    fn baselines_reject_oversized_budget() {
        let pool = grid_pool(5);
        let cfg = BaselineConfig::new(LossSpec::logistic(), 1);
        assert!(run_passive(&pool, 6, &cfg).is_err());
        assert!(run_ral(&pool, 6, &cfg).is_err());
        assert!(run_bmal(&pool, &BmalConfig::new(6, 1)).is_err());
    }
}
