use std::time::Instant;

use anyhow::Result;
use upal_core::baselines::{
    run_bmal_observed, run_passive_observed, run_ral_observed, BaselineConfig, BmalConfig, QueryEvent,
};
use upal_core::{run_upal_observed, Hypothesis, LabeledPool, LossSpec, UpalConfig};

use crate::config::{Algo, ExperimentConfig};

/// One (algo, seed, budget) run on a fixed train/test pair.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub algo: Algo,
    pub seed: u64,
    /// `(queries, test_error)` at each grid point reached.
    pub curve: Vec<(usize, f64)>,
    pub final_error: f64,
    pub oracle_calls: usize,
    /// UPAL rounds; baselines spend one round per query.
    pub rounds: usize,
    /// The UPAL round cap stopped the run before the budget was spent.
    pub capped: bool,
    pub seconds: f64,
}

/// Runs `algo` until `budget` unique labels are revealed, scoring the
/// hypothesis on `test` whenever the unique-query count first hits a grid point.
pub fn run_one(
    cfg: &ExperimentConfig,
    algo: Algo,
    seed: u64,
    budget: usize,
    grid: &[usize],
    train: &LabeledPool,
    test: &LabeledPool,
) -> Result<RunResult> {
    let loss = LossSpec::new(cfg.loss);
    let mut curve = Vec::with_capacity(grid.len());
    let mut score_err = None;
    let mut score = |q: usize, h: &Hypothesis| {
        if grid.binary_search(&q).is_ok() {
            match test.misclassification_rate(h) {
                Ok(e) => curve.push((q, e)),
                Err(e) => score_err = Some(e),
            }
        }
    };
    let start = Instant::now();
    let (hypothesis, oracle_calls, rounds, capped) = match algo {
        Algo::Upal => {
            let mut uc = UpalConfig::new(budget, loss, seed);
            uc.pmin = cfg.pmin;
            uc.lambda0 = cfg.lambda0;
            let out = run_upal_observed(train, &uc, |ev| {
                if ev.newly_revealed {
                    score(ev.unique_queries, ev.hypothesis);
                }
            })?;
            (out.hypothesis, out.oracle.calls, out.history.len(), out.capped)
        }
        Algo::Pl | Algo::Ral => {
            let mut bc = BaselineConfig::new(loss, seed);
            bc.lambda0 = cfg.lambda0;
            let observe = |ev: &QueryEvent<'_>| score(ev.queries, ev.hypothesis);
            let out = if algo == Algo::Pl {
                run_passive_observed(train, budget, &bc, observe)?
            } else {
                run_ral_observed(train, budget, &bc, observe)?
            };
            (out.hypothesis, out.oracle.calls, out.queried.len(), false)
        }
        Algo::Bmal => {
            let mut bc = BmalConfig::new(budget, seed);
            bc.subsample = cfg.subsample;
            bc.lambda0 = cfg.lambda0;
            let out = run_bmal_observed(train, &bc, |ev| score(ev.queries, ev.hypothesis))?;
            (out.hypothesis, out.oracle.calls, out.queried.len(), false)
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    if let Some(e) = score_err {
        return Err(e.into());
    }
    Ok(RunResult {
        algo,
        seed,
        curve,
        final_error: test.misclassification_rate(&hypothesis)?,
        oracle_calls,
        rounds,
        capped,
        seconds,
    })
}
