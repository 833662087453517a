//! Unbiased pool-based active learning.
//!
//! UPAL draws one pool point per round from a distribution that mixes a
//! probability floor with label-entropy scores, reuses labels on requery,
//! and refits a linear hypothesis by minimizing the importance-weighted
//! empirical risk. The crate also carries the passive/random/batch-mode
//! baselines, dataset plumbing, and numerical checks of the estimator's
//! statistical properties.

pub mod baselines;
pub mod data;
pub mod error;
pub mod linalg;
pub mod losses;
pub mod pool;
pub mod solver;
pub mod theory;
pub mod upal;

pub use error::{Result, UpalError};
pub use losses::{label_entropy, loss_value, estimate_eta, EtaRule, LossKind, LossSpec};
pub use pool::{
    accumulate_weights, importance_weighted_risk, pool_risk, Hypothesis, LabelOracle, LabeledPool,
    OracleStats, QueryHistory, QueryRecord,
};
pub use solver::{
    closed_form_squared, solve_weighted_erm, spd_solve, ErmFit, ErmProblem, SolverOptions,
    WeightedMoments,
};
pub use upal::{
    pmin_schedule, query_distribution, run_upal, run_upal_observed, sample_index, PminVariant,
    RoundEvent, RoundState, StopRule, UpalConfig, UpalOutcome, UpalRun,
};
