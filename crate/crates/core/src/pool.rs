//! Pool, hypothesis and query-history types, the dataset-backed label
//! oracle, and the importance-weighted risk estimator built on them.

use std::collections::HashSet;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, UpalError};
use crate::losses::LossSpec;

/// A fixed pool of points with their (hidden until queried) labels.
///
/// Rows of `points` are the pool points. Classification pools carry labels in
/// {-1, +1}; [`LabeledPool::regression`] relaxes that to arbitrary finite
/// targets for the squared-loss consistency experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPool {
    points: DMatrix<f64>,
    labels: Vec<f64>,
}

impl LabeledPool {
    pub fn new(points: DMatrix<f64>, labels: Vec<f64>) -> Result<Self> {
        if let Some(i) = labels.iter().position(|&y| y != 1.0 && y != -1.0) {
            return Err(UpalError::InvalidPool(format!(
                "label {} at index {i} is not +1 or -1",
                labels[i]
            )));
        }
        Self::regression(points, labels)
    }

    /// Pool with real-valued targets.
    pub fn regression(points: DMatrix<f64>, targets: Vec<f64>) -> Result<Self> {
        let (n, d) = points.shape();
        if n == 0 || d == 0 {
            return Err(UpalError::InvalidPool(format!("empty pool ({n}x{d})")));
        }
        if targets.len() != n {
            return Err(UpalError::DimensionMismatch {
                expected: n,
                got: targets.len(),
            });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(UpalError::InvalidPool("non-finite feature value".into()));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(UpalError::InvalidPool("non-finite label".into()));
        }
        Ok(Self {
            points,
            labels: targets,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(UpalError::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        let points = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(points, labels)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        self.points.row(i).transpose()
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// Scores `h . x_i` for every pool point.
    pub fn scores(&self, h: &Hypothesis) -> Result<DVector<f64>> {
        h.check_dim(self.dim())?;
        Ok(&self.points * h.weights())
    }

    /// Sub-pool made of the given row indices, in order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let points = self.points.select_rows(indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::regression(points, labels)
    }

    /// Zero-one error of `sign(h . x)` against the labels (sign(0) = +1).
    pub fn misclassification_rate(&self, h: &Hypothesis) -> Result<f64> {
        let scores = self.scores(h)?;
        let wrong = scores
            .iter()
            .zip(&self.labels)
            .filter(|(s, &y)| {
                let pred = if **s >= 0.0 { 1.0 } else { -1.0 };
                pred != y
            })
            .count();
        Ok(wrong as f64 / self.len() as f64)
    }
}

/// Linear hypothesis `h` in R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis(DVector<f64>);

impl Hypothesis {
    pub fn new(weights: DVector<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(UpalError::InvalidConfig(
                "hypothesis has non-finite weights".into(),
            ));
        }
        Ok(Self(weights))
    }

    pub fn zeros(d: usize) -> Self {
        Self(DVector::zeros(d))
    }

    pub fn from_slice(w: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(w))
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.0.iter().zip(x).map(|(a, b)| a * b).sum())
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        if self.0.len() != d {
            return Err(UpalError::DimensionMismatch {
                expected: d,
                got: self.0.len(),
            });
        }
        Ok(())
    }
}

/// One UPAL round: the sampled index and the probability it was drawn with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub round: usize,
    pub index: usize,
    pub prob: f64,
}

/// Per-round sampling record plus the cached importance weights
/// `z_i = sum_t Q_i^t / p_i^t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryHistory {
    pool_size: usize,
    rounds: Vec<QueryRecord>,
    unique_queries: usize,
    z: Vec<f64>,
}

impl QueryHistory {
    pub fn new(pool_size: usize) -> Self {
        Self {
            pool_size,
            rounds: Vec::new(),
            unique_queries: 0,
            z: vec![0.0; pool_size],
        }
    }

    /// Appends a round. `newly_revealed` is true when the oracle had to be
    /// called for this index.
    pub fn push(&mut self, index: usize, prob: f64, newly_revealed: bool) -> Result<()> {
        if index >= self.pool_size {
            return Err(UpalError::DimensionMismatch {
                expected: self.pool_size,
                got: index,
            });
        }
        if !(prob > 0.0 && prob <= 1.0) {
            return Err(UpalError::InvalidConfig(format!(
                "sampling probability {prob} outside (0, 1]"
            )));
        }
        let round = self.rounds.len() + 1;
        self.rounds.push(QueryRecord { round, index, prob });
        self.z[index] += 1.0 / prob;
        if newly_revealed {
            self.unique_queries += 1;
        }
        Ok(())
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    pub fn rounds(&self) -> &[QueryRecord] {
        &self.rounds
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn unique_queries(&self) -> usize {
        self.unique_queries
    }

    /// Cached importance weights, updated incrementally by [`push`](Self::push).
    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// `c = sum_i z_i`.
    pub fn weight_sum(&self) -> f64 {
        self.z.iter().sum()
    }

    pub fn distinct_indices(&self) -> usize {
        self.rounds
            .iter()
            .map(|r| r.index)
            .collect::<HashSet<_>>()
            .len()
    }

    /// Audit record: one `t,j,p` line per round.
    pub fn to_lines(&self) -> String {
        let mut out = String::with_capacity(self.rounds.len() * 24);
        for r in &self.rounds {
            let _ = writeln!(out, "{},{},{}", r.round, r.index, r.prob);
        }
        out
    }

    /// Replays an audit record. Every distinct index counts as one unique query.
    pub fn from_lines(pool_size: usize, text: &str) -> Result<Self> {
        let mut history = Self::new(pool_size);
        let mut seen = HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(UpalError::Parse {
                    line: line_no,
                    message: format!("expected t,j,p but found {} fields", fields.len()),
                });
            }
            let parse_err = |what: &str| UpalError::Parse {
                line: line_no,
                message: format!("invalid {what}"),
            };
            let t: usize = fields[0].trim().parse().map_err(|_| parse_err("round"))?;
            let j: usize = fields[1].trim().parse().map_err(|_| parse_err("index"))?;
            let p: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| parse_err("probability"))?;
            if t != history.len() + 1 {
                return Err(UpalError::Parse {
                    line: line_no,
                    message: format!("round {t} out of sequence"),
                });
            }
            let new = seen.insert(j);
            history.push(j, p, new).map_err(|e| UpalError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        }
        Ok(history)
    }
}

/// Label-reveal accounting for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleStats {
    pub calls: usize,
    pub revealed: Vec<bool>,
}

/// Dataset-backed labeling oracle. Each index is charged at most once;
/// later queries of the same index reuse the stored label.
#[derive(Debug, Clone)]
pub struct LabelOracle<'a> {
    pool: &'a LabeledPool,
    revealed: Vec<bool>,
    calls: usize,
}

impl<'a> LabelOracle<'a> {
    pub fn new(pool: &'a LabeledPool) -> Self {
        Self {
            pool,
            revealed: vec![false; pool.len()],
            calls: 0,
        }
    }

    pub fn is_revealed(&self, i: usize) -> bool {
        self.revealed[i]
    }

    /// Returns the label and whether this call revealed it for the first time.
    pub fn query(&mut self, i: usize) -> (f64, bool) {
        let fresh = !self.revealed[i];
        if fresh {
            self.revealed[i] = true;
            self.calls += 1;
        }
        (self.pool.label(i), fresh)
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn stats(&self) -> OracleStats {
        OracleStats {
            calls: self.calls,
            revealed: self.revealed.clone(),
        }
    }
}

/// Full-information empirical risk `(1/n) sum_i phi(y_i h . x_i)`.
pub fn pool_risk(pool: &LabeledPool, h: &Hypothesis, loss: &LossSpec) -> Result<f64> {
    let scores = pool.scores(h)?;
    let total: f64 = scores
        .iter()
        .zip(pool.labels())
        .map(|(&s, &y)| loss.point_loss(s, y))
        .sum();
    Ok(total / pool.len() as f64)
}

/// Importance-weighted risk `(1/(n t)) sum_i z_i phi(y_i h . x_i)`, computed
/// from the cached weights.
pub fn importance_weighted_risk(
    pool: &LabeledPool,
    history: &QueryHistory,
    h: &Hypothesis,
    loss: &LossSpec,
) -> Result<f64> {
    if history.is_empty() {
        return Err(UpalError::EmptyHistory);
    }
    if history.pool_size() != pool.len() {
        return Err(UpalError::DimensionMismatch {
            expected: pool.len(),
            got: history.pool_size(),
        });
    }
    h.check_dim(pool.dim())?;
    let mut total = 0.0;
    for (i, &zi) in history.z().iter().enumerate() {
        if zi > 0.0 {
            let s: f64 = pool.points.row(i).iter().zip(h.0.iter()).map(|(a, b)| a * b).sum();
            total += zi * loss.point_loss(s, pool.label(i));
        }
    }
    Ok(total / (pool.len() as f64 * history.len() as f64))
}

/// Re-sums `z` from the per-round records.
pub fn accumulate_weights(history: &QueryHistory) -> Vec<f64> {
    let mut z = vec![0.0; history.pool_size()];
    for r in history.rounds() {
        z[r.index] += 1.0 / r.prob;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_pool() -> LabeledPool {
        LabeledPool::from_rows(&[vec![2.0]], vec![1.0]).unwrap()
    }

    #[test]
    fn zero_hypothesis_risks() {
        let pool =
            LabeledPool::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5], vec![0.1, 0.1]], vec![1.0, -1.0, 1.0])
                .unwrap();
        let h = Hypothesis::zeros(2);
        assert_eq!(pool_risk(&pool, &h, &LossSpec::squared()).unwrap(), 1.0);
        assert_relative_eq!(
            pool_risk(&pool, &h, &LossSpec::logistic()).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn interpolating_hypothesis_has_zero_risk() {
        let h = Hypothesis::from_slice(&[0.5]).unwrap();
        assert_eq!(pool_risk(&tiny_pool(), &h, &LossSpec::squared()).unwrap(), 0.0);
    }

    #[test]
    fn pool_risk_dimension_mismatch() {
        let h = Hypothesis::zeros(3);
        assert!(matches!(
            pool_risk(&tiny_pool(), &h, &LossSpec::squared()),
            Err(UpalError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn weighted_risk_single_round() {
        let pool = LabeledPool::from_rows(&[vec![1.0], vec![-1.0]], vec![1.0, -1.0]).unwrap();
        let mut hist = QueryHistory::new(2);
        hist.push(0, 0.5, true).unwrap();
        let r = importance_weighted_risk(&pool, &hist, &Hypothesis::zeros(1), &LossSpec::squared())
            .unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn weighted_risk_zero_for_interpolating_h() {
        let pool = LabeledPool::from_rows(&[vec![2.0], vec![-2.0]], vec![1.0, -1.0]).unwrap();
        let mut hist = QueryHistory::new(2);
        hist.push(0, 0.3, true).unwrap();
        hist.push(1, 0.9, true).unwrap();
        hist.push(0, 0.6, false).unwrap();
        let h = Hypothesis::from_slice(&[0.5]).unwrap();
        let r = importance_weighted_risk(&pool, &hist, &h, &LossSpec::squared()).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn weighted_risk_requires_history() {
        let hist = QueryHistory::new(1);
        assert!(matches!(
            importance_weighted_risk(&tiny_pool(), &hist, &Hypothesis::zeros(1), &LossSpec::squared()),
            Err(UpalError::EmptyHistory)
        ));
    }

    #[test]
    fn weights_accumulate() {
        let empty = QueryHistory::new(5);
        assert_eq!(accumulate_weights(&empty), vec![0.0; 5]);

        let mut hist = QueryHistory::new(5);
        hist.push(3, 0.25, true).unwrap();
        hist.push(3, 0.5, false).unwrap();
        let z = accumulate_weights(&hist);
        assert_eq!(z, vec![0.0, 0.0, 0.0, 6.0, 0.0]);
        assert_eq!(hist.z(), z.as_slice());
        assert_eq!(hist.unique_queries(), 1);
    }

    #[test]
    fn rejects_bad_labels_and_probabilities() {
        assert!(LabeledPool::from_rows(&[vec![1.0]], vec![0.5]).is_err());
        assert!(LabeledPool::from_rows(&[vec![f64::NAN]], vec![1.0]).is_err());
        let mut hist = QueryHistory::new(2);
        assert!(hist.push(0, 0.0, true).is_err());
        assert!(hist.push(0, 1.5, true).is_err());
        assert!(hist.push(2, 0.5, true).is_err());
    }

    #[test]
    fn audit_lines_replay() {
        let mut hist = QueryHistory::new(4);
        hist.push(1, 0.3, true).unwrap();
        hist.push(2, 1.0 / 3.0, true).unwrap();
        hist.push(1, 0.123456789012345, false).unwrap();
        let text = hist.to_lines();
        assert!(text.starts_with("1,1,0.3\n"));
        let back = QueryHistory::from_lines(4, &text).unwrap();
        assert_eq!(back, hist);
    }

    #[test]
    fn audit_lines_report_bad_line() {
        let err = QueryHistory::from_lines(4, "1,0,0.5\n2,x,0.5\n").unwrap_err();
        assert!(matches!(err, UpalError::Parse { line: 2, .. }));
        let err = QueryHistory::from_lines(4, "1,0,0.5\n3,1,0.5\n").unwrap_err();
        assert!(matches!(err, UpalError::Parse { line: 2, .. }));
    }

    #[test]
    fn oracle_charges_once() {
        let pool = LabeledPool::from_rows(&[vec![1.0], vec![2.0]], vec![1.0, -1.0]).unwrap();
        let mut oracle = LabelOracle::new(&pool);
        assert_eq!(oracle.query(1), (-1.0, true));
        assert_eq!(oracle.query(1), (-1.0, false));
        let stats = oracle.stats();
        assert_eq!(stats.calls, 1);
        assert_eq!(stats.revealed.iter().filter(|r| **r).count(), stats.calls);
    }
}
