//! Margin losses, their derivatives, conditional-probability estimates and
//! the label entropy used to score pool points.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, UpalError};
use crate::pool::Hypothesis;

/// Probabilities are clamped to `[ETA_CLAMP, 1 - ETA_CLAMP]` before the entropy.
pub const ETA_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Squared,
    Logistic,
}

impl FromStr for LossKind {
    type Err = UpalError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(Self::Squared),
            "logistic" => Ok(Self::Logistic),
            other => Err(UpalError::InvalidConfig(format!(
                "unknown loss {other:?} (expected \"squared\" or \"logistic\")"
            ))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Squared => "squared",
            Self::Logistic => "logistic",
        })
    }
}

/// How the squared loss turns a score into `P[y = +1 | x]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaRule {
    /// `min(max(0, h . x), 1)`.
    #[default]
    Clamp,
    /// `(1 + h . x) / 2`, clamped to [0, 1]; matches the +-1 label encoding.
    Affine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default)]
    pub eta_rule: EtaRule,
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            eta_rule: EtaRule::Clamp,
        }
    }

    pub fn squared() -> Self {
        Self::new(LossKind::Squared)
    }

    pub fn logistic() -> Self {
        Self::new(LossKind::Logistic)
    }

    pub fn with_eta_rule(mut self, rule: EtaRule) -> Self {
        self.eta_rule = rule;
        self
    }

    /// `phi(m)`.
    pub fn value(&self, margin: f64) -> f64 {
        match self.kind {
            LossKind::Squared => (1.0 - margin) * (1.0 - margin),
            LossKind::Logistic => softplus(-margin),
        }
    }

    /// `phi'(m)`.
    pub fn derivative(&self, margin: f64) -> f64 {
        match self.kind {
            LossKind::Squared => -2.0 * (1.0 - margin),
            LossKind::Logistic => -sigmoid(-margin),
        }
    }

    /// `phi''(m)`.
    pub fn second_derivative(&self, margin: f64) -> f64 {
        match self.kind {
            LossKind::Squared => 2.0,
            LossKind::Logistic => {
                let s = sigmoid(margin);
                s * (1.0 - s)
            }
        }
    }

    /// Loss of score `s = h . x` against target `y`. For +-1 labels this is
    /// `phi(y s)`; the squared loss is written as `(y - s)^2` so it also
    /// covers real-valued regression targets.
    pub fn point_loss(&self, score: f64, y: f64) -> f64 {
        match self.kind {
            LossKind::Squared => (y - score) * (y - score),
            LossKind::Logistic => self.value(y * score),
        }
    }

    /// d/ds of [`point_loss`](Self::point_loss).
    pub fn point_grad(&self, score: f64, y: f64) -> f64 {
        match self.kind {
            LossKind::Squared => -2.0 * (y - score),
            LossKind::Logistic => y * self.derivative(y * score),
        }
    }

    /// d^2/ds^2 of [`point_loss`](Self::point_loss).
    pub fn point_curvature(&self, score: f64, y: f64) -> f64 {
        match self.kind {
            LossKind::Squared => 2.0,
            LossKind::Logistic => y * y * self.second_derivative(y * score),
        }
    }

    /// `P[y = +1 | x]` estimated from the score `h . x`.
    pub fn eta_from_score(&self, score: f64) -> f64 {
        match (self.kind, self.eta_rule) {
            (LossKind::Logistic, _) => sigmoid(score),
            (LossKind::Squared, EtaRule::Clamp) => score.clamp(0.0, 1.0),
            (LossKind::Squared, EtaRule::Affine) => ((1.0 + score) / 2.0).clamp(0.0, 1.0),
        }
    }
}

impl From<LossKind> for LossSpec {
    fn from(kind: LossKind) -> Self {
        Self::new(kind)
    }
}

pub fn loss_value(spec: &LossSpec, margin: f64) -> f64 {
    spec.value(margin)
}

pub fn estimate_eta(spec: &LossSpec, h: &Hypothesis, x: &[f64]) -> Result<f64> {
    Ok(spec.eta_from_score(h.dot(x)?))
}

/// Binary entropy in nats, `eta ln(1/eta) + (1-eta) ln(1/(1-eta))`, with eta
/// clamped away from 0 and 1.
pub fn label_entropy(eta: f64) -> f64 {
    // fold onto [0, 1/2] so the clamp is symmetric in floating point
    let e = if eta > 0.5 { 1.0 - eta } else { eta }.max(ETA_CLAMP);
    -(e * e.ln() + (1.0 - e) * (-e).ln_1p())
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
