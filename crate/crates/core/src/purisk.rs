//! Positive/negative and positive/unlabeled empirical risks with the
//! logistic loss, and their per-logit gradients.

use alloc::vec::Vec;

use crate::math::{self, softplus};
use crate::{Error, Result};

/// Priors are kept inside `[PRIOR_EPS, 1 - PRIOR_EPS]`.
pub const PRIOR_EPS: f64 = 1e-4;

/// Class prior of one frame, clamped on construction.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FramePrior(f64);

impl FramePrior {
    pub fn new(value: f64) -> Self {
        FramePrior(value.clamp(PRIOR_EPS, 1.0 - PRIOR_EPS))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<f64> for FramePrior {
    fn from(v: f64) -> Self {
        FramePrior::new(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskMode {
    Descent,
    Ascent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskComponents {
    pub pos_risk: f64,
    /// Unlabeled-minus-positive estimate of the negative risk; may be negative.
    pub neg_risk: f64,
    pub total_pu: f64,
    pub mode: RiskMode,
}

impl RiskComponents {
    /// Non-negative risk: the negative part clamped at zero.
    pub fn nn_total(&self) -> f64 {
        self.pos_risk + self.neg_risk.max(0.0)
    }
}

/// Logistic loss of a positive sample, `log(1 + e^-z)`.
#[inline]
pub fn loss_pos(z: f64) -> f64 {
    softplus(-z)
}

/// Logistic loss of a negative sample, `log(1 + e^z)`.
#[inline]
pub fn loss_neg(z: f64) -> f64 {
    softplus(z)
}

fn mean_of(values: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mapped: Vec<f64> = values.iter().map(|&z| f(z)).collect();
    math::mean(&mapped)
}

/// Fully supervised risk `pi E_p[l+] + (1 - pi) E_n[l-]`.
pub fn pn_risk(scores_p: &[f64], scores_n: &[f64], prior: FramePrior) -> Result<f64> {
    if scores_p.is_empty() {
        return Err(Error::EmptySet("positive"));
    }
    if scores_n.is_empty() {
        return Err(Error::EmptySet("negative"));
    }
    let pi = prior.value();
    Ok(pi * mean_of(scores_p, loss_pos) + (1.0 - pi) * mean_of(scores_n, loss_neg))
}

/// Unbiased PU risk split into its positive and negative parts. The mode is
/// `Ascent` exactly when the negative part is below zero.
pub fn pu_risk(scores_p: &[f64], scores_u: &[f64], prior: FramePrior) -> Result<RiskComponents> {
    if scores_p.is_empty() {
        return Err(Error::EmptySet("positive"));
    }
    if scores_u.is_empty() {
        return Err(Error::EmptySet("unlabeled"));
    }
    let pi = prior.value();
    let pos_risk = pi * mean_of(scores_p, loss_pos);
    let neg_risk = mean_of(scores_u, loss_neg) - pi * mean_of(scores_p, loss_neg);
    Ok(RiskComponents {
        pos_risk,
        neg_risk,
        total_pu: pos_risk + neg_risk,
        mode: if neg_risk < 0.0 {
            RiskMode::Ascent
        } else {
            RiskMode::Descent
        },
    })
}

/// Per-sample `d objective / d logit` for the positive and unlabeled samples.
///
/// In descent mode the objective is the full PU risk. In ascent mode it is
/// `-neg_risk`, so a descent step on it raises the negative risk.
pub fn pu_risk_grad(
    scores_p: &[f64],
    scores_u: &[f64],
    prior: FramePrior,
    mode: RiskMode,
) -> (Vec<f64>, Vec<f64>) {
    let pi = prior.value();
    let wp = pi / scores_p.len() as f64;
    let wu = 1.0 / scores_u.len() as f64;
    match mode {
        RiskMode::Descent => (
            // d/dz [l+(z) - l-(z)] = (sigma(z) - 1) - sigma(z) = -1
            scores_p.iter().map(|_| -wp).collect(),
            scores_u.iter().map(|&z| wu * math::sigmoid(z)).collect(),
        ),
        RiskMode::Ascent => (
            scores_p.iter().map(|&z| wp * math::sigmoid(z)).collect(),
            scores_u.iter().map(|&z| -wu * math::sigmoid(z)).collect(),
        ),
    }
}
