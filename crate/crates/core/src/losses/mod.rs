//! Per-user recommendation losses with analytic gradients in the scores.
//!
//! Every loss takes the scores of one user's positives and sampled
//! negatives and returns the value together with `∂L/∂f` for each score.
//! The DrRL loss additionally carries a per-user margin β maintained in
//! [`MarginState`].

mod batch;
mod classic;
mod drrl;
mod margin;
mod softmax;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use batch::{batch_loss, BatchLossOutput, BatchScores};
pub use classic::{bce_loss, bpr_loss, ccl_loss, mse_loss};
pub use drrl::{drrl_beta_gradient, drrl_beta_objective, drrl_loss, drrl_worst_case_weights, WorstCaseWeights};
pub use margin::{MarginMode, MarginState};
pub use softmax::{sl_worst_case_weights, softmax_loss};

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("loss needs at least one positive score")]
    EmptyPositives,
    #[error("loss needs at least one negative score")]
    EmptyNegatives,
    #[error("invalid loss parameter: {0}")]
    InvalidParam(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Bce,
    Bpr,
    Sl,
    Ccl,
    Drrl,
}

impl LossKind {
    /// Whether the loss has a worst-case weight notion (SL, CCL, DrRL).
    pub fn has_weights(self) -> bool {
        matches!(self, LossKind::Sl | LossKind::Ccl | LossKind::Drrl)
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LossKind::Mse => "mse",
            LossKind::Bce => "bce",
            LossKind::Bpr => "bpr",
            LossKind::Sl => "sl",
            LossKind::Ccl => "ccl",
            LossKind::Drrl => "drrl",
        };
        f.write_str(s)
    }
}

/// Loss selector and its hyperparameters. Fields irrelevant to `kind` are
/// ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
    /// SL temperature.
    #[serde(default = "defaults::tau")]
    pub tau: f64,
    /// CCL negative rescale.
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    /// CCL fixed margin.
    #[serde(default = "defaults::margin")]
    pub margin: f64,
    /// DrRL exponent γ* = γ/(γ−1).
    #[serde(default = "defaults::gamma_star")]
    pub gamma_star: f64,
    /// DrRL scale c_γ(η), set directly.
    #[serde(default = "defaults::c")]
    pub c: f64,
    #[serde(default = "defaults::eps")]
    pub eps: f64,
    /// Initial DrRL margin.
    #[serde(default = "defaults::margin")]
    pub beta0: f64,
    #[serde(default = "defaults::lr_beta")]
    pub lr_beta: f64,
    #[serde(default)]
    pub margin_mode: MarginMode,
}

pub(crate) mod defaults {
    pub fn tau() -> f64 {
        0.2
    }
    pub fn alpha() -> f64 {
        1.0
    }
    pub fn margin() -> f64 {
        0.5
    }
    pub fn gamma_star() -> f64 {
        2.0
    }
    pub fn c() -> f64 {
        1.0
    }
    pub fn eps() -> f64 {
        1e-10
    }
    pub fn lr_beta() -> f64 {
        1e-4
    }
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            tau: defaults::tau(),
            alpha: defaults::alpha(),
            margin: defaults::margin(),
            gamma_star: defaults::gamma_star(),
            c: defaults::c(),
            eps: defaults::eps(),
            beta0: defaults::margin(),
            lr_beta: defaults::lr_beta(),
            margin_mode: MarginMode::default(),
        }
    }

    /// Rényi order γ implied by `gamma_star` (∞ at γ* = 1).
    pub fn gamma(&self) -> f64 {
        crate::dro::gamma_from_star(self.gamma_star)
    }

    /// All violated constraints, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.kind == LossKind::Sl && !(self.tau > 0.0) {
            errs.push(format!("loss.tau must be > 0 (got {})", self.tau));
        }
        if self.kind == LossKind::Ccl && !(self.alpha >= 0.0) {
            errs.push(format!("loss.alpha must be >= 0 (got {})", self.alpha));
        }
        if self.kind == LossKind::Drrl {
            if !(self.gamma_star >= 1.0) {
                errs.push(format!("loss.gamma_star must be >= 1 (got {})", self.gamma_star));
            }
            if !(self.c > 0.0) {
                errs.push(format!("loss.c must be > 0 (got {})", self.c));
            }
            if !(self.eps >= 0.0) {
                errs.push(format!("loss.eps must be >= 0 (got {})", self.eps));
            }
            if !(self.lr_beta >= 0.0) {
                errs.push(format!("loss.lr_beta must be >= 0 (got {})", self.lr_beta));
            }
            if !self.beta0.is_finite() {
                errs.push("loss.beta0 must be finite".into());
            }
        }
        errs
    }

    /// Loss of one user given its margin (ignored by non-DrRL kinds).
    pub fn evaluate(&self, input: UserLossInput<'_>, beta: f64) -> Result<LossOutput, LossError> {
        match self.kind {
            LossKind::Mse => mse_loss(input),
            LossKind::Bce => bce_loss(input),
            LossKind::Bpr => bpr_loss(input),
            LossKind::Sl => softmax_loss(input, self.tau),
            LossKind::Ccl => ccl_loss(input, self.alpha, self.margin),
            LossKind::Drrl => drrl_loss(input, self.gamma_star, self.c, self.eps, beta),
        }
    }
}

/// Scores of one user's positives and sampled negatives.
#[derive(Debug, Clone, Copy)]
pub struct UserLossInput<'a> {
    pub pos: &'a [f64],
    pub neg: &'a [f64],
}

impl<'a> UserLossInput<'a> {
    pub fn new(pos: &'a [f64], neg: &'a [f64]) -> Self {
        Self { pos, neg }
    }

    pub(crate) fn require_pos(&self) -> Result<(), LossError> {
        if self.pos.is_empty() {
            Err(LossError::EmptyPositives)
        } else {
            Ok(())
        }
    }

    pub(crate) fn require_neg(&self) -> Result<(), LossError> {
        if self.neg.is_empty() {
            Err(LossError::EmptyNegatives)
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub d_pos: Vec<f64>,
    pub d_neg: Vec<f64>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
