//! Divergence-constrained worst-case expectations over sampled negatives.
//!
//! For scores `f_1..f_n` and the uniform base distribution `P`, the inner
//! problem is `max_Q E_Q[f]` subject to `D(Q, P) ≤ η`. [`inner_max_bruteforce`]
//! solves it numerically on the primal side with no knowledge of any dual;
//! [`dual_value`] / [`solve_beta`] evaluate the one-dimensional closed-form
//! dual in the margin `β`. The [`verify`] routines compare the two.

mod bruteforce;
mod divergence;
mod dual;
pub mod verify;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bruteforce::{inner_max_bruteforce, InnerMax, MAX_BRUTE_FORCE_N};
pub use divergence::{c_gamma, divergence, gamma_from_star, gamma_star, phi_conjugate, phi_gamma};
pub use dual::{
    ccl_dual_min, dual_derivative, dual_value, lagrangian_dual, lambda_star, minimize_dual,
    solve_beta, DualCertificate, DualMinimum,
};

#[derive(Debug, Error)]
pub enum DroError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("instance of size {0} exceeds the brute-force limit of {MAX_BRUTE_FORCE_N}")]
    TooLarge(usize),
    #[error("margin search did not converge: {0}")]
    NoConvergence(String),
}

/// The divergence defining the ambiguity ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "gamma", rename_all = "snake_case")]
pub enum DivergenceKind {
    Kl,
    WorstRegret,
    /// Cressie-Read family of order γ > 1.
    CressieRead(f64),
}

/// A probability vector over the sampled negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedDistribution(pub Vec<f64>);

impl PerturbedDistribution {
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn expectation(&self, scores: &[f64]) -> f64 {
        self.0.iter().zip(scores).map(|(q, f)| q * f).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Scores of one user's sampled negatives, uniform base measure, radius η.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroInstance {
    pub scores: Vec<f64>,
    pub radius: f64,
}

impl DroInstance {
    pub fn new(scores: Vec<f64>, radius: f64) -> Result<Self, DroError> {
        if scores.is_empty() {
            return Err(DroError::Shape("instance needs at least one score".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(DroError::Domain("scores must be finite".into()));
        }
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(DroError::Domain(format!("radius must be finite and >= 0, got {radius}")));
        }
        Ok(Self { scores, radius })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.scores.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn with_radius(&self, radius: f64) -> Self {
        Self {
            scores: self.scores.clone(),
            radius,
        }
    }
}
