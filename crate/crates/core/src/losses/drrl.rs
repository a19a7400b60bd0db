//! Rényi-robust loss with a truncating margin.
//!
//! With `a_j = c·(f_j − β)_+ + eps` over the sampled negatives,
//! `M(β) = (mean_j a_j^{γ*})^{1/γ*}` and the per-user loss is
//! `−mean f⁺ + M`. The margin objective is `β + M(β)`, convex in β.

use super::{LossError, LossOutput, UserLossInput};

fn check(gamma_star: f64, c: f64, eps: f64) -> Result<(), LossError> {
    if !(gamma_star >= 1.0) || !gamma_star.is_finite() {
        return Err(LossError::InvalidParam(format!("gamma_star must be >= 1, got {gamma_star}")));
    }
    if !(c > 0.0) {
        return Err(LossError::InvalidParam(format!("c must be > 0, got {c}")));
    }
    if !(eps >= 0.0) {
        return Err(LossError::InvalidParam(format!("eps must be >= 0, got {eps}")));
    }
    Ok(())
}

/// `M` and `∂M/∂f_j` for every negative.
fn robust_term(neg: &[f64], gamma_star: f64, c: f64, eps: f64, beta: f64) -> (f64, Vec<f64>) {
    let n = neg.len() as f64;
    let terms: Vec<f64> = neg.iter().map(|&f| c * (f - beta).max(0.0) + eps).collect();
    let m = if gamma_star == 1.0 {
        terms.iter().sum::<f64>() / n
    } else {
        // Factor out the largest term so a^{γ*} neither under- nor overflows.
        let top = terms.iter().copied().fold(0.0, f64::max);
        if top == 0.0 {
            0.0
        } else {
            let s: f64 = terms.iter().map(|a| (a / top).powf(gamma_star)).sum::<f64>() / n;
            top * s.powf(1.0 / gamma_star)
        }
    };
    // ∂M/∂f_j = (c/n) (a_j / M)^{γ*−1} 𝟙[f_j > β]; zero in the M = 0 limit.
    let grads = neg
        .iter()
        .zip(&terms)
        .map(|(&f, &a)| {
            if f > beta && m > 0.0 {
                let ratio = if gamma_star == 1.0 { 1.0 } else { (a / m).powf(gamma_star - 1.0) };
                c / n * ratio
            } else {
                0.0
            }
        })
        .collect();
    (m, grads)
}

pub fn drrl_loss(
    input: UserLossInput<'_>,
    gamma_star: f64,
    c: f64,
    eps: f64,
    beta: f64,
) -> Result<LossOutput, LossError> {
    input.require_pos()?;
    input.require_neg()?;
    check(gamma_star, c, eps)?;
    let np = input.pos.len() as f64;
    let (m, d_neg) = robust_term(input.neg, gamma_star, c, eps, beta);
    Ok(LossOutput {
        value: -input.pos.iter().sum::<f64>() / np + m,
        d_pos: vec![-1.0 / np; input.pos.len()],
        d_neg,
    })
}

/// `β + M(β)`.
pub fn drrl_beta_objective(neg: &[f64], gamma_star: f64, c: f64, eps: f64, beta: f64) -> Result<f64, LossError> {
    if neg.is_empty() {
        return Err(LossError::EmptyNegatives);
    }
    check(gamma_star, c, eps)?;
    Ok(beta + robust_term(neg, gamma_star, c, eps, beta).0)
}

/// `∂(β + M)/∂β = 1 − Σ_j ∂M/∂f_j`.
pub fn drrl_beta_gradient(neg: &[f64], gamma_star: f64, c: f64, eps: f64, beta: f64) -> Result<f64, LossError> {
    if neg.is_empty() {
        return Err(LossError::EmptyNegatives);
    }
    check(gamma_star, c, eps)?;
    let (_, grads) = robust_term(neg, gamma_star, c, eps, beta);
    Ok(1.0 - grads.iter().sum::<f64>())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCaseWeights {
    pub weights: Vec<f64>,
    /// Every score sits at or below β; all weights are zero.
    pub degenerate: bool,
}

/// Density ratio of the Cressie-Read worst case at margin β:
/// `w_j = c (f_j − β)_+^{1/(γ−1)} / (mean_k (f_k − β)_+^{γ*})^{1/γ}`.
pub fn drrl_worst_case_weights(neg: &[f64], gamma: f64, c: f64, beta: f64) -> Result<WorstCaseWeights, LossError> {
    if !(gamma > 1.0) {
        return Err(LossError::InvalidParam(format!("gamma must exceed 1, got {gamma}")));
    }
    if neg.is_empty() {
        return Err(LossError::EmptyNegatives);
    }
    let gs = gamma / (gamma - 1.0);
    let n = neg.len() as f64;
    let excess: Vec<f64> = neg.iter().map(|&f| (f - beta).max(0.0)).collect();
    let denom = (excess.iter().map(|x| x.powf(gs)).sum::<f64>() / n).powf(1.0 / gamma);
    if denom == 0.0 {
        return Ok(WorstCaseWeights {
            weights: vec![0.0; neg.len()],
            degenerate: true,
        });
    }
    let weights = excess
        .iter()
        .map(|x| c * x.powf(1.0 / (gamma - 1.0)) / denom)
        .collect();
    Ok(WorstCaseWeights {
        weights,
        degenerate: false,
    })
}
