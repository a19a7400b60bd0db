use super::{LossError, LossOutput, UserLossInput};

/// `−mean(f⁺)/τ + log Σ_j exp(f⁻_j/τ)` over the sampled negatives.
pub fn softmax_loss(input: UserLossInput<'_>, tau: f64) -> Result<LossOutput, LossError> {
    input.require_pos()?;
    input.require_neg()?;
    if !(tau > 0.0) {
        return Err(LossError::InvalidParam(format!("tau must be > 0, got {tau}")));
    }
    let np = input.pos.len() as f64;
    let max = input.neg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = input.neg.iter().map(|f| ((f - max) / tau).exp()).collect();
    let z: f64 = exps.iter().sum();
    let lse = max / tau + z.ln();
    let pos_mean = input.pos.iter().sum::<f64>() / np;
    Ok(LossOutput {
        value: -pos_mean / tau + lse,
        d_pos: vec![-1.0 / (tau * np); input.pos.len()],
        d_neg: exps.iter().map(|e| e / (z * tau)).collect(),
    })
}

/// Density ratio of the KL worst case: `w_j = exp(f_j/τ) / mean_k exp(f_k/τ)`.
/// Empty input gives an empty vector.
pub fn sl_worst_case_weights(neg_scores: &[f64], tau: f64) -> Vec<f64> {
    if neg_scores.is_empty() {
        return Vec::new();
    }
    let n = neg_scores.len() as f64;
    let max = neg_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = neg_scores.iter().map(|f| ((f - max) / tau).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e * n / z).collect()
}
