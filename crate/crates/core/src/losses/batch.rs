use super::{LossError, LossKind, LossSpec, MarginState, UserLossInput};
use crate::losses::drrl_beta_gradient;

/// Scores for a batch of `(user, positive)` pairs, each with its own
/// sampled negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchScores {
    pub users: Vec<u32>,
    pub pos: Vec<f64>,
    pub neg: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLossOutput {
    pub value: f64,
    pub d_pos: Vec<f64>,
    pub d_neg: Vec<Vec<f64>>,
    /// `∂L_β/∂β` per pair for DrRL, empty otherwise.
    pub beta_grads: Vec<(u32, f64)>,
}

/// Mean of the per-pair losses, with gradients scaled by `1/B`.
pub fn batch_loss(scores: &BatchScores, spec: &LossSpec, margins: &MarginState) -> Result<BatchLossOutput, LossError> {
    let b = scores.pos.len();
    if b == 0 {
        return Err(LossError::EmptyPositives);
    }
    if scores.users.len() != b || scores.neg.len() != b {
        return Err(LossError::InvalidParam(format!(
            "batch shape mismatch: {} users, {} positives, {} negative lists",
            scores.users.len(),
            b,
            scores.neg.len()
        )));
    }
    let inv = 1.0 / b as f64;
    let mut value = 0.0;
    let mut d_pos = Vec::with_capacity(b);
    let mut d_neg = Vec::with_capacity(b);
    let mut beta_grads = Vec::new();
    for k in 0..b {
        let u = scores.users[k];
        let beta = margins.get(u);
        let pos = [scores.pos[k]];
        let out = spec.evaluate(UserLossInput::new(&pos, &scores.neg[k]), beta)?;
        value += out.value * inv;
        d_pos.push(out.d_pos[0] * inv);
        d_neg.push(out.d_neg.iter().map(|g| g * inv).collect());
        if spec.kind == LossKind::Drrl {
            let g = drrl_beta_gradient(&scores.neg[k], spec.gamma_star, spec.c, spec.eps, beta)?;
            beta_grads.push((u, g));
        }
    }
    Ok(BatchLossOutput {
        value,
        d_pos,
        d_neg,
        beta_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{MarginMode, testutil::rel_err};

    fn spec(kind: LossKind) -> LossSpec {
        LossSpec::new(kind)
    }

    #[test]
    fn singleton_and_duplicate_batches() {
        let margins = MarginState::new(MarginMode::PerUser, 2, 0.4);
        for kind in [LossKind::Mse, LossKind::Bce, LossKind::Bpr, LossKind::Sl, LossKind::Ccl, LossKind::Drrl] {
            let s = spec(kind);
            let one = BatchScores {
                users: vec![1],
                pos: vec![0.7],
                neg: vec![vec![0.9, 0.5, 0.1]],
            };
            let per_user = s.evaluate(UserLossInput::new(&[0.7], &[0.9, 0.5, 0.1]), 0.4).unwrap();
            let single = batch_loss(&one, &s, &margins).unwrap();
            assert_eq!(single.value, per_user.value);
            let two = BatchScores {
                users: vec![1, 1],
                pos: vec![0.7, 0.7],
                neg: vec![vec![0.9, 0.5, 0.1]; 2],
            };
            let double = batch_loss(&two, &s, &margins).unwrap();
            assert!((double.value - single.value).abs() < 1e-15, "{kind}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let margins = MarginState::from_values(MarginMode::PerUser, vec![0.05, -0.3]);
        let base = BatchScores {
            users: vec![0, 1, 0],
            pos: vec![0.6, 0.2, -0.1],
            neg: vec![vec![0.3, -0.4, 0.8], vec![0.1, 0.5, -0.7], vec![0.45, 0.0, 0.2]],
        };
        let h = 1e-5;
        for kind in [LossKind::Mse, LossKind::Bce, LossKind::Bpr, LossKind::Sl, LossKind::Ccl, LossKind::Drrl] {
            let mut s = spec(kind);
            s.margin = 0.25;
            let out = batch_loss(&base, &s, &margins).unwrap();
            for k in 0..3 {
                let mut a = base.clone();
                let mut b = base.clone();
                a.pos[k] += h;
                b.pos[k] -= h;
                let fd = (batch_loss(&a, &s, &margins).unwrap().value - batch_loss(&b, &s, &margins).unwrap().value) / (2.0 * h);
                assert!(rel_err(out.d_pos[k], fd) <= 1e-4, "{kind} pos {k}");
                for j in 0..3 {
                    let mut a = base.clone();
                    let mut b = base.clone();
                    a.neg[k][j] += h;
                    b.neg[k][j] -= h;
                    let fd = (batch_loss(&a, &s, &margins).unwrap().value - batch_loss(&b, &s, &margins).unwrap().value) / (2.0 * h);
                    assert!(rel_err(out.d_neg[k][j], fd) <= 1e-4, "{kind} neg {k},{j}");
                }
            }
            assert_eq!(out.beta_grads.is_empty(), kind != LossKind::Drrl);
        }
    }
}
