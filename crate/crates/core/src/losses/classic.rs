use super::{sigmoid, softplus, LossError, LossOutput, UserLossInput};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Point-wise squared error against targets 1 (positives) and 0 (negatives).
pub fn mse_loss(input: UserLossInput<'_>) -> Result<LossOutput, LossError> {
    input.require_pos()?;
    let np = input.pos.len() as f64;
    let nn = input.neg.len().max(1) as f64;
    let pos_term: f64 = input.pos.iter().map(|f| (f - 1.0).powi(2)).sum::<f64>() / np;
    let neg_term: f64 = input.neg.iter().map(|f| f * f).sum::<f64>() / nn;
    Ok(LossOutput {
        value: pos_term + neg_term,
        d_pos: input.pos.iter().map(|f| 2.0 * (f - 1.0) / np).collect(),
        d_neg: input.neg.iter().map(|f| 2.0 * f / nn).collect(),
    })
}

/// Binary cross-entropy on logistic-squashed scores.
pub fn bce_loss(input: UserLossInput<'_>) -> Result<LossOutput, LossError> {
    input.require_pos()?;
    let np = input.pos.len() as f64;
    let nn = input.neg.len().max(1) as f64;
    // −log σ(x) = softplus(−x), −log(1 − σ(x)) = softplus(x)
    let pos_term: f64 = input.pos.iter().map(|&f| softplus(-f)).sum::<f64>() / np;
    let neg_term: f64 = input.neg.iter().map(|&f| softplus(f)).sum::<f64>() / nn;
    Ok(LossOutput {
        value: pos_term + neg_term,
        d_pos: input.pos.iter().map(|&f| (sigmoid(f) - 1.0) / np).collect(),
        d_neg: input.neg.iter().map(|&f| sigmoid(f) / nn).collect(),
    })
}

/// Mean over all (positive, negative) pairs of `−log σ(f⁺ − f⁻)`.
pub fn bpr_loss(input: UserLossInput<'_>) -> Result<LossOutput, LossError> {
    input.require_pos()?;
    input.require_neg()?;
    let norm = (input.pos.len() * input.neg.len()) as f64;
    let mut value = 0.0;
    let mut d_pos = vec![0.0; input.pos.len()];
    let mut d_neg = vec![0.0; input.neg.len()];
    for (i, &fp) in input.pos.iter().enumerate() {
        for (j, &fn_) in input.neg.iter().enumerate() {
            let diff = fp - fn_;
            value += softplus(-diff);
            let s = sigmoid(-diff) / norm;
            d_pos[i] -= s;
            d_neg[j] += s;
        }
    }
    Ok(LossOutput {
        value: value / norm,
        d_pos,
        d_neg,
    })
}

/// `−mean f⁺ + (α/n⁻) Σ (f⁻ − β)_+`; subgradient 0 at `f⁻ = β`.
pub fn ccl_loss(input: UserLossInput<'_>, alpha: f64, margin: f64) -> Result<LossOutput, LossError> {
    input.require_pos()?;
    if !(alpha >= 0.0) {
        return Err(LossError::InvalidParam(format!("alpha must be >= 0, got {alpha}")));
    }
    let np = input.pos.len() as f64;
    let nn = input.neg.len().max(1) as f64;
    let hinge: f64 = input.neg.iter().map(|&f| (f - margin).max(0.0)).sum();
    Ok(LossOutput {
        value: -mean(input.pos) + alpha / nn * hinge,
        d_pos: vec![-1.0 / np; input.pos.len()],
        d_neg: input
            .neg
            .iter()
            .map(|&f| if f > margin { alpha / nn } else { 0.0 })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::testutil::{assert_grad_close, finite_diff};
    use approx::assert_abs_diff_eq;

    fn input<'a>(pos: &'a [f64], neg: &'a [f64]) -> UserLossInput<'a> {
        UserLossInput::new(pos, neg)
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(input(&[1.0], &[0.0])).unwrap().value, 0.0);
        assert_eq!(mse_loss(input(&[0.0], &[0.0])).unwrap().value, 1.0);
        assert_abs_diff_eq!(mse_loss(input(&[0.5], &[0.5])).unwrap().value, 0.5, epsilon = 1e-15);
        assert_eq!(mse_loss(input(&[], &[0.1])), Err(LossError::EmptyPositives));
    }

    #[test]
    fn bce_examples() {
        assert_abs_diff_eq!(
            bce_loss(input(&[0.0], &[0.0])).unwrap().value,
            2.0 * 2f64.ln(),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(2.0 * 2f64.ln(), 1.38629, epsilon = 1e-5);
        // Positive term alone at f = 10: −log σ(10) ≈ 4.54e-5.
        let term = bce_loss(input(&[10.0], &[])).unwrap().value;
        assert!(term < 1e-4 && term > 0.0);
        let mut prev = f64::INFINITY;
        for f in [0.0, 1.0, 3.0, 6.0, 10.0] {
            let v = bce_loss(input(&[f], &[])).unwrap().value;
            assert!(v < prev);
            prev = v;
        }
        assert!(bce_loss(input(&[], &[0.0])).is_err());
    }

    #[test]
    fn bpr_examples() {
        let out = bpr_loss(input(&[0.3, 0.3], &[0.3])).unwrap();
        assert_abs_diff_eq!(out.value, 2f64.ln(), epsilon = 1e-15);
        let out = bpr_loss(input(&[1.0], &[-1.0])).unwrap();
        assert_abs_diff_eq!(out.value, -(sigmoid(2.0)).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(out.value, 0.12693, epsilon = 1e-5);
        let a = bpr_loss(input(&[0.2, -0.1], &[0.5, 0.0, -0.7])).unwrap().value;
        let b = bpr_loss(input(&[1.2, 0.9], &[1.5, 1.0, 0.3])).unwrap().value;
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        assert!(bpr_loss(input(&[0.1], &[])).is_err());
    }

    #[test]
    fn ccl_examples() {
        let out = ccl_loss(input(&[0.9], &[0.5, 0.1]), 2.0, 0.4).unwrap();
        assert_abs_diff_eq!(out.value, -0.8, epsilon = 1e-15);
        assert_eq!(out.d_neg, vec![1.0, 0.0]);
        let out = ccl_loss(input(&[0.9, 0.7], &[0.1, 0.2]), 3.0, 0.4).unwrap();
        assert_abs_diff_eq!(out.value, -0.8, epsilon = 1e-15);
        assert!(out.d_neg.iter().all(|d| *d == 0.0));
        let out = ccl_loss(input(&[0.9], &[0.95, 0.99]), 0.0, 0.4).unwrap();
        assert_abs_diff_eq!(out.value, -0.9, epsilon = 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let pos = [0.31, -0.12, 0.77];
        let neg = [0.45, -0.6, 0.05, 0.9];
        let h = 1e-5;
        let out = mse_loss(input(&pos, &neg)).unwrap();
        assert_grad_close(&out, &finite_diff(&pos, &neg, h, |i| mse_loss(i).unwrap().value), 1e-6);
        let out = bce_loss(input(&pos, &neg)).unwrap();
        assert_grad_close(&out, &finite_diff(&pos, &neg, h, |i| bce_loss(i).unwrap().value), 1e-6);
        let out = bpr_loss(input(&pos, &neg)).unwrap();
        assert_grad_close(&out, &finite_diff(&pos, &neg, h, |i| bpr_loss(i).unwrap().value), 1e-6);
        let out = ccl_loss(input(&pos, &neg), 2.5, 0.3).unwrap();
        assert_grad_close(
            &out,
            &finite_diff(&pos, &neg, h, |i| ccl_loss(i, 2.5, 0.3).unwrap().value),
            1e-6,
        );
    }
}
