use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::dataio::{DatasetSplit, SplitKind};
use crate::dro::{ccl_dual_min, minimize_dual, DroInstance};
use crate::graphmodel::NormCache;
use crate::losses::{drrl_worst_case_weights, sl_worst_case_weights, LossKind, LossSpec, MarginState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightStats {
    /// Largest weight over the mean weight.
    pub k1: f64,
    /// Mean weight on false negatives over the mean weight; absent when
    /// no negative is flagged.
    pub k2: Option<f64>,
    /// Every weight is zero, so the ratios carry no information.
    pub degenerate: bool,
}

pub fn weight_stats(weights: &[f64], false_negative_mask: &[bool]) -> Result<WeightStats, MetricsError> {
    if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) || weights.len() != false_negative_mask.len() {
        return Err(MetricsError::BadWeights);
    }
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    if mean == 0.0 {
        return Ok(WeightStats {
            k1: 1.0,
            k2: None,
            degenerate: true,
        });
    }
    let max = weights.iter().copied().fold(0.0, f64::max);
    let flagged: Vec<f64> = weights
        .iter()
        .zip(false_negative_mask)
        .filter(|(_, m)| **m)
        .map(|(w, _)| *w)
        .collect();
    let k2 = (!flagged.is_empty()).then(|| flagged.iter().sum::<f64>() / flagged.len() as f64 / mean);
    Ok(WeightStats {
        k1: max / mean,
        k2,
        degenerate: false,
    })
}

/// Fraction of scores at or below the margin.
pub fn truncation_ratio(scores: &[f64], beta: f64) -> Result<f64, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyScores);
    }
    Ok(scores.iter().filter(|f| **f <= beta).count() as f64 / scores.len() as f64)
}

/// One row of the per-user diagnostics dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserDiagnostics {
    pub user: u32,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub truncation: Option<f64>,
    pub beta: Option<f64>,
}

/// Aggregates of the per-user diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub loss: LossKind,
    pub users: usize,
    pub mean_k1: Option<f64>,
    pub mean_k2: Option<f64>,
    pub mean_truncation: Option<f64>,
}

fn mean_of(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Worst-case weights of `spec` over each user's full negative set (every
/// item outside the user's train positives). Held-out positives are
/// flagged as false negatives on noise splits only.
pub fn user_diagnostics(
    cache: &NormCache,
    split: &DatasetSplit,
    spec: &LossSpec,
    margins: &MarginState,
) -> Result<(Vec<UserDiagnostics>, DiagnosticsSummary), MetricsError> {
    if !spec.kind.has_weights() {
        return Err(MetricsError::NoWeights(spec.kind));
    }
    let mut rows = Vec::new();
    for u in 0..split.num_users as u32 {
        let all = cache.user_scores(u);
        let held = split.held_out(u);
        let mut scores = Vec::new();
        let mut mask = Vec::new();
        for j in 0..split.num_items as u32 {
            if split.is_train_positive(u, j) {
                continue;
            }
            scores.push(all[j as usize]);
            mask.push(split.kind == SplitKind::Noise && held.binary_search(&j).is_ok());
        }
        if scores.is_empty() {
            continue;
        }
        let (weights, beta) = match spec.kind {
            LossKind::Sl => (sl_worst_case_weights(&scores, spec.tau), None),
            LossKind::Ccl => (
                scores.iter().map(|&f| if f > spec.margin { spec.alpha } else { 0.0 }).collect(),
                Some(spec.margin),
            ),
            _ => {
                let beta = margins.get(u);
                let w = if spec.gamma_star == 1.0 {
                    scores.iter().map(|&f| if f > beta { spec.c } else { 0.0 }).collect()
                } else {
                    drrl_worst_case_weights(&scores, spec.gamma(), spec.c, beta)
                        .map_err(|_| MetricsError::BadWeights)?
                        .weights
                };
                (w, Some(beta))
            }
        };
        let stats = weight_stats(&weights, &mask)?;
        rows.push(UserDiagnostics {
            user: u,
            k1: (!stats.degenerate).then_some(stats.k1),
            k2: stats.k2,
            truncation: beta.map(|b| truncation_ratio(&scores, b)).transpose()?,
            beta,
        });
    }
    let summary = DiagnosticsSummary {
        loss: spec.kind,
        users: rows.len(),
        mean_k1: mean_of(rows.iter().map(|r| r.k1)),
        mean_k2: mean_of(rows.iter().map(|r| r.k2)),
        mean_truncation: mean_of(rows.iter().map(|r| r.truncation)),
    };
    Ok((rows, summary))
}

/// The margin minimizing `β + c·(mean (f − β)_+^{γ*})^{1/γ*}` over the
/// given scores; `γ* = 1` is the piecewise-linear CCL case.
pub fn optimal_margin(scores: &[f64], gamma_star: f64, c: f64) -> Result<f64, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyScores);
    }
    if gamma_star == 1.0 {
        return ccl_dual_min(scores, c).map(|(b, _)| b).map_err(|e| MetricsError::Solver(e.to_string()));
    }
    let gamma = gamma_star / (gamma_star - 1.0);
    // radius whose scale c_γ(η) equals c
    let eta = (c.powf(gamma) - 1.0) / (gamma * (gamma - 1.0));
    let inst = DroInstance::new(scores.to_vec(), eta).map_err(|e| MetricsError::Solver(e.to_string()))?;
    minimize_dual(&inst, gamma, 1e-10)
        .map(|m| m.beta)
        .map_err(|e| MetricsError::Solver(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let s = weight_stats(&[1.0; 4], &[false; 4]).unwrap();
        assert_eq!(s.k1, 1.0);
        assert_eq!(s.k2, None);
        let s = weight_stats(&[3.0, 1.0, 1.0, 1.0], &[true, false, false, false]).unwrap();
        assert_eq!((s.k1, s.k2), (2.0, Some(2.0)));
        assert!(weight_stats(&[0.0, 0.0], &[true, false]).unwrap().degenerate);
        assert!(weight_stats(&[], &[]).is_err());
        assert_eq!(truncation_ratio(&[0.9, 0.5, 0.1], 0.4).unwrap(), 1.0 / 3.0);
        assert_eq!(truncation_ratio(&[0.9, 0.5, 0.1], -1.0).unwrap(), 0.0);
        assert_eq!(truncation_ratio(&[0.9, 0.5, 0.1], 2.0).unwrap(), 1.0);
    }
}
