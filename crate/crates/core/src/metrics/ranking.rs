use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{MetricRow, MetricsError};
use crate::dataio::DatasetSplit;
use crate::graphmodel::NormCache;

/// One user's full candidate scores with the items to exclude and the
/// ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingInstance {
    pub scores: Vec<f64>,
    /// Sorted ascending.
    pub exclude: Vec<u32>,
    pub truth: Vec<u32>,
}

impl RankingInstance {
    pub fn ranked(&self, k: usize) -> Vec<u32> {
        top_k(&self.scores, &self.exclude, k)
    }

    /// None when the user has no ground truth.
    pub fn recall(&self, k: usize) -> Option<f64> {
        (!self.truth.is_empty()).then(|| recall_at_k(&self.ranked(k), &self.truth, k))
    }

    pub fn ndcg(&self, k: usize) -> Option<f64> {
        (!self.truth.is_empty()).then(|| ndcg_at_k(&self.ranked(k), &self.truth, k))
    }
}

fn by_score_then_id(scores: &[f64]) -> impl Fn(&u32, &u32) -> Ordering + '_ {
    move |a, b| {
        scores[*b as usize]
            .partial_cmp(&scores[*a as usize])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(b))
    }
}

/// The `k` best non-excluded items, highest score first, ties by id.
pub fn top_k(scores: &[f64], exclude: &[u32], k: usize) -> Vec<u32> {
    let mut cand: Vec<u32> = (0..scores.len() as u32)
        .filter(|i| exclude.binary_search(i).is_err())
        .collect();
    let cmp = by_score_then_id(scores);
    if k < cand.len() {
        cand.select_nth_unstable_by(k, &cmp);
        cand.truncate(k);
    }
    cand.sort_by(&cmp);
    cand
}

pub fn recall_at_k(ranked: &[u32], truth: &[u32], k: usize) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = ranked.iter().take(k).filter(|i| truth.contains(i)).count();
    hits as f64 / truth.len() as f64
}

pub fn ndcg_at_k(ranked: &[u32], truth: &[u32], k: usize) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| truth.contains(i))
        .map(|(r, _)| 1.0 / (r as f64 + 2.0).log2())
        .sum();
    let idcg: f64 = (0..k.min(truth.len())).map(|r| 1.0 / (r as f64 + 2.0).log2()).sum();
    dcg / idcg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTarget {
    Validation,
    Test,
}

/// Mean Recall@K and NDCG@K per requested K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ks: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub users: usize,
}

impl MetricReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|x| *x == k).map(|p| self.recall[p])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|x| *x == k).map(|p| self.ndcg[p])
    }

    pub fn rows(&self, epoch: usize) -> Vec<MetricRow> {
        let mut rows = Vec::new();
        for (p, &k) in self.ks.iter().enumerate() {
            rows.push(MetricRow {
                epoch,
                metric: "recall".into(),
                k,
                value: self.recall[p],
            });
            rows.push(MetricRow {
                epoch,
                metric: "ndcg".into(),
                k,
                value: self.ndcg[p],
            });
        }
        rows
    }
}

/// Items excluded from `user`'s candidates: train positives, plus the
/// validation positives when scoring the test set.
pub fn exclusion(split: &DatasetSplit, user: usize, target: EvalTarget) -> Vec<u32> {
    match target {
        EvalTarget::Validation => split.train[user].clone(),
        EvalTarget::Test => {
            let mut v: Vec<u32> = split.train[user].iter().chain(&split.validation[user]).copied().collect();
            v.sort_unstable();
            v
        }
    }
}

fn truth(split: &DatasetSplit, user: usize, target: EvalTarget) -> &[u32] {
    match target {
        EvalTarget::Validation => &split.validation[user],
        EvalTarget::Test => &split.test[user],
    }
}

/// Full-ranking evaluation; users without ground truth are skipped.
pub fn evaluate(cache: &NormCache, split: &DatasetSplit, target: EvalTarget, ks: &[usize]) -> Result<MetricReport, MetricsError> {
    let kmax = ks.iter().copied().max().unwrap_or(0);
    let mut recall = vec![0.0; ks.len()];
    let mut ndcg = vec![0.0; ks.len()];
    let mut users = 0;
    for u in 0..split.num_users {
        let t = truth(split, u, target);
        if t.is_empty() {
            continue;
        }
        users += 1;
        let scores = cache.user_scores(u as u32).to_vec();
        let ranked = top_k(&scores, &exclusion(split, u, target), kmax);
        for (p, &k) in ks.iter().enumerate() {
            recall[p] += recall_at_k(&ranked, t, k);
            ndcg[p] += ndcg_at_k(&ranked, t, k);
        }
    }
    if users == 0 {
        return Err(MetricsError::NoUsers);
    }
    let n = users as f64;
    Ok(MetricReport {
        ks: ks.to_vec(),
        recall: recall.into_iter().map(|x| x / n).collect(),
        ndcg: ndcg.into_iter().map(|x| x / n).collect(),
        users,
    })
}

/// Expected Recall@K of a uniformly random ranking: `min(K, C)/C` per user
/// with `C` candidate items, averaged over users with ground truth.
pub fn random_recall_baseline(split: &DatasetSplit, target: EvalTarget, k: usize) -> f64 {
    let mut sum = 0.0;
    let mut users = 0;
    for u in 0..split.num_users {
        if truth(split, u, target).is_empty() {
            continue;
        }
        let c = split.num_items - exclusion(split, u, target).len();
        sum += k.min(c) as f64 / c as f64;
        users += 1;
    }
    if users == 0 { 0.0 } else { sum / users as f64 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(recall_at_k(&[3, 1], &[1, 3], 2), 1.0);
        assert_eq!(recall_at_k(&[0, 2], &[1, 3], 2), 0.0);
        assert_eq!(recall_at_k(&[0, 2], &[0, 1], 2), 0.5);
        assert_eq!(ndcg_at_k(&[4, 1], &[4], 2), 1.0);
        assert!((ndcg_at_k(&[1, 4], &[4], 2) - 0.63093).abs() < 1e-5);
        assert_eq!(ndcg_at_k(&[1, 2], &[4], 2), 0.0);
    }

    #[test]
    fn exclusion_and_ties() {
        let scores = [0.5, 0.9, 0.5, 0.9, 0.1];
        assert_eq!(top_k(&scores, &[], 5), vec![1, 3, 0, 2, 4]);
        assert_eq!(top_k(&scores, &[1], 2), vec![3, 0]);
        assert_eq!(top_k(&scores, &[0, 1, 2, 3], 3), vec![4]);
    }
}
