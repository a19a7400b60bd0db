use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, DatasetSplit, SplitKind};

/// Where injected false negatives come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePool {
    /// The user's validation and test positives.
    #[default]
    HeldOut,
    /// The user's own train positives.
    TrainPositives,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Probability that a negative slot is filled with a false negative.
    pub ratio: f64,
    #[serde(default)]
    pub pool: NoisePool,
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self::default()
    }
}

/// One mini-batch: positive pairs and `n_neg` sampled negatives per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSample {
    pub pairs: Vec<(u32, u32)>,
    pub negatives: Vec<Vec<u32>>,
    /// True where the negative is actually a positive of the user.
    pub false_negative_mask: Vec<Vec<bool>>,
}

impl BatchSample {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Precomputed sampling tables for a split; reuse across batches.
#[derive(Debug, Clone)]
pub struct NegativeSampler<'a> {
    split: &'a DatasetSplit,
    pairs: Vec<(u32, u32)>,
    noise_pool: Vec<Vec<u32>>,
    ratio: f64,
}

impl<'a> NegativeSampler<'a> {
    pub fn new(split: &'a DatasetSplit, noise: NoiseConfig) -> Result<Self, DataError> {
        let pairs = split.train_pairs();
        if pairs.is_empty() {
            return Err(DataError::EmptySplit);
        }
        let ratio = if split.kind == SplitKind::Noise {
            noise.ratio.clamp(0.0, 1.0)
        } else {
            if noise.ratio > 0.0 {
                log::warn!("noise ratio {} ignored on a {} split", noise.ratio, split.kind);
            }
            0.0
        };
        let noise_pool = if ratio > 0.0 {
            (0..split.num_users as u32)
                .map(|u| match noise.pool {
                    NoisePool::HeldOut => split.held_out(u),
                    NoisePool::TrainPositives => split.train[u as usize].clone(),
                })
                .collect()
        } else {
            vec![Vec::new(); split.num_users]
        };
        Ok(Self {
            split,
            pairs,
            noise_pool,
            ratio,
        })
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn noise_ratio(&self) -> f64 {
        self.ratio
    }

    /// Draws `batch_size` train pairs uniformly with replacement. Pairs
    /// whose user has no admissible negative are skipped.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, n_neg: usize, rng: &mut R) -> BatchSample {
        let mut out = BatchSample {
            pairs: Vec::with_capacity(batch_size),
            negatives: Vec::with_capacity(batch_size),
            false_negative_mask: Vec::with_capacity(batch_size),
        };
        for _ in 0..batch_size {
            let (u, i) = self.pairs[rng.random_range(0..self.pairs.len())];
            let train_len = self.split.train[u as usize].len();
            if train_len >= self.split.num_items && self.noise_pool[u as usize].is_empty() {
                log::warn!("user {u} has no negative candidates; skipped");
                continue;
            }
            let mut negs = Vec::with_capacity(n_neg);
            let mut mask = Vec::with_capacity(n_neg);
            for _ in 0..n_neg {
                let pool = &self.noise_pool[u as usize];
                let noisy = !pool.is_empty() && rng.random::<f64>() < self.ratio;
                if noisy || train_len >= self.split.num_items {
                    negs.push(pool[rng.random_range(0..pool.len())]);
                    mask.push(true);
                } else {
                    negs.push(self.draw_true_negative(u, rng));
                    mask.push(false);
                }
            }
            out.pairs.push((u, i));
            out.negatives.push(negs);
            out.false_negative_mask.push(mask);
        }
        out
    }

    fn draw_true_negative<R: Rng + ?Sized>(&self, user: u32, rng: &mut R) -> u32 {
        loop {
            let j = rng.random_range(0..self.split.num_items as u32);
            if !self.split.is_train_positive(user, j) {
                return j;
            }
        }
    }
}

/// One-shot convenience over [`NegativeSampler`].
pub fn sample_batch<R: Rng + ?Sized>(
    split: &DatasetSplit,
    batch_size: usize,
    n_neg: usize,
    noise: NoiseConfig,
    rng: &mut R,
) -> Result<BatchSample, DataError> {
    Ok(NegativeSampler::new(split, noise)?.sample(batch_size, n_neg, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn toy_split(kind: SplitKind) -> DatasetSplit {
        DatasetSplit {
            kind,
            num_users: 3,
            num_items: 10,
            train: vec![vec![0, 1, 2], vec![3, 4], vec![5]],
            validation: vec![vec![7], vec![], vec![]],
            test: vec![vec![8, 9], vec![5], vec![]],
            seed: None,
        }
    }

    #[test]
    fn clean_negatives_avoid_train_positives() {
        let split = toy_split(SplitKind::Iid);
        let mut rng = stream_rng(3, 0);
        let b = sample_batch(&split, 200, 8, NoiseConfig::none(), &mut rng).unwrap();
        assert_eq!(b.len(), 200);
        for ((&(u, i), negs), mask) in b.pairs.iter().zip(&b.negatives).zip(&b.false_negative_mask) {
            assert!(split.is_train_positive(u, i));
            assert_eq!(negs.len(), 8);
            assert_eq!(mask.len(), 8);
            assert!(mask.iter().all(|m| !m));
            assert!(negs.iter().all(|&j| !split.is_train_positive(u, j)));
        }
    }

    #[test]
    fn full_noise_draws_held_out_positives() {
        let split = toy_split(SplitKind::Noise);
        let noise = NoiseConfig { ratio: 1.0, pool: NoisePool::HeldOut };
        let b = sample_batch(&split, 300, 4, noise, &mut stream_rng(5, 0)).unwrap();
        for ((&(u, _), negs), mask) in b.pairs.iter().zip(&b.negatives).zip(&b.false_negative_mask) {
            let held = split.held_out(u);
            if held.is_empty() {
                assert!(mask.iter().all(|m| !m));
            } else {
                assert!(mask.iter().all(|m| *m));
                assert!(negs.iter().all(|j| held.contains(j)));
            }
        }
    }

    #[test]
    fn noise_ignored_on_clean_split() {
        let split = toy_split(SplitKind::Iid);
        let noise = NoiseConfig { ratio: 1.0, pool: NoisePool::HeldOut };
        let b = sample_batch(&split, 50, 4, noise, &mut stream_rng(5, 0)).unwrap();
        assert!(b.false_negative_mask.iter().flatten().all(|m| !m));
    }

    #[test]
    fn empirical_noise_rate() {
        // Every user has held-out positives, so the mask rate estimates p.
        let split = DatasetSplit {
            kind: SplitKind::Noise,
            num_users: 2,
            num_items: 20,
            train: vec![vec![0, 1], vec![2, 3]],
            validation: vec![vec![4], vec![5]],
            test: vec![vec![6], vec![7]],
            seed: None,
        };
        let noise = NoiseConfig { ratio: 0.25, pool: NoisePool::HeldOut };
        let b = sample_batch(&split, 1000, 100, noise, &mut stream_rng(11, 0)).unwrap();
        let total = b.false_negative_mask.iter().flatten().count();
        let hits = b.false_negative_mask.iter().flatten().filter(|m| **m).count();
        assert_eq!(total, 100_000);
        let rate = hits as f64 / total as f64;
        assert!((rate - 0.25).abs() <= 0.01, "rate {rate}");
    }

    #[test]
    fn user_without_negatives_is_skipped() {
        let split = DatasetSplit {
            kind: SplitKind::Iid,
            num_users: 2,
            num_items: 2,
            train: vec![vec![0, 1], vec![0]],
            validation: vec![vec![], vec![]],
            test: vec![vec![], vec![1]],
            seed: None,
        };
        let b = sample_batch(&split, 100, 3, NoiseConfig::none(), &mut stream_rng(1, 0)).unwrap();
        assert!(b.pairs.iter().all(|&(u, _)| u == 1));
        assert!(!b.is_empty());
    }

    #[test]
    fn batches_are_deterministic() {
        let split = toy_split(SplitKind::Iid);
        let a = sample_batch(&split, 20, 5, NoiseConfig::none(), &mut stream_rng(2, 3)).unwrap();
        let b = sample_batch(&split, 20, 5, NoiseConfig::none(), &mut stream_rng(2, 3)).unwrap();
        assert_eq!(a, b);
    }
}
