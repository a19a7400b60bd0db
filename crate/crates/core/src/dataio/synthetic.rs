//! Seeded block-structured interaction logs for smoke tests and demos.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Interaction, InteractionLog};
use crate::rng::{stream, stream_rng};

/// Users and items are cut into `blocks` contiguous groups; a user mostly
/// interacts with items of its own group, with Zipf-like popularity inside
/// a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub blocks: usize,
    pub interactions_per_user: usize,
    /// Probability that an interaction lands outside the user's block.
    pub cross_block_rate: f64,
    pub popularity_exponent: f64,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self {
            num_users: 100,
            num_items: 60,
            blocks: 2,
            interactions_per_user: 15,
            cross_block_rate: 0.05,
            popularity_exponent: 0.8,
        }
    }
}

impl BlockConfig {
    pub fn user_block(&self, user: usize) -> usize {
        user * self.blocks / self.num_users
    }

    pub fn item_block(&self, item: usize) -> usize {
        item * self.blocks / self.num_items
    }

    fn block_items(&self, block: usize) -> std::ops::Range<usize> {
        let lo = (block * self.num_items).div_ceil(self.blocks);
        let hi = ((block + 1) * self.num_items).div_ceil(self.blocks);
        lo..hi
    }
}

/// Generates a timestamped log; timestamps increase with generation order.
pub fn block_dataset(cfg: &BlockConfig, seed: u64) -> InteractionLog {
    assert!(cfg.blocks >= 1 && cfg.num_items >= cfg.blocks && cfg.num_users >= cfg.blocks);
    let mut rng = stream_rng(seed, stream::SYNTH);
    let samplers: Vec<(std::ops::Range<usize>, WeightedIndex<f64>)> = (0..cfg.blocks)
        .map(|b| {
            let range = cfg.block_items(b);
            let weights: Vec<f64> = (0..range.len())
                .map(|r| 1.0 / ((r + 1) as f64).powf(cfg.popularity_exponent))
                .collect();
            (range, WeightedIndex::new(weights).expect("positive weights"))
        })
        .collect();

    let mut interactions = Vec::new();
    let mut clock = 0i64;
    for u in 0..cfg.num_users {
        let home = cfg.user_block(u);
        let mut chosen: Vec<u32> = Vec::new();
        let mut attempts = 0;
        while chosen.len() < cfg.interactions_per_user && attempts < 50 * cfg.interactions_per_user {
            attempts += 1;
            let block = if cfg.blocks > 1 && rng.random::<f64>() < cfg.cross_block_rate {
                let other = rng.random_range(0..cfg.blocks - 1);
                if other >= home {
                    other + 1
                } else {
                    other
                }
            } else {
                home
            };
            let (range, dist) = &samplers[block];
            let item = (range.start + dist.sample(&mut rng)) as u32;
            if !chosen.contains(&item) {
                chosen.push(item);
                clock += 1;
                interactions.push(Interaction {
                    user: u as u32,
                    item,
                    timestamp: clock,
                });
            }
        }
    }
    interactions.sort_by_key(|it| (it.user, it.item));
    InteractionLog::from_dense(interactions, cfg.num_users, cfg.num_items, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mostly_in_block_and_deterministic() {
        let cfg = BlockConfig::default();
        let a = block_dataset(&cfg, 4);
        let b = block_dataset(&cfg, 4);
        assert_eq!(a, b);
        assert_eq!(a.interactions.len(), cfg.num_users * cfg.interactions_per_user);
        let cross = a
            .interactions
            .iter()
            .filter(|it| cfg.user_block(it.user as usize) != cfg.item_block(it.item as usize))
            .count();
        let rate = cross as f64 / a.interactions.len() as f64;
        assert!(rate > 0.01 && rate < 0.1, "cross rate {rate}");
    }
}
