//! Interaction logs, dataset splits and negative sampling.
//!
//! Raw user/item ids are remapped to dense `0..n` indices on load; the
//! mapping is kept on the log so split files can be traced back to the
//! original ids.

mod io;
mod sampling;
mod split;
pub mod synthetic;

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{parse_interactions, read_interactions, read_split, write_split, SplitManifest};
pub use sampling::{sample_batch, BatchSample, NegativeSampler, NoiseConfig, NoisePool};
pub use split::{k_core, split_iid, split_temporal};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("interaction log is empty")]
    EmptyLog,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("temporal split needs a timestamp on every row; use the iid split for this log")]
    MissingTimestamps,
    #[error("fraction `{name}` must lie in {range}, got {value}")]
    Fraction {
        name: &'static str,
        range: &'static str,
        value: f64,
    },
    #[error("split has no training interactions")]
    EmptySplit,
    #[error("manifest: {0}")]
    Manifest(String),
}

/// One observed (user, item) event with dense ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    /// Seconds; 0 when the source row had none.
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionLog {
    pub interactions: Vec<Interaction>,
    pub num_users: usize,
    pub num_items: usize,
    /// True iff every source row carried a timestamp.
    pub has_timestamps: bool,
    /// Dense user index -> raw id.
    pub user_ids: Vec<i64>,
    /// Dense item index -> raw id.
    pub item_ids: Vec<i64>,
}

impl InteractionLog {
    /// Builds a log from interactions that already use dense ids.
    pub fn from_dense(
        interactions: Vec<Interaction>,
        num_users: usize,
        num_items: usize,
        has_timestamps: bool,
    ) -> Self {
        Self {
            interactions,
            num_users,
            num_items,
            has_timestamps,
            user_ids: (0..num_users as i64).collect(),
            item_ids: (0..num_items as i64).collect(),
        }
    }

    /// Interactions grouped by user, each list sorted by item id.
    pub fn by_user(&self) -> Vec<Vec<Interaction>> {
        let mut out = vec![Vec::new(); self.num_users];
        for it in &self.interactions {
            out[it.user as usize].push(*it);
        }
        for list in &mut out {
            list.sort_by_key(|it| it.item);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Iid,
    Temporal,
    Noise,
}

impl std::fmt::Display for SplitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitKind::Iid => "iid",
            SplitKind::Temporal => "temporal",
            SplitKind::Noise => "noise",
        })
    }
}

/// Per-user train / validation / test positives. Every list is sorted
/// ascending and the three lists of a user are pairwise disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub kind: SplitKind,
    pub num_users: usize,
    pub num_items: usize,
    pub train: Vec<Vec<u32>>,
    pub validation: Vec<Vec<u32>>,
    pub test: Vec<Vec<u32>>,
    pub seed: Option<u64>,
}

impl DatasetSplit {
    pub fn train_count(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    pub fn validation_count(&self) -> usize {
        self.validation.iter().map(Vec::len).sum()
    }

    pub fn test_count(&self) -> usize {
        self.test.iter().map(Vec::len).sum()
    }

    pub fn is_train_positive(&self, user: u32, item: u32) -> bool {
        self.train[user as usize].binary_search(&item).is_ok()
    }

    /// Validation and test positives of `user`, sorted.
    pub fn held_out(&self, user: u32) -> Vec<u32> {
        let u = user as usize;
        let set: BTreeSet<u32> = self.validation[u]
            .iter()
            .chain(self.test[u].iter())
            .copied()
            .collect();
        set.into_iter().collect()
    }

    /// Train edges as (user, item) pairs in user-major order.
    pub fn train_pairs(&self) -> Vec<(u32, u32)> {
        self.train
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&i| (u as u32, i)))
            .collect()
    }

    /// Relabels the split as a noise-injection split; the partition is kept.
    pub fn into_noise(mut self) -> Self {
        self.kind = SplitKind::Noise;
        self
    }
}
