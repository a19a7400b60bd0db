//! Full-ranking top-K metrics and weight diagnostics.

mod diagnostics;
mod ranking;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diagnostics::{
    optimal_margin, truncation_ratio, user_diagnostics, weight_stats, DiagnosticsSummary, UserDiagnostics, WeightStats,
};
pub use ranking::{
    evaluate, exclusion, ndcg_at_k, random_recall_baseline, recall_at_k, top_k, EvalTarget, MetricReport,
    RankingInstance,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("weights must be nonnegative and nonempty")]
    BadWeights,
    #[error("scores must be nonempty")]
    EmptyScores,
    #[error("{0} has no worst-case weights to diagnose")]
    NoWeights(crate::losses::LossKind),
    #[error("margin solver: {0}")]
    Solver(String),
    #[error("no user has ground truth for this target")]
    NoUsers,
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One line of a metric dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub epoch: usize,
    pub metric: String,
    pub k: usize,
    pub value: f64,
}

fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| MetricsError::Io {
        path: path.to_path_buf(),
        source: e.into_error(),
    })?;
    crate::fsutil::write_atomic(path, &bytes).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_metrics_csv(rows: &[MetricRow], path: &Path) -> Result<(), MetricsError> {
    write_csv(rows, path)
}

pub fn write_diagnostics_csv(rows: &[UserDiagnostics], path: &Path) -> Result<(), MetricsError> {
    write_csv(rows, path)
}
