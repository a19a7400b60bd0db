use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TrainError, TrainOutcome};
use crate::fsutil::write_atomic;
use crate::graphmodel::write_checkpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    Patience,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub auxiliary_loss: f64,
    pub val_ndcg: Option<f64>,
    pub val_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub eval_k: usize,
    pub epochs: Vec<EpochRecord>,
    /// 0 when no epoch finished.
    pub best_epoch: usize,
    pub best_metric: Option<f64>,
    pub stop_reason: StopReason,
}

impl TrainReport {
    pub fn new(eval_k: usize) -> Self {
        Self {
            eval_k,
            epochs: Vec::new(),
            best_epoch: 0,
            best_metric: None,
            stop_reason: StopReason::MaxEpochs,
        }
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.epochs {
            w.serialize(e)?;
        }
        w.into_inner().map_err(|e| e.into_error().into())
    }
}

/// Patience counter over evaluations; an evaluation that fails to beat the
/// best so far counts against it.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    bad: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::NEG_INFINITY,
            bad: 0,
        }
    }

    /// Returns whether `metric` is a new best.
    pub fn observe(&mut self, metric: f64) -> bool {
        if metric > self.best {
            self.best = metric;
            self.bad = 0;
            true
        } else {
            self.bad += 1;
            false
        }
    }

    pub fn exhausted(&self) -> bool {
        self.bad >= self.patience
    }
}

/// JSON sidecar stored next to the binary checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSidecar {
    pub epoch: usize,
    pub metric: Option<f64>,
    pub config_hash: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |e| TrainError::Config(format!("{}: {e}", path.display()))
}

/// Writes `checkpoint.bin`, `checkpoint.json`, `report.json` and
/// `report.csv` into `dir`.
pub fn save_run(dir: &Path, outcome: &TrainOutcome, config_hash: &str) -> Result<(), TrainError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_checkpoint(&dir.join("checkpoint.bin"), &outcome.table, Some(&outcome.margins))?;
    let sidecar = RunSidecar {
        epoch: outcome.report.best_epoch,
        metric: outcome.report.best_metric,
        config_hash: config_hash.to_string(),
    };
    let p = dir.join("checkpoint.json");
    write_atomic(&p, serde_json::to_string_pretty(&sidecar).expect("plain data").as_bytes()).map_err(io_err(&p))?;
    let p = dir.join("report.json");
    write_atomic(&p, serde_json::to_string_pretty(&outcome.report).expect("plain data").as_bytes()).map_err(io_err(&p))?;
    let p = dir.join("report.csv");
    let csv = outcome
        .report
        .to_csv()
        .map_err(|e| TrainError::Config(format!("{}: {e}", p.display())))?;
    write_atomic(&p, &csv).map_err(io_err(&p))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_one_stops_after_two_decreasing_evaluations() {
        let mut es = EarlyStopping::new(1);
        let mut evals = 0;
        for m in [0.5, 0.4, 0.3, 0.2] {
            evals += 1;
            es.observe(m);
            if es.exhausted() {
                break;
            }
        }
        assert_eq!(evals, 2);
    }

    #[test]
    fn ties_do_not_reset_patience() {
        let mut es = EarlyStopping::new(2);
        assert!(es.observe(0.1));
        assert!(!es.observe(0.1));
        assert!(!es.exhausted());
        assert!(!es.observe(0.05));
        assert!(es.exhausted());
    }
}
