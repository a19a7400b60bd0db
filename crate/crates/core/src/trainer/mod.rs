//! Mini-batch training with Adam on embeddings and SGD on DrRL margins.

mod adam;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{adam_step, apply_weight_decay, AdamState};
pub use report::{save_run, EarlyStopping, EpochRecord, RunSidecar, StopReason, TrainReport};

use crate::dataio::{BatchSample, DataError, DatasetSplit, NegativeSampler, NoiseConfig};
use ndarray::Axis;

use crate::graphmodel::{
    backward, forward, infonce_auxiliary, BackboneConfig, BackboneKind, EmbeddingTable, ForwardOutput, GraphError,
    InteractionGraph, LayerGradient, NormCache,
};
use crate::losses::{batch_loss, drrl_beta_gradient, BatchScores, LossError, LossKind, LossSpec, MarginState};
use crate::metrics::{evaluate, EvalTarget, MetricsError};
use crate::rng::{stream, stream_rng};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid train config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::n_neg")]
    pub n_neg: usize,
    #[serde(default = "defaults::lr")]
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "defaults::max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "defaults::patience")]
    pub patience: usize,
    #[serde(default = "defaults::eval_every")]
    pub eval_every: usize,
    /// Cutoff of the validation NDCG used for model selection.
    #[serde(default = "defaults::eval_k")]
    pub eval_k: usize,
    #[serde(default = "defaults::init_std")]
    pub init_std: f64,
    /// Batches per epoch; defaults to one pass over the train pairs.
    #[serde(default)]
    pub steps_per_epoch: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseConfig,
}

mod defaults {
    pub fn batch_size() -> usize {
        1024
    }
    pub fn n_neg() -> usize {
        256
    }
    pub fn lr() -> f64 {
        1e-3
    }
    pub fn max_epochs() -> usize {
        200
    }
    pub fn patience() -> usize {
        25
    }
    pub fn eval_every() -> usize {
        1
    }
    pub fn eval_k() -> usize {
        20
    }
    pub fn init_std() -> f64 {
        0.1
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: defaults::batch_size(),
            n_neg: defaults::n_neg(),
            lr: defaults::lr(),
            weight_decay: 0.0,
            max_epochs: defaults::max_epochs(),
            patience: defaults::patience(),
            eval_every: defaults::eval_every(),
            eval_k: defaults::eval_k(),
            init_std: defaults::init_std(),
            steps_per_epoch: None,
            seed: 0,
            noise: NoiseConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let positive = [
            ("train.batch_size", self.batch_size),
            ("train.n_neg", self.n_neg),
            ("train.max_epochs", self.max_epochs),
            ("train.patience", self.patience),
            ("train.eval_every", self.eval_every),
            ("train.eval_k", self.eval_k),
        ];
        for (name, v) in positive {
            if v == 0 {
                errs.push(format!("{name} must be >= 1"));
            }
        }
        if self.steps_per_epoch == Some(0) {
            errs.push("train.steps_per_epoch must be >= 1".into());
        }
        if !(self.lr > 0.0) {
            errs.push(format!("train.lr must be > 0 (got {})", self.lr));
        }
        if !(self.weight_decay >= 0.0) {
            errs.push(format!("train.weight_decay must be >= 0 (got {})", self.weight_decay));
        }
        if !(self.init_std > 0.0) {
            errs.push(format!("train.init_std must be > 0 (got {})", self.init_std));
        }
        if !(0.0..=1.0).contains(&self.noise.ratio) {
            errs.push(format!("train.noise.ratio must lie in [0, 1] (got {})", self.noise.ratio));
        }
        errs
    }
}

/// The best-validation model plus the run history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub table: EmbeddingTable,
    pub margins: MarginState,
    pub report: TrainReport,
}

/// Result of one optimization step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub auxiliary: f64,
}

/// Mutable training state; [`train`] drives it epoch by epoch.
pub struct Trainer<'a> {
    split: &'a DatasetSplit,
    graph: InteractionGraph,
    backbone: BackboneConfig,
    loss: LossSpec,
    cfg: TrainConfig,
    sampler: NegativeSampler<'a>,
    pub table: EmbeddingTable,
    pub margins: MarginState,
    adam: AdamState,
    batch_rng: rand_chacha::ChaCha8Rng,
    noise_rng: rand_chacha::ChaCha8Rng,
}

fn unique(ids: impl Iterator<Item = u32>) -> Vec<u32> {
    let mut v: Vec<u32> = ids.collect();
    v.sort_unstable();
    v.dedup();
    v
}

impl<'a> Trainer<'a> {
    pub fn new(split: &'a DatasetSplit, backbone: &BackboneConfig, loss: &LossSpec, cfg: &TrainConfig) -> Result<Self, TrainError> {
        let mut errs = backbone.validate();
        errs.extend(loss.validate());
        errs.extend(cfg.validate());
        if !errs.is_empty() {
            return Err(TrainError::Config(errs.join("; ")));
        }
        let mut init = stream_rng(cfg.seed, stream::INIT);
        let table = EmbeddingTable::random(split.num_users, split.num_items, backbone.dim, cfg.init_std, &mut init);
        Ok(Self {
            split,
            graph: InteractionGraph::from_split(split),
            backbone: backbone.clone(),
            loss: loss.clone(),
            cfg: cfg.clone(),
            sampler: NegativeSampler::new(split, cfg.noise)?,
            adam: AdamState::new(&table),
            margins: MarginState::new(loss.margin_mode, split.num_users, loss.beta0),
            table,
            batch_rng: stream_rng(cfg.seed, stream::BATCH),
            noise_rng: stream_rng(cfg.seed, stream::NOISE),
        })
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.cfg
            .steps_per_epoch
            .unwrap_or_else(|| self.sampler.num_pairs().div_ceil(self.cfg.batch_size))
    }

    /// Final representations without training-time perturbation.
    pub fn inference_output(&self) -> Result<EmbeddingTable, TrainError> {
        inference_output(&self.table, &self.graph, &self.backbone)
    }

    pub fn step(&mut self) -> Result<StepStats, TrainError> {
        let batch = self.sampler.sample(self.cfg.batch_size, self.cfg.n_neg, &mut self.batch_rng);
        if batch.is_empty() {
            return Err(TrainError::Data(DataError::EmptySplit));
        }
        self.step_on(&batch)
    }

    /// One iteration on a given batch: margins first, then embeddings.
    pub fn step_on(&mut self, batch: &BatchSample) -> Result<StepStats, TrainError> {
        let fwd = forward(&self.table, &self.graph, &self.backbone, &mut self.noise_rng)?;
        let cache = NormCache::new(&fwd.output)?;
        let scores = batch_scores(&cache, batch);

        if self.loss.kind == LossKind::Drrl {
            let mut grads = Vec::with_capacity(scores.users.len());
            for (k, &u) in scores.users.iter().enumerate() {
                let beta = self.margins.get(u);
                grads.push((u, drrl_beta_gradient(&scores.neg[k], self.loss.gamma_star, self.loss.c, self.loss.eps, beta)?));
            }
            self.margins.beta_step(&grads, self.loss.lr_beta);
            if !self.margins.all_finite() {
                return Err(TrainError::NonFinite("margins".into()));
            }
        }

        let (stats, mut grads) = backprop(
            &self.graph,
            &self.backbone,
            &self.loss,
            &self.margins,
            batch,
            &fwd,
            &cache,
            &scores,
        )?;
        let touched_items: Vec<u32> = batch
            .pairs
            .iter()
            .map(|p| p.1)
            .chain(batch.negatives.iter().flatten().copied())
            .collect();
        let touched_users: Vec<u32> = batch.pairs.iter().map(|p| p.0).collect();
        apply_weight_decay(&self.table, &mut grads, &touched_users, &touched_items, self.cfg.weight_decay);
        adam_step(&mut self.adam, &mut self.table, &grads, self.cfg.lr)?;
        Ok(stats)
    }

    /// Validation (NDCG@k, Recall@k), or None when no user has
    /// validation positives.
    pub fn validate(&self) -> Result<Option<(f64, f64)>, TrainError> {
        let cache = NormCache::new(&self.inference_output()?)?;
        let k = self.cfg.eval_k;
        match evaluate(&cache, self.split, EvalTarget::Validation, &[k]) {
            Ok(r) => Ok(Some((r.ndcg[0], r.recall[0]))),
            Err(MetricsError::NoUsers) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

fn batch_scores(cache: &NormCache, batch: &BatchSample) -> BatchScores {
    BatchScores {
        users: batch.pairs.iter().map(|p| p.0).collect(),
        pos: batch.pairs.iter().map(|&(u, i)| cache.score(u, i)).collect(),
        neg: batch
            .pairs
            .iter()
            .zip(&batch.negatives)
            .map(|(&(u, _), negs)| negs.iter().map(|&j| cache.score(u, j)).collect())
            .collect(),
    }
}

#[allow(clippy::too_many_arguments)]
fn backprop(
    graph: &InteractionGraph,
    backbone: &BackboneConfig,
    loss: &LossSpec,
    margins: &MarginState,
    batch: &BatchSample,
    fwd: &ForwardOutput,
    cache: &NormCache,
    scores: &BatchScores,
) -> Result<(StepStats, EmbeddingTable), TrainError> {
    let out = batch_loss(scores, loss, margins)?;
    if !out.value.is_finite() {
        return Err(TrainError::NonFinite("training loss".into()));
    }
    let mut out_grads = fwd.output.zeros_like();
    for (k, &(u, i)) in batch.pairs.iter().enumerate() {
        cache.accumulate(u, i, out.d_pos[k], &mut out_grads);
        for (&j, &g) in batch.negatives[k].iter().zip(&out.d_neg[k]) {
            cache.accumulate(u, j, g, &mut out_grads);
        }
    }

    let mut layer_grads = Vec::new();
    let mut auxiliary = 0.0;
    if backbone.kind == BackboneKind::XSimGcl && backbone.infonce_weight > 0.0 {
        let idx_u: Vec<usize> = unique(batch.pairs.iter().map(|p| p.0)).into_iter().map(|u| u as usize).collect();
        let idx_i: Vec<usize> = unique(batch.pairs.iter().map(|p| p.1)).into_iter().map(|i| i as usize).collect();
        let lstar = fwd.layer(backbone.contrast_layer);
        let (t, w) = (backbone.infonce_temperature, backbone.infonce_weight);
        let cu = infonce_auxiliary(
            fwd.output.users.select(Axis(0), &idx_u).view(),
            lstar.users.select(Axis(0), &idx_u).view(),
            t,
            w,
        )?;
        let ci = infonce_auxiliary(
            fwd.output.items.select(Axis(0), &idx_i).view(),
            lstar.items.select(Axis(0), &idx_i).view(),
            t,
            w,
        )?;
        auxiliary = cu.value + ci.value;
        let mut lg = fwd.output.zeros_like();
        for (r, &u) in idx_u.iter().enumerate() {
            out_grads.users.row_mut(u).scaled_add(1.0, &cu.grad_a.row(r));
            lg.users.row_mut(u).scaled_add(1.0, &cu.grad_b.row(r));
        }
        for (r, &i) in idx_i.iter().enumerate() {
            out_grads.items.row_mut(i).scaled_add(1.0, &ci.grad_a.row(r));
            lg.items.row_mut(i).scaled_add(1.0, &ci.grad_b.row(r));
        }
        layer_grads.push(LayerGradient {
            layer: backbone.contrast_layer,
            grads: lg,
        });
    }

    let grads = backward(graph, backbone, &out_grads, &layer_grads)?;
    Ok((
        StepStats {
            loss: out.value,
            auxiliary,
        },
        grads,
    ))
}

/// Batch objective (main loss plus any contrastive auxiliary) and its
/// gradient w.r.t. the raw table, at fixed margins. Nothing is updated.
pub fn objective<R: rand::Rng + ?Sized>(
    table: &EmbeddingTable,
    graph: &InteractionGraph,
    backbone: &BackboneConfig,
    loss: &LossSpec,
    margins: &MarginState,
    batch: &BatchSample,
    rng: &mut R,
) -> Result<(f64, EmbeddingTable), TrainError> {
    let fwd = forward(table, graph, backbone, rng)?;
    let cache = NormCache::new(&fwd.output)?;
    let scores = batch_scores(&cache, batch);
    let (stats, grads) = backprop(graph, backbone, loss, margins, batch, &fwd, &cache, &scores)?;
    Ok((stats.loss + stats.auxiliary, grads))
}

/// Forward pass with the XSimGCL perturbation switched off.
pub fn inference_output(table: &EmbeddingTable, graph: &InteractionGraph, backbone: &BackboneConfig) -> Result<EmbeddingTable, TrainError> {
    let mut clean = backbone.clone();
    clean.noise_eps = 0.0;
    let mut unused = stream_rng(0, 0);
    Ok(forward(table, graph, &clean, &mut unused)?.output)
}

/// Runs the loop until `max_epochs` or patience runs out and returns the
/// checkpoint with the best validation NDCG.
pub fn train(split: &DatasetSplit, backbone: &BackboneConfig, loss: &LossSpec, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let mut tr = Trainer::new(split, backbone, loss, cfg)?;
    let steps = tr.steps_per_epoch();
    let mut report = TrainReport::new(cfg.eval_k);
    let mut best = (tr.table.clone(), tr.margins.clone());
    let mut stopping = EarlyStopping::new(cfg.patience);
    let mut stop = StopReason::MaxEpochs;

    'epochs: for epoch in 1..=cfg.max_epochs {
        let mut sum = 0.0;
        let mut aux = 0.0;
        for _ in 0..steps {
            match tr.step() {
                Ok(s) => {
                    sum += s.loss;
                    aux += s.auxiliary;
                }
                Err(TrainError::NonFinite(what)) => {
                    log::error!("epoch {epoch}: non-finite {what}; keeping the last good checkpoint");
                    stop = StopReason::NonFinite;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let mut rec = EpochRecord {
            epoch,
            train_loss: sum / steps as f64,
            auxiliary_loss: aux / steps as f64,
            val_ndcg: None,
            val_recall: None,
        };
        if epoch % cfg.eval_every == 0 {
            match tr.validate()? {
                Some((ndcg, recall)) => {
                    rec.val_ndcg = Some(ndcg);
                    rec.val_recall = Some(recall);
                    if stopping.observe(ndcg) {
                        best = (tr.table.clone(), tr.margins.clone());
                        report.best_epoch = epoch;
                        report.best_metric = Some(ndcg);
                    }
                }
                None => {
                    best = (tr.table.clone(), tr.margins.clone());
                    report.best_epoch = epoch;
                }
            }
        }
        log::info!(
            "epoch {epoch}: loss {:.6} val ndcg@{} {}",
            rec.train_loss,
            cfg.eval_k,
            rec.val_ndcg.map_or("-".to_string(), |x| format!("{x:.5}"))
        );
        report.epochs.push(rec);
        if stopping.exhausted() {
            stop = StopReason::Patience;
            break;
        }
    }
    report.stop_reason = stop;
    Ok(TrainOutcome {
        table: best.0,
        margins: best.1,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{split_iid, synthetic};

    fn tiny() -> DatasetSplit {
        let log = synthetic::block_dataset(&synthetic::BlockConfig::default(), 3);
        split_iid(&log, 0.8, 0.1, 3).unwrap()
    }

    fn quick(seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: 128,
            n_neg: 16,
            lr: 0.01,
            max_epochs: 3,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let split = tiny();
        let bb = BackboneConfig::mf(8);
        let loss = LossSpec::new(LossKind::Drrl);
        let a = train(&split, &bb, &loss, &quick(5)).unwrap();
        let b = train(&split, &bb, &loss, &quick(5)).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.table, b.table);
    }

    #[test]
    fn margins_untouched_for_other_losses() {
        let split = tiny();
        let mut loss = LossSpec::new(LossKind::Bpr);
        loss.beta0 = 0.3;
        let out = train(&split, &BackboneConfig::mf(8), &loss, &quick(1)).unwrap();
        assert!(out.margins.values().iter().all(|b| *b == 0.3));
    }

    #[test]
    fn margins_move_before_the_theta_step() {
        let split = tiny();
        let mut loss = LossSpec::new(LossKind::Drrl);
        loss.lr_beta = 0.5;
        loss.beta0 = 2.0;
        let mut tr = Trainer::new(&split, &BackboneConfig::mf(8), &loss, &quick(0)).unwrap();
        let batch = tr.sampler.sample(4, 8, &mut stream_rng(0, 9));
        let stats = tr.step_on(&batch).unwrap();
        // β starts above every cosine score, so each pair contributes
        // gradient 1 and the θ loss is evaluated at β = 2 − 0.5·count.
        let u = batch.pairs[0].0;
        let count = batch.pairs.iter().filter(|p| p.0 == u).count() as f64;
        assert_eq!(tr.margins.get(u), 2.0 - 0.5 * count);
        assert!(stats.loss.is_finite());
    }

    #[test]
    fn graph_backbones_train() {
        let split = tiny();
        for kind in [BackboneKind::LightGcn, BackboneKind::XSimGcl] {
            let mut bb = BackboneConfig::new(kind);
            bb.dim = 8;
            bb.infonce_weight = 0.1;
            let out = train(&split, &bb, &LossSpec::new(LossKind::Sl), &quick(2)).unwrap();
            assert_eq!(out.report.epochs.len(), 3);
            assert!(out.table.all_finite());
        }
    }

    #[test]
    fn invalid_config_lists_every_problem() {
        let split = tiny();
        let cfg = TrainConfig {
            batch_size: 0,
            lr: -1.0,
            ..TrainConfig::default()
        };
        let err = Trainer::new(&split, &BackboneConfig::mf(0), &LossSpec::new(LossKind::Sl), &cfg).err().unwrap();
        let msg = err.to_string();
        assert!(msg.contains("batch_size") && msg.contains("train.lr") && msg.contains("backbone.dim"));
    }

    #[test]
    fn full_chain_gradient_matches_finite_differences() {
        use crate::losses::MarginMode;
        let edges = [(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 3), (3, 3), (3, 0), (0, 2)];
        let graph = InteractionGraph::from_edges(4, 4, &edges);
        let batch = BatchSample {
            pairs: vec![(0, 1), (2, 3), (3, 0)],
            negatives: vec![vec![3, 2], vec![0, 1], vec![1, 2]],
            false_negative_mask: vec![vec![false; 2]; 3],
        };
        let margins = MarginState::from_values(MarginMode::PerUser, vec![-0.9; 4]);
        let h = 1e-5;
        for kind in [BackboneKind::Mf, BackboneKind::LightGcn, BackboneKind::XSimGcl] {
            let mut bb = BackboneConfig::new(kind);
            bb.dim = 3;
            bb.infonce_weight = 0.5;
            let table = EmbeddingTable::random(4, 4, 3, 1.0, &mut stream_rng(11, 0));
            for lk in [LossKind::Sl, LossKind::Drrl, LossKind::Bpr] {
                let loss = LossSpec::new(lk);
                let f = |t: &EmbeddingTable| {
                    objective(t, &graph, &bb, &loss, &margins, &batch, &mut stream_rng(5, 0)).unwrap()
                };
                let (_, g) = f(&table);
                for (which, r, c) in [(0, 0, 0), (0, 2, 1), (1, 1, 2), (1, 3, 0), (0, 3, 2)] {
                    let mut a = table.clone();
                    let mut b = table.clone();
                    let (pa, pb, gv) = if which == 0 {
                        (&mut a.users[[r, c]], &mut b.users[[r, c]], g.users[[r, c]])
                    } else {
                        (&mut a.items[[r, c]], &mut b.items[[r, c]], g.items[[r, c]])
                    };
                    *pa += h;
                    *pb -= h;
                    let fd = (f(&a).0 - f(&b).0) / (2.0 * h);
                    let rel = (fd - gv).abs() / fd.abs().max(gv.abs()).max(1e-6);
                    assert!(rel <= 1e-4, "{kind} {lk} ({which},{r},{c}): {gv} vs {fd}");
                }
            }
        }
    }
}
