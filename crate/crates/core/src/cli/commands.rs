use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;

use super::{BackboneArg, EvaluateArgs, LossArg, ModelArgs, SplitArgs, SplitKindArg, StatsArgs, TargetArg, TrainArgs};
use crate::config::{load_config, RunConfig};
use crate::dataio::{self, DatasetSplit};
use crate::fsutil::write_atomic;
use crate::graphmodel::{read_checkpoint, BackboneConfig, BackboneKind, EmbeddingTable, InteractionGraph, NormCache};
use crate::losses::{LossKind, LossSpec, MarginMode, MarginState};
use crate::metrics::{
    evaluate, optimal_margin, user_diagnostics, write_diagnostics_csv, write_metrics_csv, EvalTarget, MetricRow,
};
use crate::trainer::{inference_output, save_run, train, RunSidecar};

pub fn cmd_split(args: &SplitArgs) -> anyhow::Result<()> {
    let mut log = dataio::read_interactions(&args.input)?;
    if let Some(k) = args.k_core {
        log = dataio::k_core(&log, k);
    }
    let split = match args.kind {
        SplitKindArg::Iid => dataio::split_iid(&log, args.train, args.val, args.seed)?,
        SplitKindArg::Noise => dataio::split_iid(&log, args.train, args.val, args.seed)?.into_noise(),
        SplitKindArg::Temporal => dataio::split_temporal(&log, args.test, args.val)?,
    };
    let manifest = dataio::write_split(&split, Some(&log), &args.output)?;
    log::info!(
        "{} split: {} users, {} items, {}/{}/{} train/validation/test",
        manifest.split_kind,
        manifest.num_users,
        manifest.num_items,
        manifest.counts.train,
        manifest.counts.validation,
        manifest.counts.test
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct GridRow<'a> {
    run: usize,
    label: &'a str,
    dir: String,
    config_hash: String,
    best_epoch: usize,
    best_val_ndcg: Option<f64>,
}

pub fn cmd_train(args: &TrainArgs) -> anyhow::Result<()> {
    let set = load_config(&args.config)?;
    let grid = set.runs.len() > 1;
    let mut rows = Vec::new();
    let mut base = None;
    for (idx, run) in set.runs.iter().enumerate() {
        let mut cfg = run.config.clone();
        if let Some(out) = &args.output {
            cfg.output.dir = out.clone();
        }
        let root = cfg.output.dir.clone();
        let dir = if grid { root.join(format!("run-{idx:03}")) } else { root.clone() };
        if !run.label.is_empty() {
            log::info!("grid point {idx}: {}", run.label);
        }
        let (hash, best_epoch, best) = train_one(&cfg, &dir)?;
        rows.push(GridRow {
            run: idx,
            label: &run.label,
            dir: dir.display().to_string(),
            config_hash: hash,
            best_epoch,
            best_val_ndcg: best,
        });
        base = Some(root);
    }
    if grid {
        let root = base.expect("at least one run");
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &rows {
            w.serialize(r)?;
        }
        let path = root.join("grid.csv");
        write_atomic(&path, &w.into_inner()?).with_context(|| path.display().to_string())?;
        let winner = rows
            .iter()
            .filter(|r| r.best_val_ndcg.is_some())
            .max_by(|a, b| a.best_val_ndcg.partial_cmp(&b.best_val_ndcg).expect("finite metrics"));
        if let Some(w) = winner {
            println!("best run {} ({}): validation NDCG {:.5}", w.run, w.label, w.best_val_ndcg.unwrap_or(f64::NAN));
            let path = root.join("best.json");
            let json = serde_json::json!({ "run": w.run, "label": w.label, "dir": w.dir });
            write_atomic(&path, serde_json::to_string_pretty(&json)?.as_bytes())
                .with_context(|| path.display().to_string())?;
        }
    }
    Ok(())
}

fn train_one(cfg: &RunConfig, dir: &Path) -> anyhow::Result<(String, usize, Option<f64>)> {
    let split = cfg.load_split()?;
    let hash = cfg.hash();
    let outcome = train(&split, &cfg.backbone, &cfg.loss, &cfg.train)?;
    save_run(dir, &outcome, &hash)?;
    dataio::write_split(&split, None, &dir.join("split"))?;
    let path = dir.join("config.toml");
    write_atomic(&path, cfg.to_toml().as_bytes()).with_context(|| path.display().to_string())?;

    let graph = InteractionGraph::from_split(&split);
    let out = inference_output(&outcome.table, &graph, &cfg.backbone)?;
    let cache = NormCache::new(&out)?;
    let best = outcome.report.best_epoch;
    match evaluate(&cache, &split, EvalTarget::Test, &cfg.eval.ks) {
        Ok(report) => {
            write_metrics_csv(&report.rows(best), &dir.join("metrics.csv"))?;
            for &k in &cfg.eval.ks {
                log::info!(
                    "test Recall@{k} {:.5} NDCG@{k} {:.5}",
                    report.recall_at(k).unwrap_or(f64::NAN),
                    report.ndcg_at(k).unwrap_or(f64::NAN)
                );
            }
        }
        Err(crate::metrics::MetricsError::NoUsers) => log::warn!("split has no test interactions; metrics.csv skipped"),
        Err(e) => return Err(e.into()),
    }
    println!(
        "{}: best epoch {best}, stop {:?}, validation NDCG@{} {}",
        dir.display(),
        outcome.report.stop_reason,
        outcome.report.eval_k,
        outcome.report.best_metric.map_or("n/a".into(), |m| format!("{m:.5}"))
    );
    Ok((hash, best, outcome.report.best_metric))
}

fn backbone_of(args: &ModelArgs, dim: usize) -> BackboneConfig {
    let kind = match args.backbone {
        BackboneArg::Mf => BackboneKind::Mf,
        BackboneArg::Lightgcn => BackboneKind::LightGcn,
        BackboneArg::Xsimgcl => BackboneKind::XSimGcl,
    };
    BackboneConfig {
        dim,
        layers: args.layers,
        ..BackboneConfig::new(kind)
    }
}

struct LoadedModel {
    split: DatasetSplit,
    output: EmbeddingTable,
    margins: Option<MarginState>,
    epoch: usize,
}

fn check_dims(table: &EmbeddingTable, split: &DatasetSplit) -> anyhow::Result<()> {
    if table.num_users() != split.num_users {
        bail!(
            "user count mismatch: checkpoint has {} users, split has {}",
            table.num_users(),
            split.num_users
        );
    }
    if table.num_items() != split.num_items {
        bail!(
            "item count mismatch: checkpoint has {} items, split has {}",
            table.num_items(),
            split.num_items
        );
    }
    Ok(())
}

fn sidecar_epoch(checkpoint: &Path) -> usize {
    let path: PathBuf = checkpoint.with_extension("json");
    std::fs::read_to_string(path)
        .ok()
        .and_then(|t| serde_json::from_str::<RunSidecar>(&t).ok())
        .map_or(0, |s| s.epoch)
}

fn load_model(args: &ModelArgs) -> anyhow::Result<LoadedModel> {
    let ckpt = read_checkpoint(&args.checkpoint)?;
    let split = dataio::read_split(&args.split)?;
    check_dims(&ckpt.table, &split)?;
    let backbone = backbone_of(args, ckpt.table.dim());
    let graph = InteractionGraph::from_split(&split);
    let output = inference_output(&ckpt.table, &graph, &backbone)?;
    Ok(LoadedModel {
        split,
        output,
        margins: ckpt.margins,
        epoch: sidecar_epoch(&args.checkpoint),
    })
}

fn emit_csv(bytes: &[u8], out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(p) => write_atomic(p, bytes).with_context(|| p.display().to_string()),
        None => std::io::stdout().write_all(bytes).context("stdout"),
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    if args.ks.is_empty() || args.ks.contains(&0) {
        bail!("--ks must list positive cutoffs");
    }
    let model = load_model(&args.model)?;
    let target = match args.target {
        TargetArg::Validation => EvalTarget::Validation,
        TargetArg::Test => EvalTarget::Test,
    };
    let cache = NormCache::new(&model.output)?;
    let report = evaluate(&cache, &model.split, target, &args.ks)?;
    let rows: Vec<MetricRow> = report.rows(model.epoch);
    match &args.out {
        Some(p) => write_metrics_csv(&rows, p)?,
        None => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r)?;
            }
            emit_csv(&w.into_inner()?, None)?;
        }
    }
    Ok(())
}

fn loss_spec(args: &StatsArgs) -> LossSpec {
    let kind = match args.loss {
        LossArg::Mse => LossKind::Mse,
        LossArg::Bce => LossKind::Bce,
        LossArg::Bpr => LossKind::Bpr,
        LossArg::Sl => LossKind::Sl,
        LossArg::Ccl => LossKind::Ccl,
        LossArg::Drrl => LossKind::Drrl,
    };
    LossSpec {
        tau: args.tau,
        alpha: args.alpha,
        margin: args.margin,
        gamma_star: args.gamma_star,
        c: args.c,
        beta0: args.margin,
        ..LossSpec::new(kind)
    }
}

/// Per-user minimizer of the margin objective over the full non-train sweep.
pub fn solved_margins(cache: &NormCache, split: &DatasetSplit, gamma_star: f64, c: f64) -> anyhow::Result<MarginState> {
    let mut values = Vec::with_capacity(split.num_users);
    for u in 0..split.num_users as u32 {
        let all = cache.user_scores(u);
        let scores: Vec<f64> = (0..split.num_items as u32)
            .filter(|&j| !split.is_train_positive(u, j))
            .map(|j| all[j as usize])
            .collect();
        values.push(if scores.is_empty() {
            0.0
        } else {
            optimal_margin(&scores, gamma_star, c)?
        });
    }
    Ok(MarginState::from_values(MarginMode::PerUser, values))
}

pub fn cmd_stats(args: &StatsArgs) -> anyhow::Result<()> {
    let spec = loss_spec(args);
    if !spec.kind.has_weights() {
        bail!("{} has no worst-case weights; stats supports sl, ccl and drrl", spec.kind);
    }
    let errs = spec.validate();
    if !errs.is_empty() {
        bail!("invalid loss parameters:\n  {}", errs.join("\n  "));
    }
    let model = load_model(&args.model)?;
    let cache = NormCache::new(&model.output)?;
    let margins = match model.margins {
        _ if args.solve_margin => solved_margins(&cache, &model.split, spec.gamma_star, spec.c)?,
        Some(m) => m,
        None => MarginState::new(MarginMode::Shared, model.split.num_users, args.margin),
    };
    let (rows, summary) = user_diagnostics(&cache, &model.split, &spec, &margins)?;
    if let Some(p) = &args.out {
        write_diagnostics_csv(&rows, p)?;
    }
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}
