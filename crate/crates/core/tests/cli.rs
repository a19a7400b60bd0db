use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use drrl_core::dataio::synthetic::{block_dataset, BlockConfig};
use drrl_core::dataio::{read_split, split_iid, write_split};
use drrl_core::graphmodel::{write_checkpoint, EmbeddingTable};
use drrl_core::metrics::{random_recall_baseline, EvalTarget};
use drrl_core::rng::stream_rng;

fn drrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drrl"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_log(path: &Path, with_time: bool) {
    let mut text = String::new();
    for u in 0..12 {
        for k in 0..8 {
            let item = 100 + (u * 3 + k * 7) % 20;
            if with_time {
                text.push_str(&format!("{u}\t{item}\t{}\n", 1000 + k * 10 + u));
            } else {
                text.push_str(&format!("{u}\t{item}\n"));
            }
        }
    }
    fs::write(path, text).unwrap();
}

#[test]
fn split_writes_parts_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.tsv");
    write_log(&input, false);
    let out = dir.path().join("out");
    let o = drrl(&["split", "--kind", "iid", "--train", "0.8", "--val", "0.1", "--seed", "42", p(&input), p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["train.tsv", "validation.tsv", "test.tsv", "manifest.json", "user_map.tsv", "item_map.tsv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let split = read_split(&out).unwrap();
    assert_eq!(split.num_users, 12);
    assert_eq!(split.train_count() + split.validation_count() + split.test_count(), 96);
}

#[test]
fn temporal_split_needs_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    let timed = dir.path().join("timed.tsv");
    write_log(&timed, true);
    let o = drrl(&["split", "--kind", "temporal", "--test", "0.2", p(&timed), p(&dir.path().join("t"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let split = read_split(&dir.path().join("t")).unwrap();
    assert!(split.test_count() > 0);

    let plain = dir.path().join("plain.tsv");
    write_log(&plain, false);
    let o = drrl(&["split", "--kind", "temporal", p(&plain), p(&dir.path().join("u"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("timestamp"), "{}", stderr(&o));
}

const CONFIG: &str = r#"
[data]
synthetic = { num_users = 40, num_items = 30, interactions_per_user = 8 }
synthetic_seed = 3

[split]
kind = "noise"
seed = 3

[backbone]
kind = "mf"
dim = 8

[loss]
kind = "drrl"
gamma = 2.0
beta0 = 0.0

[train]
batch_size = 64
n_neg = 8
lr = 0.01
max_epochs = 4
seed = 3
noise = { ratio = 0.25 }

[eval]
ks = [5, 10]

[output]
dir = "unused"
"#;

#[test]
fn train_evaluate_stats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, CONFIG).unwrap();
    let run = dir.path().join("run");
    let o = drrl(&["train", "--config", p(&cfg), "--output", p(&run)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["checkpoint.bin", "checkpoint.json", "report.json", "report.csv", "metrics.csv", "config.toml"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let ckpt = run.join("checkpoint.bin");
    let split = run.join("split");

    let o = drrl(&["evaluate", "--checkpoint", p(&ckpt), "--split", p(&split), "--ks", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 1 + 2);
    let csv = dir.path().join("m.csv");
    let o = drrl(&["evaluate", "--checkpoint", p(&ckpt), "--split", p(&split), "--ks", "5,10,20", "--out", p(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 6);

    let diag = dir.path().join("diag.csv");
    let o = drrl(&["stats", "--checkpoint", p(&ckpt), "--split", p(&split), "--loss", "drrl", "--out", p(&diag)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!(summary["mean_truncation"].as_f64().is_some());
    assert!(summary["mean_k2"].as_f64().is_some(), "noise split flags held-out items");
    let text = fs::read_to_string(&diag).unwrap();
    assert!(text.starts_with("user,k1,k2,truncation,beta"));

    let o = drrl(&["stats", "--checkpoint", p(&ckpt), "--split", p(&split), "--loss", "sl"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!(summary["mean_k1"].as_f64().unwrap() >= 1.0);

    for loss in ["mse", "bce", "bpr"] {
        let o = drrl(&["stats", "--checkpoint", p(&ckpt), "--split", p(&split), "--loss", loss]);
        assert!(!o.status.success());
        assert!(stderr(&o).contains("no worst-case weights"), "{}", stderr(&o));
    }
}

#[test]
fn grid_config_trains_every_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.cfg");
    fs::write(&cfg, format!("{CONFIG}\n[grid]\n\"loss.gamma\" = [1.1, 1.3]\n")).unwrap();
    let root = dir.path().join("grid");
    let o = drrl(&["train", "--config", p(&cfg), "--output", p(&root)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(root.join("run-000/checkpoint.bin").exists());
    assert!(root.join("run-001/checkpoint.bin").exists());
    let grid = fs::read_to_string(root.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 3);
    assert!(root.join("best.json").exists());
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, CONFIG.replace("kind = \"drrl\"", "")).unwrap();
    let o = drrl(&["train", "--config", p(&cfg)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("kind"), "{}", stderr(&o));

    fs::write(&cfg, CONFIG.replace("lr = 0.01", "lr = -1.0").replace("n_neg = 8", "n_neg = 0")).unwrap();
    let o = drrl(&["train", "--config", p(&cfg)]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("lr") && err.contains("n_neg"), "{err}");
}

#[test]
fn random_checkpoint_scores_near_the_random_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let log = block_dataset(&BlockConfig::default(), 7);
    let split = split_iid(&log, 0.8, 0.1, 7).unwrap();
    write_split(&split, None, &dir.path().join("split")).unwrap();
    let table = EmbeddingTable::random(split.num_users, split.num_items, 16, 0.1, &mut stream_rng(9, 0));
    let ckpt = dir.path().join("random.bin");
    write_checkpoint(&ckpt, &table, None).unwrap();
    let o = drrl(&["evaluate", "--checkpoint", p(&ckpt), "--split", p(&dir.path().join("split")), "--ks", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let recall: f64 = stdout(&o)
        .lines()
        .find(|l| l.contains(",recall,"))
        .and_then(|l| l.rsplit(',').next())
        .unwrap()
        .parse()
        .unwrap();
    let baseline = random_recall_baseline(&split, EvalTarget::Test, 10);
    assert!((recall - baseline).abs() <= 0.08, "recall {recall} vs baseline {baseline}");
}

#[test]
fn evaluate_rejects_mismatched_item_space() {
    let dir = tempfile::tempdir().unwrap();
    let log = block_dataset(&BlockConfig::default(), 1);
    let split = split_iid(&log, 0.8, 0.1, 1).unwrap();
    write_split(&split, None, &dir.path().join("split")).unwrap();
    let table = EmbeddingTable::random(split.num_users, split.num_items + 3, 4, 0.1, &mut stream_rng(1, 0));
    let ckpt = dir.path().join("c.bin");
    write_checkpoint(&ckpt, &table, None).unwrap();
    let o = drrl(&["evaluate", "--checkpoint", p(&ckpt), "--split", p(&dir.path().join("split"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("item count mismatch"), "{}", stderr(&o));
}

#[test]
fn verify_reports_json_and_exit_status() {
    let o = drrl(&["verify", "--suite", "duality", "--n", "6", "--gamma", "2", "--eta", "0.1", "--count", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 10);
    for l in lines.iter().filter(|l| l["check"].as_str().unwrap().starts_with("gap")) {
        assert!(l["value"].as_f64().unwrap() <= 1e-3);
    }

    let o = drrl(&["verify", "--suite", "degeneracy"]);
    assert!(o.status.success());
    let line: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!(line["value"].as_f64().unwrap() <= 1e-12);

    let o = drrl(&["verify", "--suite", "gradients", "--count", "5"]);
    assert!(o.status.success(), "{}", stdout(&o));

    let o = drrl(&["verify", "--suite", "lemma1", "--count", "3", "--tol", "0"]);
    assert_eq!(o.status.code(), Some(1));
}
