//! Run configuration files.
//!
//! A config is TOML with the sections `data`, `split`, `backbone`, `loss`,
//! `train`, `eval` and `output`. Unknown keys are rejected. Any key can be
//! overridden from the environment as `DRRL_<SECTION>_<KEY>` (for example
//! `DRRL_TRAIN_LR=0.01` or `DRRL_TRAIN_NOISE_RATIO=0.1`). An optional
//! `[grid]` section maps dotted keys to value lists and expands into the
//! Cartesian product of runs. For DrRL the Rényi order may be given as
//! `loss.gamma` instead of `loss.gamma_star`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::{Table, Value};

use crate::dataio::{self, synthetic::BlockConfig, DatasetSplit, SplitKind};
use crate::graphmodel::BackboneConfig;
use crate::losses::LossSpec;
use crate::trainer::TrainConfig;

const SECTIONS: [&str; 7] = ["data", "split", "backbone", "loss", "train", "eval", "output"];
pub const ENV_PREFIX: &str = "DRRL_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("config: {0}")]
    Schema(String),
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Data(#[from] dataio::DataError),
}

/// Where interactions come from. Exactly one source must be set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Raw interaction file, split on the fly.
    pub input: Option<PathBuf>,
    /// Directory written by `split`.
    pub split_dir: Option<PathBuf>,
    /// Generated block dataset.
    pub synthetic: Option<BlockConfig>,
    #[serde(default)]
    pub synthetic_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "split_defaults::kind")]
    pub kind: SplitKind,
    #[serde(default = "split_defaults::train_frac")]
    pub train_frac: f64,
    #[serde(default = "split_defaults::val_frac")]
    pub val_frac: f64,
    #[serde(default = "split_defaults::test_frac")]
    pub test_frac: f64,
    #[serde(default)]
    pub seed: u64,
    pub k_core: Option<usize>,
}

mod split_defaults {
    use crate::dataio::SplitKind;
    pub fn kind() -> SplitKind {
        SplitKind::Iid
    }
    pub fn train_frac() -> f64 {
        0.8
    }
    pub fn val_frac() -> f64 {
        0.1
    }
    pub fn test_frac() -> f64 {
        0.2
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            kind: split_defaults::kind(),
            train_frac: split_defaults::train_frac(),
            val_frac: split_defaults::val_frac(),
            test_frac: split_defaults::test_frac(),
            seed: 0,
            k_core: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "eval_defaults::ks")]
    pub ks: Vec<usize>,
}

mod eval_defaults {
    pub fn ks() -> Vec<usize> {
        vec![10, 20]
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { ks: eval_defaults::ks() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub split: SplitConfig,
    pub backbone: BackboneConfig,
    pub loss: LossSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    pub output: OutputConfig,
}

/// A parsed config file: one run, or several when `[grid]` is present.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSet {
    pub runs: Vec<GridRun>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRun {
    /// `key=value` pairs of this grid point; empty without a grid.
    pub label: String,
    pub config: RunConfig,
}

impl RunConfig {
    /// Every violated constraint across all sections.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let sources = [
            self.data.input.is_some(),
            self.data.split_dir.is_some(),
            self.data.synthetic.is_some(),
        ];
        match sources.iter().filter(|s| **s).count() {
            0 => errs.push("data: one of `input`, `split_dir` or `synthetic` is required".into()),
            1 => {}
            _ => errs.push("data: `input`, `split_dir` and `synthetic` are mutually exclusive".into()),
        }
        let s = &self.split;
        if !(s.train_frac > 0.0 && s.train_frac <= 1.0) {
            errs.push(format!("split.train_frac must lie in (0, 1] (got {})", s.train_frac));
        }
        if !(0.0..1.0).contains(&s.val_frac) {
            errs.push(format!("split.val_frac must lie in [0, 1) (got {})", s.val_frac));
        }
        if !(0.0..1.0).contains(&s.test_frac) {
            errs.push(format!("split.test_frac must lie in [0, 1) (got {})", s.test_frac));
        }
        errs.extend(self.backbone.validate());
        errs.extend(self.loss.validate());
        errs.extend(self.train.validate());
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            errs.push("eval.ks must be a nonempty list of positive cutoffs".into());
        }
        if self.split.kind != SplitKind::Noise && self.train.noise.ratio > 0.0 {
            errs.push("train.noise.ratio > 0 requires split.kind = \"noise\"".into());
        }
        errs
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("plain data");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    /// Loads the interactions named in `data` and splits them as configured.
    pub fn load_split(&self) -> Result<DatasetSplit, ConfigError> {
        if let Some(dir) = &self.data.split_dir {
            let mut split = dataio::read_split(dir)?;
            if self.split.kind == SplitKind::Noise {
                split = split.into_noise();
            }
            return Ok(split);
        }
        let mut log = if let Some(path) = &self.data.input {
            dataio::read_interactions(path)?
        } else if let Some(b) = &self.data.synthetic {
            dataio::synthetic::block_dataset(b, self.data.synthetic_seed)
        } else {
            return Err(ConfigError::Invalid(vec!["data: no source configured".into()]));
        };
        if let Some(k) = self.split.k_core {
            log = dataio::k_core(&log, k);
        }
        let s = &self.split;
        Ok(match s.kind {
            SplitKind::Iid => dataio::split_iid(&log, s.train_frac, s.val_frac, s.seed)?,
            SplitKind::Noise => dataio::split_iid(&log, s.train_frac, s.val_frac, s.seed)?.into_noise(),
            SplitKind::Temporal => dataio::split_temporal(&log, s.test_frac, s.val_frac)?,
        })
    }
}

fn parse_scalar(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Sets `path` (dotted) in `root`, creating tables as needed.
fn set_path(root: &mut Table, path: &[&str], value: Value) -> Result<(), ConfigError> {
    let (last, parents) = path.split_last().expect("nonempty path");
    let mut cur = root;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Schema(format!("`{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Resolves `DRRL_TRAIN_NOISE_RATIO` to `train.noise.ratio` when
/// `train.noise` is a table and to `train.noise_ratio` otherwise.
fn env_path(root: &Table, name: &str) -> Option<Vec<String>> {
    let rest = name.strip_prefix(ENV_PREFIX)?.to_lowercase();
    let section = SECTIONS.iter().find(|s| rest.starts_with(&format!("{s}_")))?;
    let key = &rest[section.len() + 1..];
    if let Some(Value::Table(sec)) = root.get(*section) {
        for (i, _) in key.match_indices('_') {
            let (head, tail) = (&key[..i], &key[i + 1..]);
            if matches!(sec.get(head), Some(Value::Table(_))) || (head == "noise" && *section == "train") {
                return Some(vec![section.to_string(), head.to_string(), tail.to_string()]);
            }
        }
    }
    Some(vec![section.to_string(), key.to_string()])
}

fn apply_env<I: IntoIterator<Item = (String, String)>>(root: &mut Table, vars: I) -> Result<(), ConfigError> {
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (k, v) in vars {
        if let Some(path) = env_path(root, &k) {
            let refs: Vec<&str> = path.iter().map(String::as_str).collect();
            log::info!("override {} from {k}", path.join("."));
            set_path(root, &refs, parse_scalar(&v))?;
        }
    }
    Ok(())
}

/// Rewrites `loss.gamma` into `loss.gamma_star`.
fn normalize_gamma(root: &mut Table) -> Result<(), ConfigError> {
    let Some(Value::Table(loss)) = root.get_mut("loss") else {
        return Ok(());
    };
    let Some(g) = loss.remove("gamma") else {
        return Ok(());
    };
    if loss.contains_key("gamma_star") {
        return Err(ConfigError::Invalid(vec!["loss: give either `gamma` or `gamma_star`, not both".into()]));
    }
    let gamma = g
        .as_float()
        .or_else(|| g.as_integer().map(|i| i as f64))
        .ok_or_else(|| ConfigError::Invalid(vec!["loss.gamma must be a number".into()]))?;
    if !(gamma > 1.0) {
        return Err(ConfigError::Invalid(vec![format!("loss.gamma must exceed 1 (got {gamma})")]));
    }
    loss.insert("gamma_star".into(), Value::Float(gamma / (gamma - 1.0)));
    Ok(())
}

fn expand_grid(grid: &Table) -> Result<Vec<Vec<(String, Value)>>, ConfigError> {
    let mut points: Vec<Vec<(String, Value)>> = vec![Vec::new()];
    for (key, vals) in grid {
        let list = vals
            .as_array()
            .ok_or_else(|| ConfigError::Invalid(vec![format!("grid.\"{key}\" must be a list")]))?;
        if list.is_empty() {
            return Err(ConfigError::Invalid(vec![format!("grid.\"{key}\" is empty")]));
        }
        points = points
            .into_iter()
            .flat_map(|p| {
                list.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

fn to_run(mut root: Table) -> Result<RunConfig, ConfigError> {
    normalize_gamma(&mut root)?;
    let cfg: RunConfig = Value::Table(root)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Schema(e.message().to_string()))?;
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(ConfigError::Invalid(errs));
    }
    Ok(cfg)
}

/// Parses config text with the given environment.
pub fn parse_config<I>(text: &str, env: I) -> Result<ConfigSet, ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut root: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    apply_env(&mut root, env)?;
    let grid = match root.remove("grid") {
        Some(Value::Table(g)) => g,
        Some(_) => return Err(ConfigError::Schema("`grid` must be a table".into())),
        None => Table::new(),
    };
    let mut runs = Vec::new();
    for point in expand_grid(&grid)? {
        let mut t = root.clone();
        for (key, v) in &point {
            let parts: Vec<&str> = key.split('.').collect();
            set_path(&mut t, &parts, v.clone())?;
        }
        let label = point
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",");
        runs.push(GridRun {
            label,
            config: to_run(t)?,
        });
    }
    Ok(ConfigSet { runs })
}

/// Reads a config file, applying overrides from the process environment.
pub fn load_config(path: &Path) -> Result<ConfigSet, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, std::env::vars())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[data]
synthetic = {}

[backbone]
kind = "mf"
dim = 16

[loss]
kind = "drrl"
gamma = 2.0

[train]
lr = 0.01
noise = { ratio = 0.0 }

[output]
dir = "runs/x"
"#;

    fn no_env() -> Vec<(String, String)> {
        Vec::new()
    }

    #[test]
    fn parses_and_converts_gamma() {
        let set = parse_config(BASE, no_env()).unwrap();
        assert_eq!(set.runs.len(), 1);
        let c = &set.runs[0].config;
        assert_eq!(c.loss.gamma_star, 2.0);
        assert_eq!(c.data.synthetic, Some(BlockConfig::default()));
        assert_eq!(c.train.patience, 25);
    }

    #[test]
    fn round_trip() {
        let c = parse_config(BASE, no_env()).unwrap().runs.remove(0).config;
        let back = parse_config(&c.to_toml(), no_env()).unwrap().runs.remove(0).config;
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn unknown_and_missing_keys_are_named() {
        let err = parse_config(&BASE.replace("lr = 0.01", "lr = 0.01\nlearning_rate = 1"), no_env()).unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
        let err = parse_config(&BASE.replace("[output]\ndir = \"runs/x\"", ""), no_env()).unwrap_err();
        assert!(err.to_string().contains("output"), "{err}");
    }

    #[test]
    fn all_violations_reported_together() {
        let text = BASE.replace("lr = 0.01", "lr = -1.0\nbatch_size = 0").replace("dim = 16", "dim = 0");
        match parse_config(&text, no_env()).unwrap_err() {
            ConfigError::Invalid(errs) => assert!(errs.len() >= 3, "{errs:?}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn env_overrides() {
        let env = vec![
            ("DRRL_TRAIN_LR".to_string(), "0.5".to_string()),
            ("DRRL_TRAIN_NOISE_RATIO".to_string(), "0.25".to_string()),
            ("DRRL_SPLIT_KIND".to_string(), "noise".to_string()),
            ("DRRL_OUTPUT_DIR".to_string(), "elsewhere".to_string()),
            ("OTHER".to_string(), "1".to_string()),
        ];
        let c = parse_config(BASE, env).unwrap().runs.remove(0).config;
        assert_eq!(c.train.lr, 0.5);
        assert_eq!(c.train.noise.ratio, 0.25);
        assert_eq!(c.output.dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn grid_expansion() {
        let text = format!("{BASE}\n[grid]\n\"loss.gamma\" = [1.05, 1.25]\n\"train.lr\" = [0.1, 0.01, 0.001]\n");
        let set = parse_config(&text, no_env()).unwrap();
        assert_eq!(set.runs.len(), 6);
        assert!((set.runs[0].config.loss.gamma_star - 21.0).abs() < 1e-9);
        assert!(set.runs[5].label.contains("train.lr=0.001"));
    }

    #[test]
    fn synthetic_split_loads() {
        let c = parse_config(BASE, no_env()).unwrap().runs.remove(0).config;
        let split = c.load_split().unwrap();
        assert_eq!(split.num_users, 100);
    }
}
