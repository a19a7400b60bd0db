//! Embedding tables, backbone propagation and cosine scoring.
//!
//! All three backbones share one forward/backward pair: MF is the
//! zero-layer case, LightGCN averages `L` rounds of symmetric-normalized
//! neighbor aggregation, and XSimGCL additionally perturbs every layer's
//! output with a fixed-norm random vector.

mod checkpoint;
mod graph;
mod infonce;
mod propagate;
mod score;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use graph::InteractionGraph;
pub use infonce::{infonce_auxiliary, InfoNceOutput};
pub use propagate::{backward, forward, ForwardOutput, LayerGradient};
pub use score::{score, score_gradient, NormCache};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cosine score is undefined for a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("invalid backbone config: {0}")]
    Config(String),
    #[error("checkpoint {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    Mf,
    LightGcn,
    XSimGcl,
}

impl std::fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackboneKind::Mf => "mf",
            BackboneKind::LightGcn => "lightgcn",
            BackboneKind::XSimGcl => "xsimgcl",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    #[serde(default = "defaults::dim")]
    pub dim: usize,
    #[serde(default = "defaults::layers")]
    pub layers: usize,
    /// L2 norm of the per-layer XSimGCL perturbation.
    #[serde(default = "defaults::noise_eps")]
    pub noise_eps: f64,
    #[serde(default = "defaults::contrast_layer")]
    pub contrast_layer: usize,
    #[serde(default = "defaults::infonce_weight")]
    pub infonce_weight: f64,
    #[serde(default = "defaults::infonce_temperature")]
    pub infonce_temperature: f64,
}

mod defaults {
    pub fn dim() -> usize {
        64
    }
    pub fn layers() -> usize {
        2
    }
    pub fn noise_eps() -> f64 {
        0.2
    }
    pub fn contrast_layer() -> usize {
        1
    }
    pub fn infonce_weight() -> f64 {
        0.001
    }
    pub fn infonce_temperature() -> f64 {
        0.2
    }
}

impl BackboneConfig {
    pub fn new(kind: BackboneKind) -> Self {
        Self {
            kind,
            dim: defaults::dim(),
            layers: defaults::layers(),
            noise_eps: defaults::noise_eps(),
            contrast_layer: defaults::contrast_layer(),
            infonce_weight: defaults::infonce_weight(),
            infonce_temperature: defaults::infonce_temperature(),
        }
    }

    pub fn mf(dim: usize) -> Self {
        Self {
            dim,
            ..Self::new(BackboneKind::Mf)
        }
    }

    /// Propagation depth actually used (0 for MF).
    pub fn depth(&self) -> usize {
        match self.kind {
            BackboneKind::Mf => 0,
            _ => self.layers,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.dim == 0 {
            errs.push("backbone.dim must be >= 1".to_string());
        }
        if self.kind != BackboneKind::Mf && self.layers == 0 {
            errs.push("backbone.layers must be >= 1 for graph backbones".to_string());
        }
        if self.kind == BackboneKind::XSimGcl {
            if !(self.noise_eps >= 0.0) {
                errs.push(format!("backbone.noise_eps must be >= 0 (got {})", self.noise_eps));
            }
            if self.contrast_layer > self.layers {
                errs.push(format!(
                    "backbone.contrast_layer must be <= layers ({} > {})",
                    self.contrast_layer, self.layers
                ));
            }
            if !(self.infonce_temperature > 0.0) {
                errs.push(format!(
                    "backbone.infonce_temperature must be > 0 (got {})",
                    self.infonce_temperature
                ));
            }
            if !(self.infonce_weight >= 0.0) {
                errs.push(format!("backbone.infonce_weight must be >= 0 (got {})", self.infonce_weight));
            }
        }
        errs
    }
}

/// User and item vectors, one row per entity.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub users: Array2<f64>,
    pub items: Array2<f64>,
}

impl EmbeddingTable {
    pub fn new(users: Array2<f64>, items: Array2<f64>) -> Result<Self, GraphError> {
        if users.ncols() != items.ncols() {
            return Err(GraphError::Shape(format!(
                "user dim {} vs item dim {}",
                users.ncols(),
                items.ncols()
            )));
        }
        if users.ncols() == 0 {
            return Err(GraphError::Shape("embedding dimension must be >= 1".into()));
        }
        Ok(Self { users, items })
    }

    /// I.i.d. `N(0, std²)` entries.
    pub fn random<R: Rng + ?Sized>(num_users: usize, num_items: usize, dim: usize, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        let users = Array2::from_shape_simple_fn((num_users, dim), || normal.sample(rng));
        let items = Array2::from_shape_simple_fn((num_items, dim), || normal.sample(rng));
        Self { users, items }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            users: Array2::zeros(self.users.raw_dim()),
            items: Array2::zeros(self.items.raw_dim()),
        }
    }

    pub fn num_users(&self) -> usize {
        self.users.nrows()
    }

    pub fn num_items(&self) -> usize {
        self.items.nrows()
    }

    pub fn dim(&self) -> usize {
        self.users.ncols()
    }

    pub fn all_finite(&self) -> bool {
        self.users.iter().chain(self.items.iter()).all(|x| x.is_finite())
    }

    /// `self += a · other`.
    pub fn add_scaled(&mut self, a: f64, other: &EmbeddingTable) {
        self.users.scaled_add(a, &other.users);
        self.items.scaled_add(a, &other.items);
    }
}
