//! Robust collaborative-filtering losses and their certification tooling.
//!
//! The crate covers the full path from an interaction log to a trained
//! embedding model: [`dataio`] builds splits and samples negatives,
//! [`graphmodel`] holds embeddings and the MF / LightGCN / XSimGCL
//! propagation, [`losses`] evaluates every loss with analytic score
//! gradients, [`trainer`] runs the mini-batch loop, and [`metrics`] scores
//! rankings. [`dro`] is an independent numerical toolkit that solves the
//! divergence-constrained inner maximization by brute force and checks the
//! closed-form duals the DrRL loss is built on.

pub mod cli;
pub mod config;
pub mod dataio;
pub mod dro;
mod fsutil;
pub mod graphmodel;
pub mod losses;
pub mod metrics;
pub mod rng;
pub mod trainer;
