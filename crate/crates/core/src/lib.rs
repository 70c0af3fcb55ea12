//! Graph-aware terminology definition generation.
//!
//! The pipeline ingests OBO ontologies into per-graph DAGs, learns graph
//! propagation embeddings from random walks, fuses them into a transformer
//! that writes definitions, and scores the result against graph-free
//! baselines.

pub mod analysis;
pub mod baselines;
pub mod dag;
pub mod downstream;
pub mod error;
pub mod metrics;
pub mod models;
pub mod obo;
pub mod pipeline;
pub mod stage1;
pub mod stage2;
pub mod stats;
pub mod synthetic;
pub mod text;

pub use error::{Error, Result};
