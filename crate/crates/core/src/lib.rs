//! Influence self-attention embeddings for heterogeneous graphs.
//!
//! Per meta-path, node-level attention scores each neighbor with an added
//! influence term from the source node; a self-attention step across
//! meta-paths then weights and sums the per-path embeddings.

pub mod attention;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod fusion;
pub mod hetgraph;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::ModelError;
