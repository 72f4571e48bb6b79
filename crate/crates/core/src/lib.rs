//! Event mining over heterogeneous information networks.
//!
//! Messages become instance nodes joined to their keywords, entities,
//! topics, users and time slots. Instances (and events) are compared with
//! KIES, a weighted sum of normalized meta-path instance counts; the path
//! weights are learned by a pairwise popularity GCN; events and evolution
//! chains are found by density clustering on `1 - KIES`, either over a static
//! corpus or slice by slice over a stream.

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod hdbscan;
pub mod hin;
pub mod ingest;
pub mod metapath;
pub mod ppgcn;
pub mod sparse;
pub mod streaming;
pub mod synth;
mod union_find;

pub use error::{Error, Result};
pub use hin::{Hin, NodeId, NodeType, Relation};
pub use metapath::{MetaPath, MetaPathSet, MetaSchema, WeightVector};
