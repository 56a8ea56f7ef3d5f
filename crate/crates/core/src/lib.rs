//! Attribution of text-to-image generations to their source model from image
//! embeddings alone.
//!
//! - [`corpus`]: embedding records, manifests, JSONL and binary formats.
//! - [`centroid`]: nearest-centroid ranking of candidate models.
//! - [`distinguish`]: nearest-neighbour cluster purity and prompt scores.
//! - [`one_vs_rest`] and [`outlier`]: target detection with and without
//!   access to other models, reported through [`roc`].
//! - [`eval`]: held-out experiments; [`synth`]: seeded Gaussian corpora.

pub mod centroid;
pub mod corpus;
pub mod distinguish;
pub mod error;
pub mod eval;
pub mod one_vs_rest;
pub mod outlier;
pub mod rng;
pub mod roc;
pub mod synth;
pub mod vector;

pub use centroid::{
    build_clusters, predict_topk, rank_models, AttributionRanking, Metric, ModelCluster,
};
pub use corpus::{EmbeddingCorpus, GenerationRecord, RecordKey};
pub use error::{Error, Result};
pub use vector::EmbeddingVector;
