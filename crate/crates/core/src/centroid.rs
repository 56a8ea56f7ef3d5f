//! Nearest-centroid attribution.
//!
//! For one prompt, each candidate model contributes `k` embeddings of its own
//! generations; their mean is the model's centroid. A query embedding is
//! attributed to the model whose centroid is closest.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingCorpus, GenerationRecord, RecordKey};
use crate::error::{Error, Result};
use crate::rng;
use crate::vector::{self, EmbeddingVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// L2 distance to the centroid.
    #[default]
    Euclidean,
    /// `1 - cos(query, centroid)`.
    Cosine,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::invalid(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCluster {
    pub prompt_id: String,
    pub model_id: String,
    embeddings: Vec<EmbeddingVector>,
    centroid: Vec<f64>,
}

impl ModelCluster {
    /// Computes the centroid as the plain component-wise mean, optionally
    /// rescaled to unit norm.
    pub fn new(
        prompt_id: impl Into<String>,
        model_id: impl Into<String>,
        embeddings: Vec<EmbeddingVector>,
        renormalize: bool,
    ) -> Result<Self> {
        let prompt_id = prompt_id.into();
        let model_id = model_id.into();
        let first = embeddings
            .first()
            .ok_or_else(|| Error::InsufficientRecords {
                prompt_id: prompt_id.clone(),
                model_id: model_id.clone(),
                needed: 1,
                available: 0,
            })?;
        let dim = first.dim();
        if let Some(e) = embeddings.iter().find(|e| e.dim() != dim) {
            return Err(Error::DimensionMismatch {
                context: format!("cluster ({prompt_id}, {model_id})"),
                expected: dim,
                found: e.dim(),
            });
        }
        let mut centroid =
            vector::mean(embeddings.iter().map(EmbeddingVector::as_slice), dim).expect("non-empty");
        if renormalize {
            centroid = vector::normalize(&centroid)
                .ok_or_else(|| Error::ZeroNorm(format!("centroid of ({prompt_id}, {model_id})")))?;
        }
        Ok(Self {
            prompt_id,
            model_id,
            embeddings,
            centroid,
        })
    }

    pub fn from_records(records: &[&GenerationRecord], renormalize: bool) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::invalid("cluster needs at least one record"))?;
        Self::new(
            first.prompt_id.clone(),
            first.model_id.clone(),
            records.iter().map(|r| r.embedding.clone()).collect(),
            renormalize,
        )
    }

    pub fn k(&self) -> usize {
        self.embeddings.len()
    }

    pub fn dim(&self) -> usize {
        self.centroid.len()
    }

    pub fn embeddings(&self) -> &[EmbeddingVector] {
        &self.embeddings
    }

    pub fn centroid(&self) -> &[f64] {
        &self.centroid
    }
}

#[derive(Debug, Clone, Default)]
pub struct ClusterOptions {
    /// Number of generations per model; `None` uses every record.
    pub k: Option<usize>,
    pub sampling_seed: u64,
    pub renormalize: bool,
}

/// Picks `k` of `items` uniformly without replacement, keeping their original
/// order. Deterministic in `(seed, labels)`.
pub fn subsample<'a, T>(items: &'a [T], k: usize, seed: u64, labels: &[&str]) -> Vec<&'a T> {
    if k >= items.len() {
        return items.iter().collect();
    }
    let mut rng = rng::stream_rng(seed, rng::stream_id(labels));
    let mut picked = index::sample(&mut rng, items.len(), k).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| &items[i]).collect()
}

/// One cluster per corpus model (manifest order) for `prompt_id`.
pub fn build_clusters(
    corpus: &EmbeddingCorpus,
    prompt_id: &str,
    k: Option<usize>,
    sampling_seed: Option<u64>,
) -> Result<Vec<ModelCluster>> {
    let options = ClusterOptions {
        k,
        sampling_seed: sampling_seed.unwrap_or(0),
        renormalize: false,
    };
    build_clusters_with(corpus, prompt_id, &options, None)
}

/// Like [`build_clusters`], skipping the record `exclude` if given.
pub fn build_clusters_with(
    corpus: &EmbeddingCorpus,
    prompt_id: &str,
    options: &ClusterOptions,
    exclude: Option<&RecordKey>,
) -> Result<Vec<ModelCluster>> {
    if !corpus.has_prompt(prompt_id) {
        return Err(Error::UnknownPrompt(prompt_id.to_owned()));
    }
    if options.k == Some(0) {
        return Err(Error::invalid("k must be positive"));
    }
    corpus
        .model_ids()
        .iter()
        .map(|model_id| {
            let mut cell = corpus.cell(prompt_id, model_id);
            if let Some(key) = exclude {
                cell.retain(|r| {
                    r.prompt_id != key.prompt_id || r.model_id != key.model_id || r.seed != key.seed
                });
            }
            let needed = options.k.unwrap_or(1);
            if cell.len() < needed {
                return Err(Error::InsufficientRecords {
                    prompt_id: prompt_id.to_owned(),
                    model_id: model_id.clone(),
                    needed,
                    available: cell.len(),
                });
            }
            let chosen: Vec<&GenerationRecord> = match options.k {
                Some(k) => subsample(&cell, k, options.sampling_seed, &[prompt_id, model_id])
                    .into_iter()
                    .copied()
                    .collect(),
                None => cell,
            };
            ModelCluster::from_records(&chosen, options.renormalize)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankEntry {
    pub model_id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributionRanking {
    pub query_key: Option<RecordKey>,
    pub prompt_id: String,
    pub metric: Metric,
    /// Ascending by distance, ties by model id.
    pub entries: Vec<RankEntry>,
    pub predicted: String,
}

impl AttributionRanking {
    pub fn with_query_key(mut self, key: RecordKey) -> Self {
        self.query_key = Some(key);
        self
    }

    /// Zero-based position of `model_id`, if it is a candidate.
    pub fn position(&self, model_id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.model_id == model_id)
    }

    pub fn top(&self, n: usize) -> Vec<&str> {
        self.entries
            .iter()
            .take(n)
            .map(|e| e.model_id.as_str())
            .collect()
    }
}

fn check_clusters(clusters: &[ModelCluster], dim: usize) -> Result<()> {
    let first = clusters
        .first()
        .ok_or_else(|| Error::invalid("no candidate clusters"))?;
    let mut seen = HashSet::new();
    for c in clusters {
        if c.prompt_id != first.prompt_id {
            return Err(Error::invalid(format!(
                "clusters span prompts {:?} and {:?}",
                first.prompt_id, c.prompt_id
            )));
        }
        if c.dim() != dim {
            return Err(Error::DimensionMismatch {
                context: format!("centroid of {}", c.model_id),
                expected: dim,
                found: c.dim(),
            });
        }
        if !seen.insert(c.model_id.as_str()) {
            return Err(Error::invalid(format!(
                "model {:?} appears twice",
                c.model_id
            )));
        }
    }
    Ok(())
}

/// Distance from `query` to every centroid, ranked ascending.
pub fn rank_models(
    query: &EmbeddingVector,
    clusters: &[ModelCluster],
    metric: Metric,
) -> Result<AttributionRanking> {
    rank_dense(&query.to_f64(), clusters, metric)
}

pub(crate) fn rank_dense(
    query: &[f64],
    clusters: &[ModelCluster],
    metric: Metric,
) -> Result<AttributionRanking> {
    check_clusters(clusters, query.len())?;
    let mut entries = clusters
        .iter()
        .map(|c| {
            let distance = match metric {
                Metric::Euclidean => vector::euclidean(query, c.centroid()),
                Metric::Cosine => {
                    1.0 - vector::cosine(query, c.centroid()).ok_or_else(|| {
                        Error::ZeroNorm(format!("query or centroid of {}", c.model_id))
                    })?
                }
            };
            Ok(RankEntry {
                model_id: c.model_id.clone(),
                distance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
    Ok(AttributionRanking {
        query_key: None,
        prompt_id: clusters[0].prompt_id.clone(),
        metric,
        predicted: entries[0].model_id.clone(),
        entries,
    })
}

/// The `k_rank` closest models.
pub fn predict_topk(
    query: &EmbeddingVector,
    clusters: &[ModelCluster],
    k_rank: usize,
    metric: Metric,
) -> Result<Vec<String>> {
    if k_rank == 0 || k_rank > clusters.len() {
        return Err(Error::invalid(format!(
            "k_rank {k_rank} outside 1..={}",
            clusters.len()
        )));
    }
    let ranking = rank_models(query, clusters, metric)?;
    Ok(ranking
        .entries
        .into_iter()
        .take(k_rank)
        .map(|e| e.model_id)
        .collect())
}
