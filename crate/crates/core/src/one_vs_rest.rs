//! Target-vs-rest detection.
//!
//! The decision score for a query is `TargetSim - BestOtherSim`: its cosine
//! similarity to the target model's centroid minus its best cosine similarity
//! to any other centroid. Larger is more target-like, and the query is
//! attributed to the target when the margin is `>= threshold`.

use rayon::prelude::*;
use serde::Serialize;

use crate::centroid::{ClusterOptions, ModelCluster};
use crate::corpus::EmbeddingCorpus;
use crate::error::{Error, Result};
use crate::eval::holdout::{prompt_holdouts, PromptHoldout};
use crate::roc::{roc_curve, OperatingPoint};
use crate::vector::{self, EmbeddingVector};

pub const DEFAULT_FPR_CAPS: [f64; 2] = [0.02, 0.05];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginScore {
    pub target_sim: f64,
    pub best_other_sim: f64,
    pub margin: f64,
}

fn centroid_cosine(query: &[f64], cluster: &ModelCluster) -> Result<f64> {
    if query.len() != cluster.dim() {
        return Err(Error::DimensionMismatch {
            context: format!("query vs centroid of {}", cluster.model_id),
            expected: cluster.dim(),
            found: query.len(),
        });
    }
    vector::cosine(query, cluster.centroid())
        .ok_or_else(|| Error::ZeroNorm(format!("query or centroid of {}", cluster.model_id)))
}

pub(crate) fn margin_dense(
    query: &[f64],
    target: &ModelCluster,
    others: &[&ModelCluster],
) -> Result<MarginScore> {
    if others.is_empty() {
        return Err(Error::invalid("one-vs-rest needs at least one other model"));
    }
    let target_sim = centroid_cosine(query, target)?;
    let mut best_other_sim = f64::NEG_INFINITY;
    for c in others {
        best_other_sim = best_other_sim.max(centroid_cosine(query, c)?);
    }
    Ok(MarginScore {
        target_sim,
        best_other_sim,
        margin: target_sim - best_other_sim,
    })
}

pub fn margin_score(
    query: &EmbeddingVector,
    target: &ModelCluster,
    others: &[ModelCluster],
) -> Result<MarginScore> {
    let others: Vec<&ModelCluster> = others.iter().collect();
    margin_dense(&query.to_f64(), target, &others)
}

/// True iff the margin is at least `threshold` (0 recovers the
/// nearest-centroid rule under cosine similarity).
pub fn classify_target(
    query: &EmbeddingVector,
    target: &ModelCluster,
    others: &[ModelCluster],
    threshold: f64,
) -> Result<bool> {
    Ok(margin_score(query, target, others)?.margin >= threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OvrConfig {
    pub split_seed: u64,
    /// References per model; `None` uses every non-held-out record.
    pub k: Option<usize>,
    pub fpr_caps: Vec<f64>,
    pub renormalize_centroid: bool,
}

impl Default for OvrConfig {
    fn default() -> Self {
        Self {
            split_seed: 0,
            k: None,
            fpr_caps: DEFAULT_FPR_CAPS.to_vec(),
            renormalize_centroid: false,
        }
    }
}

/// One row of a per-target detection table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionRow {
    pub model: String,
    pub accuracy: f64,
    pub roc_auc: f64,
    pub operating_points: Vec<OperatingPoint>,
    pub positives: usize,
    pub negatives: usize,
}

/// Builds a row from pooled scores, counting `score >= 0` as "target".
pub fn detection_row(
    model: &str,
    positive: &[f64],
    negative: &[f64],
    fpr_caps: &[f64],
) -> Result<DetectionRow> {
    let roc = roc_curve(positive, negative)?.with_operating_points(fpr_caps)?;
    let correct = positive.iter().filter(|&&s| s >= 0.0).count()
        + negative.iter().filter(|&&s| s < 0.0).count();
    Ok(DetectionRow {
        model: model.to_owned(),
        accuracy: correct as f64 / (positive.len() + negative.len()) as f64,
        roc_auc: roc.auc,
        operating_points: roc.operating_points,
        positives: positive.len(),
        negatives: negative.len(),
    })
}

/// Per-prompt margins for every (target, query model) pair:
/// `out[target][query_model]`.
fn prompt_margins(holdout: &PromptHoldout, targets: &[usize]) -> Result<Vec<Vec<f64>>> {
    let queries: Vec<Vec<f64>> = holdout
        .queries
        .iter()
        .map(|q| q.embedding.to_f64())
        .collect();
    targets
        .iter()
        .map(|&t| {
            let others: Vec<&ModelCluster> = holdout
                .clusters
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != t)
                .map(|(_, c)| c)
                .collect();
            queries
                .iter()
                .map(|q| Ok(margin_dense(q, &holdout.clusters[t], &others)?.margin))
                .collect()
        })
        .collect()
}

/// One row per target. Each prompt holds out one generation per model; the
/// target's query is a positive and every other model's query a negative.
/// Scores are pooled over prompts.
pub fn ovr_sweep(
    corpus: &EmbeddingCorpus,
    targets: &[String],
    config: &OvrConfig,
) -> Result<Vec<DetectionRow>> {
    if corpus.model_ids().len() < 2 {
        return Err(Error::invalid("one-vs-rest needs at least two models"));
    }
    let target_idx = targets
        .iter()
        .map(|t| {
            corpus
                .model_ids()
                .iter()
                .position(|m| m == t)
                .ok_or_else(|| Error::UnknownModel(t.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let options = ClusterOptions {
        k: config.k,
        sampling_seed: config.split_seed,
        renormalize: config.renormalize_centroid,
    };

    let per_prompt = corpus
        .prompt_ids()
        .par_iter()
        .map(|p| {
            let holdout = prompt_holdouts(corpus, p, config.split_seed, &options)?;
            prompt_margins(&holdout, &target_idx)
        })
        .collect::<Result<Vec<_>>>()?;

    target_idx
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let mut positive = Vec::new();
            let mut negative = Vec::new();
            for margins in &per_prompt {
                for (m, &score) in margins[ti].iter().enumerate() {
                    if m == t {
                        positive.push(score);
                    } else {
                        negative.push(score);
                    }
                }
            }
            detection_row(
                &corpus.model_ids()[t],
                &positive,
                &negative,
                &config.fpr_caps,
            )
        })
        .collect()
}

pub fn fixed_target_sweep(
    corpus: &EmbeddingCorpus,
    target_model: &str,
    config: &OvrConfig,
) -> Result<DetectionRow> {
    if !corpus.has_model(target_model) {
        return Err(Error::UnknownModel(target_model.to_owned()));
    }
    let mut rows = ovr_sweep(corpus, &[target_model.to_owned()], config)?;
    Ok(rows.remove(0))
}
