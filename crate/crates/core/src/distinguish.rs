//! Prompt distinguishability.
//!
//! For every embedding of a prompt, find its nearest neighbour among all
//! other embeddings of that prompt (any model, the point itself excluded).
//! `frac(model)` is the share of the model's points whose nearest neighbour
//! belongs to the same model. A model is separable when `frac > tau`, and the
//! prompt's score is the share of separable models.
//!
//! When several points sit at the minimum distance, the point counts as a hit
//! if any of them shares its model.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::centroid::{build_clusters, ModelCluster};
use crate::corpus::EmbeddingCorpus;
use crate::error::{Error, Result};
use crate::vector;

pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparabilityReport {
    pub prompt_id: String,
    pub tau: f64,
    pub per_model_frac: BTreeMap<String, f64>,
    pub separable: BTreeMap<String, bool>,
    pub separable_count: usize,
    pub n_models: usize,
    pub score: f64,
}

/// Intra-model nearest-neighbour hits per cluster, in cluster order.
pub fn nn_hits(clusters: &[ModelCluster]) -> Result<Vec<usize>> {
    let first = clusters
        .first()
        .ok_or_else(|| Error::invalid("no clusters"))?;
    let dim = first.dim();
    let mut seen = HashSet::new();
    for c in clusters {
        if c.dim() != dim {
            return Err(Error::DimensionMismatch {
                context: format!("cluster {}", c.model_id),
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

    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (label, c) in clusters.iter().enumerate() {
        for e in c.embeddings() {
            points.push(e.to_f64());
            labels.push(label);
        }
    }
    let n = points.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "nearest neighbours need at least 2 points, got {n}"
        )));
    }

    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = vector::squared_euclidean(&points[i], &points[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    let mut hits = vec![0usize; clusters.len()];
    for i in 0..n {
        let row = &dist[i * n..(i + 1) * n];
        let mut best = f64::INFINITY;
        let mut same = false;
        for (j, &d) in row.iter().enumerate() {
            if j == i {
                continue;
            }
            if d < best {
                best = d;
                same = labels[j] == labels[i];
            } else if d == best && labels[j] == labels[i] {
                same = true;
            }
        }
        if same {
            hits[labels[i]] += 1;
        }
    }
    Ok(hits)
}

/// `frac(model)` for each cluster's model.
pub fn nn_purity(clusters: &[ModelCluster]) -> Result<BTreeMap<String, f64>> {
    let hits = nn_hits(clusters)?;
    Ok(clusters
        .iter()
        .zip(hits)
        .map(|(c, h)| (c.model_id.clone(), h as f64 / c.k() as f64))
        .collect())
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("tau must lie in (0, 1), got {tau}")))
    }
}

/// Score for one prompt from precomputed fractions.
pub fn score_fracs(
    prompt_id: impl Into<String>,
    per_model_frac: BTreeMap<String, f64>,
    tau: f64,
) -> Result<SeparabilityReport> {
    check_tau(tau)?;
    if per_model_frac.is_empty() {
        return Err(Error::invalid("no models to score"));
    }
    let separable: BTreeMap<String, bool> = per_model_frac
        .iter()
        .map(|(m, &f)| (m.clone(), f > tau))
        .collect();
    let separable_count = separable.values().filter(|&&s| s).count();
    let n_models = per_model_frac.len();
    Ok(SeparabilityReport {
        prompt_id: prompt_id.into(),
        tau,
        per_model_frac,
        separable,
        separable_count,
        n_models,
        score: separable_count as f64 / n_models as f64,
    })
}

pub fn prompt_distinguishability(
    clusters: &[ModelCluster],
    tau: f64,
) -> Result<SeparabilityReport> {
    check_tau(tau)?;
    let fracs = nn_purity(clusters)?;
    score_fracs(clusters[0].prompt_id.clone(), fracs, tau)
}

/// Reports for every prompt, highest score first, ties by prompt id.
pub fn rank_prompts(corpus: &EmbeddingCorpus, tau: f64) -> Result<Vec<SeparabilityReport>> {
    check_tau(tau)?;
    let mut reports = corpus
        .prompt_ids()
        .par_iter()
        .map(|p| {
            let clusters = build_clusters(corpus, p, None, None)?;
            prompt_distinguishability(&clusters, tau)
        })
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.prompt_id.cmp(&b.prompt_id))
    });
    Ok(reports)
}
