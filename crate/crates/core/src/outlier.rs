//! Target-only detection.
//!
//! With access to nothing but the target model's own generations, fit a unit
//! centroid `c` and the similarities `s_i = cos(x_i, c)` of the fit set. The
//! acceptance threshold is `SimThresh = 1 - quantile_q(1 - s_i)` and a query
//! `z` scores `cos(z, c) - SimThresh`; non-negative scores are accepted.
//!
//! Quantiles interpolate linearly between order statistics at position
//! `q * (n - 1)` of the ascending sample.

use rayon::prelude::*;
use serde::Serialize;

use crate::centroid::{subsample, ClusterOptions};
use crate::corpus::EmbeddingCorpus;
use crate::error::{Error, Result};
use crate::eval::holdout::prompt_holdouts;
use crate::one_vs_rest::{detection_row, DetectionRow, DEFAULT_FPR_CAPS};
use crate::vector::{self, EmbeddingVector};

pub const DEFAULT_QUANTILE: f64 = 0.8;
pub const DEFAULT_FIT_SIZE: usize = 30;

/// Linear-interpolation quantile of `values` (need not be sorted).
pub fn linear_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("quantile level {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// `1 - quantile_q(1 - s_i)`, evaluated on the similarities sorted
/// descending so that no `1 - (1 - s)` round trip can push a fit point below
/// its own threshold. The `floor(q (n - 1)) + 1` most similar fit points always
/// score `>= 0`.
pub fn sim_threshold(similarities: &[f64], quantile: f64) -> Result<f64> {
    if similarities.is_empty() {
        return Err(Error::invalid("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::invalid(format!(
            "quantile level {quantile} outside [0, 1]"
        )));
    }
    let mut sorted = similarities.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let pos = quantile * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierDetector {
    centroid: Vec<f64>,
    sim_thresh: f64,
    quantile: f64,
    fit_similarities: Vec<f64>,
}

impl OutlierDetector {
    pub fn fit(embeddings: &[EmbeddingVector], quantile: f64) -> Result<Self> {
        if !(quantile > 0.0 && quantile < 1.0) {
            return Err(Error::invalid(format!(
                "quantile must lie in (0, 1), got {quantile}"
            )));
        }
        if embeddings.len() < 2 {
            return Err(Error::invalid(format!(
                "outlier detector needs at least 2 embeddings, got {}",
                embeddings.len()
            )));
        }
        let dim = embeddings[0].dim();
        if let Some(e) = embeddings.iter().find(|e| e.dim() != dim) {
            return Err(Error::DimensionMismatch {
                context: "fit set".into(),
                expected: dim,
                found: e.dim(),
            });
        }
        let mean =
            vector::mean(embeddings.iter().map(EmbeddingVector::as_slice), dim).expect("non-empty");
        let centroid =
            vector::normalize(&mean).ok_or_else(|| Error::ZeroNorm("mean of fit set".into()))?;
        let fit_similarities = embeddings
            .iter()
            .map(|e| {
                vector::cosine(&e.to_f64(), &centroid)
                    .ok_or_else(|| Error::ZeroNorm("embedding in fit set".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        let sim_thresh = sim_threshold(&fit_similarities, quantile)?;
        Ok(Self {
            centroid,
            sim_thresh,
            quantile,
            fit_similarities,
        })
    }

    pub fn centroid(&self) -> &[f64] {
        &self.centroid
    }

    pub fn sim_thresh(&self) -> f64 {
        self.sim_thresh
    }

    pub fn quantile(&self) -> f64 {
        self.quantile
    }

    pub fn fit_similarities(&self) -> &[f64] {
        &self.fit_similarities
    }

    /// `cos(query, centroid) - sim_thresh`.
    pub fn score(&self, query: &EmbeddingVector) -> Result<f64> {
        self.score_dense(&query.to_f64())
    }

    pub(crate) fn score_dense(&self, query: &[f64]) -> Result<f64> {
        if query.len() != self.centroid.len() {
            return Err(Error::DimensionMismatch {
                context: "query vs detector".into(),
                expected: self.centroid.len(),
                found: query.len(),
            });
        }
        let sim =
            vector::cosine(query, &self.centroid).ok_or_else(|| Error::ZeroNorm("query".into()))?;
        Ok(sim - self.sim_thresh)
    }

    pub fn detect(&self, query: &EmbeddingVector) -> Result<bool> {
        Ok(self.score(query)? >= 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierConfig {
    pub split_seed: u64,
    /// At most this many target references are fitted (all when fewer).
    pub fit_size: Option<usize>,
    pub quantile: f64,
    pub fpr_caps: Vec<f64>,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        Self {
            split_seed: 0,
            fit_size: Some(DEFAULT_FIT_SIZE),
            quantile: DEFAULT_QUANTILE,
            fpr_caps: DEFAULT_FPR_CAPS.to_vec(),
        }
    }
}

/// Per-target rows: on every prompt the detector is fitted on the target's
/// references, the target's held-out query is a positive and every other
/// model's held-out query a negative. Held-out queries match
/// [`crate::one_vs_rest::ovr_sweep`] for the same split seed.
pub fn outlier_sweep(
    corpus: &EmbeddingCorpus,
    targets: &[String],
    config: &OutlierConfig,
) -> Result<Vec<DetectionRow>> {
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
    if corpus.model_ids().len() < 2 {
        return Err(Error::invalid("detection sweep needs at least two models"));
    }
    let options = ClusterOptions::default();

    let per_prompt: Vec<Vec<Vec<f64>>> = corpus
        .prompt_ids()
        .par_iter()
        .map(|p| {
            let holdout = prompt_holdouts(corpus, p, config.split_seed, &options)?;
            let queries: Vec<Vec<f64>> = holdout
                .queries
                .iter()
                .map(|q| q.embedding.to_f64())
                .collect();
            target_idx
                .iter()
                .map(|&t| {
                    let refs = holdout.clusters[t].embeddings();
                    let fit: Vec<EmbeddingVector> = match config.fit_size {
                        Some(n) => subsample(
                            refs,
                            n,
                            config.split_seed,
                            &["fit", p, &corpus.model_ids()[t]],
                        )
                        .into_iter()
                        .cloned()
                        .collect(),
                        None => refs.to_vec(),
                    };
                    let detector = OutlierDetector::fit(&fit, config.quantile)?;
                    queries.iter().map(|q| detector.score_dense(q)).collect()
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    target_idx
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let mut positive = Vec::new();
            let mut negative = Vec::new();
            for scores in &per_prompt {
                for (m, &s) in scores[ti].iter().enumerate() {
                    if m == t {
                        positive.push(s);
                    } else {
                        negative.push(s);
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
