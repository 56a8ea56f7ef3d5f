//! Held-out queries. Each (prompt, model) cell gives up one generation as the
//! query; the rest are references, and the query never enters a centroid.

use rand::Rng;

use crate::centroid::{subsample, ClusterOptions, ModelCluster};
use crate::corpus::{EmbeddingCorpus, GenerationRecord};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone)]
pub struct Holdout<'a> {
    pub query: &'a GenerationRecord,
    pub references: Vec<&'a GenerationRecord>,
}

pub fn holdout_split<'a>(
    corpus: &'a EmbeddingCorpus,
    prompt_id: &str,
    model_id: &str,
    split_seed: u64,
) -> Result<Holdout<'a>> {
    if !corpus.has_prompt(prompt_id) {
        return Err(Error::UnknownPrompt(prompt_id.to_owned()));
    }
    if !corpus.has_model(model_id) {
        return Err(Error::UnknownModel(model_id.to_owned()));
    }
    let mut references = corpus.cell(prompt_id, model_id);
    if references.len() < 2 {
        return Err(Error::InsufficientRecords {
            prompt_id: prompt_id.to_owned(),
            model_id: model_id.to_owned(),
            needed: 2,
            available: references.len(),
        });
    }
    let mut rng = rng::stream_rng(
        split_seed,
        rng::stream_id(&["holdout", prompt_id, model_id]),
    );
    let pick = rng.random_range(0..references.len());
    let query = references.remove(pick);
    Ok(Holdout { query, references })
}

/// Queries and reference clusters for every model of one prompt, in
/// manifest order.
#[derive(Debug, Clone)]
pub struct PromptHoldout<'a> {
    pub prompt_id: String,
    pub queries: Vec<&'a GenerationRecord>,
    pub clusters: Vec<ModelCluster>,
}

/// Splits every cell of `prompt_id`; references are subsampled to
/// `options.k` with `options.sampling_seed`.
pub fn prompt_holdouts<'a>(
    corpus: &'a EmbeddingCorpus,
    prompt_id: &str,
    split_seed: u64,
    options: &ClusterOptions,
) -> Result<PromptHoldout<'a>> {
    let mut queries = Vec::with_capacity(corpus.model_ids().len());
    let mut clusters = Vec::with_capacity(corpus.model_ids().len());
    for model_id in corpus.model_ids() {
        let split = holdout_split(corpus, prompt_id, model_id, split_seed)?;
        let refs: Vec<&GenerationRecord> = match options.k {
            Some(k) if k > split.references.len() => {
                return Err(Error::InsufficientRecords {
                    prompt_id: prompt_id.to_owned(),
                    model_id: model_id.clone(),
                    needed: k + 1,
                    available: split.references.len() + 1,
                })
            }
            Some(k) => subsample(
                &split.references,
                k,
                options.sampling_seed,
                &[prompt_id, model_id],
            )
            .into_iter()
            .copied()
            .collect(),
            None => split.references,
        };
        clusters.push(ModelCluster::from_records(&refs, options.renormalize)?);
        queries.push(split.query);
    }
    Ok(PromptHoldout {
        prompt_id: prompt_id.to_owned(),
        queries,
        clusters,
    })
}
