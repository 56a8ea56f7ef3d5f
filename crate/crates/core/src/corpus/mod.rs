//! Embedding corpora: records keyed by (prompt, model, seed), a manifest
//! describing them, and an index over (prompt, model) cells.
//!
//! A corpus is immutable once built. Operations that change embeddings, such
//! as [`EmbeddingCorpus::normalize`], return a new corpus.

mod binary;
mod jsonl;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::EmbeddingVector;

pub use binary::{load_binary, write_binary, FORMAT_VERSION, MAGIC};
pub use jsonl::{load_jsonl, manifest_sidecar_path, write_jsonl};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordKey {
    pub prompt_id: String,
    pub model_id: String,
    pub seed: i64,
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.prompt_id, self.model_id, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub prompt_id: String,
    pub model_id: String,
    pub seed: i64,
    pub embedding: EmbeddingVector,
}

impl GenerationRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            prompt_id: self.prompt_id.clone(),
            model_id: self.model_id.clone(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub encoder_name: String,
    pub dim: usize,
    pub model_ids: Vec<String>,
    pub prompt_ids: Vec<String>,
    pub normalized: bool,
    pub created_at: DateTime<Utc>,
}

impl CorpusManifest {
    /// Infers a manifest from records: ids in order of first appearance.
    pub fn infer(
        records: &[GenerationRecord],
        encoder_name: impl Into<String>,
        created_at: DateTime<Utc>,
    ) -> Result<Self> {
        let first = records.first().ok_or(Error::EmptyCorpus)?;
        let mut model_ids = Vec::new();
        let mut prompt_ids = Vec::new();
        let mut seen_models = HashSet::new();
        let mut seen_prompts = HashSet::new();
        for r in records {
            if seen_models.insert(r.model_id.as_str()) {
                model_ids.push(r.model_id.clone());
            }
            if seen_prompts.insert(r.prompt_id.as_str()) {
                prompt_ids.push(r.prompt_id.clone());
            }
        }
        Ok(Self {
            encoder_name: encoder_name.into(),
            dim: first.embedding.dim(),
            model_ids,
            prompt_ids,
            normalized: records.iter().all(|r| r.embedding.is_unit()),
            created_at,
        })
    }
}

/// Validated, indexed collection of generation records.
#[derive(Debug, Clone)]
pub struct EmbeddingCorpus {
    records: Vec<GenerationRecord>,
    manifest: CorpusManifest,
    index: BTreeMap<(String, String), Vec<usize>>,
}

impl PartialEq for EmbeddingCorpus {
    fn eq(&self, other: &Self) -> bool {
        self.manifest == other.manifest && self.records == other.records
    }
}

impl EmbeddingCorpus {
    /// Validates `records` against `manifest` and builds the cell index.
    pub fn new(records: Vec<GenerationRecord>, manifest: CorpusManifest) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if manifest.dim == 0 {
            return Err(Error::Manifest("dim must be positive".into()));
        }
        check_unique("model_ids", &manifest.model_ids)?;
        check_unique("prompt_ids", &manifest.prompt_ids)?;

        let models: HashSet<&str> = manifest.model_ids.iter().map(String::as_str).collect();
        let prompts: HashSet<&str> = manifest.prompt_ids.iter().map(String::as_str).collect();
        let mut used_models = HashSet::new();
        let mut used_prompts = HashSet::new();
        let mut keys = HashSet::with_capacity(records.len());
        let mut index: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();

        for (i, r) in records.iter().enumerate() {
            if r.embedding.dim() != manifest.dim {
                return Err(Error::DimensionMismatch {
                    context: format!("record {}", r.key()),
                    expected: manifest.dim,
                    found: r.embedding.dim(),
                });
            }
            if !models.contains(r.model_id.as_str()) {
                return Err(Error::Manifest(format!(
                    "model_ids does not list {:?}",
                    r.model_id
                )));
            }
            if !prompts.contains(r.prompt_id.as_str()) {
                return Err(Error::Manifest(format!(
                    "prompt_ids does not list {:?}",
                    r.prompt_id
                )));
            }
            if !keys.insert((r.prompt_id.as_str(), r.model_id.as_str(), r.seed)) {
                return Err(Error::DuplicateRecord {
                    context: format!("record {i}"),
                    key: r.key(),
                });
            }
            used_models.insert(r.model_id.as_str());
            used_prompts.insert(r.prompt_id.as_str());
            index
                .entry((r.prompt_id.clone(), r.model_id.clone()))
                .or_default()
                .push(i);
        }
        if let Some(m) = manifest
            .model_ids
            .iter()
            .find(|m| !used_models.contains(m.as_str()))
        {
            return Err(Error::Manifest(format!("model {m:?} has no records")));
        }
        if let Some(p) = manifest
            .prompt_ids
            .iter()
            .find(|p| !used_prompts.contains(p.as_str()))
        {
            return Err(Error::Manifest(format!("prompt {p:?} has no records")));
        }
        if manifest.normalized {
            if let Some(r) = records.iter().find(|r| !r.embedding.is_unit()) {
                return Err(Error::Manifest(format!(
                    "flagged normalized but record {} has norm {}",
                    r.key(),
                    r.embedding.norm()
                )));
            }
        }

        Ok(Self {
            records,
            manifest,
            index,
        })
    }

    /// Builds a corpus with an inferred manifest.
    pub fn from_records(
        records: Vec<GenerationRecord>,
        encoder_name: impl Into<String>,
        created_at: DateTime<Utc>,
    ) -> Result<Self> {
        if let Some(first) = records.first() {
            let dim = first.embedding.dim();
            if let Some(r) = records.iter().find(|r| r.embedding.dim() != dim) {
                return Err(Error::DimensionMismatch {
                    context: format!("record {}", r.key()),
                    expected: dim,
                    found: r.embedding.dim(),
                });
            }
        }
        let manifest = CorpusManifest::infer(&records, encoder_name, created_at)?;
        Self::new(records, manifest)
    }

    pub fn records(&self) -> &[GenerationRecord] {
        &self.records
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn dim(&self) -> usize {
        self.manifest.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.manifest.normalized
    }

    pub fn model_ids(&self) -> &[String] {
        &self.manifest.model_ids
    }

    pub fn prompt_ids(&self) -> &[String] {
        &self.manifest.prompt_ids
    }

    pub fn has_prompt(&self, prompt_id: &str) -> bool {
        self.manifest.prompt_ids.iter().any(|p| p == prompt_id)
    }

    pub fn has_model(&self, model_id: &str) -> bool {
        self.manifest.model_ids.iter().any(|m| m == model_id)
    }

    /// Records of one (prompt, model) cell, in corpus order.
    pub fn cell(&self, prompt_id: &str, model_id: &str) -> Vec<&GenerationRecord> {
        self.index
            .get(&(prompt_id.to_owned(), model_id.to_owned()))
            .map(|ids| ids.iter().map(|&i| &self.records[i]).collect())
            .unwrap_or_default()
    }

    /// Iterates over the non-empty cells as ((prompt, model), record indices).
    pub fn cells(&self) -> impl Iterator<Item = (&(String, String), &[usize])> {
        self.index.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn get(&self, key: &RecordKey) -> Option<&GenerationRecord> {
        self.index
            .get(&(key.prompt_id.clone(), key.model_id.clone()))?
            .iter()
            .map(|&i| &self.records[i])
            .find(|r| r.seed == key.seed)
    }

    /// Returns a copy with every embedding scaled to unit L2 norm.
    pub fn normalize(&self) -> Result<Self> {
        let records = self
            .records
            .iter()
            .map(|r| {
                let embedding = r
                    .embedding
                    .normalized()
                    .ok_or_else(|| Error::ZeroNorm(format!("record {}", r.key())))?;
                Ok(GenerationRecord {
                    embedding,
                    ..r.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = CorpusManifest {
            normalized: true,
            ..self.manifest.clone()
        };
        Self::new(records, manifest)
    }

    pub fn with_manifest(&self, manifest: CorpusManifest) -> Result<Self> {
        Self::new(self.records.clone(), manifest)
    }
}

fn check_unique(field: &str, ids: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::Manifest(format!("{field} lists {id:?} twice")));
        }
    }
    Ok(())
}

/// Loads a corpus, choosing the format by extension (`.jsonl`/`.json` for
/// JSON lines, anything else is read as binary).
pub fn load(path: impl AsRef<Path>) -> Result<EmbeddingCorpus> {
    let path = path.as_ref();
    if is_jsonl_path(path) {
        load_jsonl(path)
    } else {
        load_binary(path)
    }
}

/// Writes a corpus in the format implied by the extension (see [`load`]).
pub fn save(corpus: &EmbeddingCorpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_jsonl_path(path) {
        write_jsonl(corpus, path)
    } else {
        write_binary(corpus, path)
    }
}

fn is_jsonl_path(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("json") | Some("ndjson")
    )
}
