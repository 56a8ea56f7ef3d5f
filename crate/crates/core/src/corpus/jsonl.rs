use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Deserialize;

use super::{CorpusManifest, EmbeddingCorpus, GenerationRecord};
use crate::error::{Error, Result};
use crate::vector::EmbeddingVector;

const UNKNOWN_ENCODER: &str = "unknown";

#[derive(Deserialize)]
struct LineRecord {
    prompt_id: String,
    model_id: String,
    seed: i64,
    embedding: Vec<f64>,
}

/// `dir/name.jsonl` -> `dir/name.manifest.json`.
pub fn manifest_sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.manifest.json"))
}

/// Reads one record per line. Blank lines are skipped; every other line must
/// parse. The manifest comes from the sidecar file when present, otherwise it
/// is inferred with the file's modification time as `created_at`.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<EmbeddingCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut records = Vec::new();
    let mut dim: Option<usize> = None;
    let mut keys = HashSet::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: LineRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let context = || format!("line {line_no}");

        let expected = *dim.get_or_insert(raw.embedding.len());
        if raw.embedding.len() != expected {
            return Err(Error::DimensionMismatch {
                context: context(),
                expected,
                found: raw.embedding.len(),
            });
        }
        if expected == 0 {
            return Err(Error::Malformed {
                line: line_no,
                message: "empty embedding".into(),
            });
        }
        let values: Vec<f32> = raw.embedding.iter().map(|&v| v as f32).collect();
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: context(),
                index,
            });
        }
        let record = GenerationRecord {
            prompt_id: raw.prompt_id,
            model_id: raw.model_id,
            seed: raw.seed,
            embedding: EmbeddingVector::new(values)?,
        };
        if !keys.insert(record.key()) {
            return Err(Error::DuplicateRecord {
                context: context(),
                key: record.key(),
            });
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let sidecar = manifest_sidecar_path(path);
    let manifest = if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        serde_json::from_str::<CorpusManifest>(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", sidecar.display())))?
    } else {
        let created_at = std::fs::metadata(path)
            .and_then(|m| m.modified())
            .map(DateTime::<Utc>::from)
            .unwrap_or(DateTime::<Utc>::UNIX_EPOCH);
        CorpusManifest::infer(&records, UNKNOWN_ENCODER, created_at)?
    };
    EmbeddingCorpus::new(records, manifest)
}

/// Writes records as JSON lines plus the `.manifest.json` sidecar.
pub fn write_jsonl(corpus: &EmbeddingCorpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in corpus.records() {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::io(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;

    let sidecar = manifest_sidecar_path(path);
    let text = serde_json::to_string_pretty(corpus.manifest())
        .map_err(|e| Error::Manifest(e.to_string()))?;
    std::fs::write(&sidecar, text + "\n").map_err(|e| Error::io(&sidecar, e))
}
