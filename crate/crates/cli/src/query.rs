//! Query vectors given on the command line.

use std::io::Read;
use std::path::Path;

use attrib_core::corpus::{GenerationRecord, RecordKey};
use attrib_core::EmbeddingVector;

use crate::CliError;

#[derive(Debug)]
pub struct Query {
    pub embedding: EmbeddingVector,
    /// Present when the query was given as a corpus record.
    pub key: Option<RecordKey>,
}

/// Reads a query from `path` (`-` for stdin). Accepted forms: a JSONL record,
/// a JSON array of numbers, or numbers separated by whitespace or commas.
pub fn read_query(path: &Path) -> Result<Query, CliError> {
    let text = if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| CliError::Io(format!("stdin: {e}")))?;
        s
    } else {
        std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?
    };
    parse_query(&text).map_err(|m| CliError::Data(format!("{}: {m}", path.display())))
}

pub fn parse_query(text: &str) -> Result<Query, String> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err("empty query".into());
    }
    if trimmed.starts_with('{') {
        // only the first record of a JSONL file is used
        let line = trimmed.lines().next().unwrap_or(trimmed);
        let raw: RawRecord =
            serde_json::from_str(line).map_err(|e| format!("bad query record: {e}"))?;
        let embedding = to_vector(&raw.embedding)?;
        let record = GenerationRecord {
            prompt_id: raw.prompt_id,
            model_id: raw.model_id,
            seed: raw.seed,
            embedding,
        };
        return Ok(Query {
            key: Some(record.key()),
            embedding: record.embedding,
        });
    }
    let values: Vec<f64> = if trimmed.starts_with('[') {
        serde_json::from_str(trimmed).map_err(|e| format!("bad query array: {e}"))?
    } else {
        trimmed
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: {t:?}")))
            .collect::<Result<_, _>>()?
    };
    Ok(Query {
        embedding: to_vector(&values)?,
        key: None,
    })
}

#[derive(serde::Deserialize)]
struct RawRecord {
    prompt_id: String,
    model_id: String,
    seed: i64,
    embedding: Vec<f64>,
}

fn to_vector(values: &[f64]) -> Result<EmbeddingVector, String> {
    let v: Vec<f32> = values.iter().map(|&x| x as f32).collect();
    EmbeddingVector::new(v).map_err(|e| e.to_string())
}
