//! Little-endian binary corpus format.
//!
//! ```text
//! magic "ATK1" | version u16 | dim u32 | record_count u64
//! manifest_len u32 | manifest (UTF-8 JSON)
//! per record: prompt_len u16 | prompt_id | model_len u16 | model_id
//!             | seed i64 | dim x f32
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{CorpusManifest, EmbeddingCorpus, GenerationRecord};
use crate::error::{Error, Result};
use crate::vector::EmbeddingVector;

pub const MAGIC: [u8; 4] = *b"ATK1";
pub const FORMAT_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 4 + 8;

pub fn write_binary(corpus: &EmbeddingCorpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(corpus)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_binary(path: impl AsRef<Path>) -> Result<EmbeddingCorpus> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

fn encode(corpus: &EmbeddingCorpus) -> Result<Vec<u8>> {
    let dim = u32::try_from(corpus.dim())
        .map_err(|_| Error::invalid(format!("dim {} exceeds u32", corpus.dim())))?;
    let manifest =
        serde_json::to_vec(corpus.manifest()).map_err(|e| Error::Manifest(e.to_string()))?;
    let manifest_len = u32::try_from(manifest.len())
        .map_err(|_| Error::Manifest("manifest exceeds 4 GiB".into()))?;

    let mut buf =
        Vec::with_capacity(HEADER_LEN + manifest.len() + corpus.len() * (16 + 4 * corpus.dim()));
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&dim.to_le_bytes());
    buf.extend_from_slice(&(corpus.len() as u64).to_le_bytes());
    buf.extend_from_slice(&manifest_len.to_le_bytes());
    buf.extend_from_slice(&manifest);
    for r in corpus.records() {
        put_str(&mut buf, &r.prompt_id)?;
        put_str(&mut buf, &r.model_id)?;
        buf.extend_from_slice(&r.seed.to_le_bytes());
        for v in r.embedding.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

fn put_str(buf: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| {
        Error::invalid(format!("id of {} bytes exceeds u16 length prefix", s.len()))
    })?;
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Truncated {
                expected: end as u64,
                actual: self.bytes.len() as u64,
            });
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::Corrupt(format!("invalid UTF-8 id at offset {}", self.pos - len)))
    }
}

fn decode(bytes: &[u8]) -> Result<EmbeddingCorpus> {
    let mut rd = Reader { bytes, pos: 0 };
    if bytes.len() >= 4 && bytes[..4] != MAGIC {
        return Err(Error::BadMagic(bytes[..4].try_into().expect("4 bytes")));
    }
    rd.take(4)?;
    let version = rd.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let dim = rd.u32()? as usize;
    let count = rd.u64()?;
    let manifest_len = rd.u32()? as usize;
    let manifest: CorpusManifest = serde_json::from_slice(rd.take(manifest_len)?)
        .map_err(|e| Error::Manifest(e.to_string()))?;
    if manifest.dim != dim {
        return Err(Error::DimensionMismatch {
            context: "binary header vs manifest".into(),
            expected: dim,
            found: manifest.dim,
        });
    }

    // Every record carries at least two length prefixes, a seed and its vector.
    let min_record = 2 + 2 + 8 + 4 * dim as u64;
    let min_total = (rd.pos as u64).saturating_add(count.saturating_mul(min_record));
    if min_total > bytes.len() as u64 {
        return Err(Error::Truncated {
            expected: min_total,
            actual: bytes.len() as u64,
        });
    }

    let mut records = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let prompt_id = rd.string()?;
        let model_id = rd.string()?;
        let seed = i64::from_le_bytes(rd.array()?);
        let raw = rd.take(4 * dim)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect();
        records.push(GenerationRecord {
            prompt_id,
            model_id,
            seed,
            embedding: EmbeddingVector::new(values)?,
        });
    }
    if rd.pos != bytes.len() {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after {count} records",
            bytes.len() - rd.pos
        )));
    }
    EmbeddingCorpus::new(records, manifest)
}
