//! Embedding container: `FCTE`, version, record count, then per record the
//! prompt hash, token count, width and row-major `f32` values.

use std::collections::BTreeMap;
use std::path::Path;

use super::{EmbeddingSource, TextEmbedding, TextError};
use crate::codec::{CodecError, Reader, Writer};
use crate::numerics::Tensor;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"FCTE";
pub const EMBEDDING_VERSION: u16 = 1;

/// Serializes records in the given order. Values are narrowed to `f32`.
pub fn encode_embeddings(records: &[(u64, Tensor)]) -> Vec<u8> {
    let mut w = Writer::with_header(EMBEDDING_MAGIC, EMBEDDING_VERSION);
    w.u32(records.len() as u32);
    for (hash, t) in records {
        w.u64(*hash);
        w.u32(t.rows() as u32);
        w.u32(t.cols() as u32);
        for &v in t.data() {
            w.f32(v as f32);
        }
    }
    w.finish()
}

/// Parses a container, checking every record's width against `dim`.
/// `origin` names the source in error messages.
pub fn decode_embeddings(bytes: &[u8], dim: usize, origin: &str) -> Result<BTreeMap<u64, TextEmbedding>, TextError> {
    let container = |source: CodecError| TextError::Container {
        path: origin.to_string(),
        source,
    };
    let mut r = Reader::with_header(bytes, EMBEDDING_MAGIC, EMBEDDING_VERSION).map_err(container)?;
    let count = r.u32().map_err(container)? as usize;
    let mut out = BTreeMap::new();
    for record in 0..count {
        let bad = |reason: String| TextError::Record {
            path: origin.to_string(),
            record,
            reason,
        };
        let hash = r.u64().map_err(|e| bad(e.to_string()))?;
        let rows = r.u32().map_err(|e| bad(e.to_string()))? as usize;
        let cols = r.u32().map_err(|e| bad(e.to_string()))? as usize;
        if cols != dim {
            return Err(bad(format!("width {cols} does not match model dimension {dim}")));
        }
        if rows == 0 {
            return Err(bad("record has no tokens".into()));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let v = r.f32().map_err(|e| bad(e.to_string()))?;
            if !v.is_finite() {
                return Err(bad("non-finite value".into()));
            }
            data.push(f64::from(v));
        }
        if out
            .insert(
                hash,
                TextEmbedding {
                    tokens: Tensor::matrix(rows, cols, data),
                    source: EmbeddingSource::Imported,
                },
            )
            .is_some()
        {
            return Err(bad(format!("duplicate prompt hash {hash:#018x}")));
        }
    }
    r.finish().map_err(container)?;
    Ok(out)
}

pub fn write_embeddings(path: &Path, records: &[(u64, Tensor)]) -> Result<(), TextError> {
    std::fs::write(path, encode_embeddings(records)).map_err(|source| TextError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_embeddings(path: &Path, dim: usize) -> Result<BTreeMap<u64, TextEmbedding>, TextError> {
    let bytes = std::fs::read(path).map_err(|source| TextError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_embeddings(&bytes, dim, &path.display().to_string())
}
