use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TextError;
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingSource {
    Stub,
    Imported,
}

/// Token embedding matrix (N_p × d_m) for one prompt.
#[derive(Clone, Debug, PartialEq)]
pub struct TextEmbedding {
    pub tokens: Tensor,
    pub source: EmbeddingSource,
}

impl TextEmbedding {
    pub fn num_tokens(&self) -> usize {
        self.tokens.rows()
    }

    pub fn dim(&self) -> usize {
        self.tokens.cols()
    }
}

pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<TextEmbedding, TextError>;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv_extend(FNV_OFFSET, bytes)
}

fn fnv_extend(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Key under which imported embeddings are looked up.
pub fn prompt_hash(full_text: &str) -> u64 {
    fnv1a64(full_text.as_bytes())
}

/// Deterministic stand-in for a causal language model: each whitespace
/// token gets a pseudo-random unit vector and output row `j` is the mean of
/// the first `j` token vectors.
#[derive(Clone, Debug)]
pub struct StubEncoder {
    dim: usize,
    seed: u64,
}

impl StubEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1, "embedding dimension must be positive");
        Self { dim, seed }
    }

    /// Unit-norm vector for one token.
    pub fn base_vector(&self, token: &str) -> Vec<f64> {
        let key = fnv_extend(fnv1a64(&self.seed.to_le_bytes()), token.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

impl TextEncoder for StubEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<TextEmbedding, TextError> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.is_empty() {
            return Err(TextError::EmptyText);
        }
        let mut out = Vec::with_capacity(tokens.len() * self.dim);
        let mut mean = vec![0.0; self.dim];
        for (j, tok) in tokens.iter().enumerate() {
            let base = self.base_vector(tok);
            let count = (j + 1) as f64;
            for (m, b) in mean.iter_mut().zip(&base) {
                *m += (b - *m) / count;
            }
            out.extend_from_slice(&mean);
        }
        Ok(TextEmbedding {
            tokens: Tensor::matrix(tokens.len(), self.dim, out),
            source: EmbeddingSource::Stub,
        })
    }
}
