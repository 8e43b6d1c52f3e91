use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::RewardError;
use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.values.iter().map(|v| v * v).sum())
    }
}

/// Text encoder used by the caption reward and the evaluation cosine.
pub trait Embedder {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, RewardError>;
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hashed character n-gram bag.
///
/// Counts every character n-gram for `n = 1..=n_max`, adds each count to
/// bucket `fnv1a64(utf8(ngram)) mod dim`, and L2-normalizes. Empty text maps
/// to the zero vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramEmbedder {
    pub n_max: usize,
    pub dim: usize,
}

impl Default for NgramEmbedder {
    fn default() -> Self {
        Self { n_max: 3, dim: 256 }
    }
}

impl NgramEmbedder {
    pub fn embed_text(&self, text: &str) -> EmbeddingVector {
        let chars: Vec<char> = text.chars().collect();
        let mut values = vec![0.0; self.dim];
        let mut buf = alloc::string::String::new();
        for n in 1..=self.n_max {
            for window in chars.windows(n) {
                buf.clear();
                buf.extend(window.iter());
                let bucket = (fnv1a64(buf.as_bytes()) % self.dim as u64) as usize;
                values[bucket] += 1.0;
            }
        }
        let norm = math::sqrt(values.iter().map(|v| v * v).sum());
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        EmbeddingVector { values }
    }
}

impl Embedder for NgramEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RewardError> {
        if self.dim == 0 || self.n_max == 0 {
            return Err(RewardError::InvalidConfig("embedder needs dim >= 1 and n_max >= 1".to_string()));
        }
        Ok(self.embed_text(text))
    }
}

/// Cosine similarity; 0 when either vector has norm below 1e-12.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, RewardError> {
    if a.dim() != b.dim() {
        return Err(RewardError::DimensionMismatch(a.dim(), b.dim()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na < 1e-12 || nb < 1e-12 {
        return Ok(0.0);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

/// Cosine between the embeddings of the generated and reference captions,
/// clamped to `[0, 1]`.
pub fn caption_reward(
    generated: &str,
    reference: &str,
    embedder: &dyn Embedder,
) -> Result<f64, RewardError> {
    let a = embedder.embed(generated)?;
    let b = embedder.embed(reference)?;
    Ok(cosine(&a, &b)?.clamp(0.0, 1.0))
}
