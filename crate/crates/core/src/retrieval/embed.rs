//! Embedder contract and the default hashed bag-of-words embedder.

use super::RetrievalError;

pub const DEFAULT_DIMS: usize = 384;

/// Produces unit-norm vectors of a fixed dimensionality.
pub trait Embedder: Send + Sync {
    fn dims(&self) -> usize;
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, RetrievalError>;
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Lower-cased alphanumeric runs.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

/// Token counts hashed into `dims` buckets, then L2-normalised.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub dims: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dims: DEFAULT_DIMS }
    }
}

impl HashEmbedder {
    pub fn embed_one(&self, text: &str) -> Result<Vec<f32>, RetrievalError> {
        let mut counts = vec![0f64; self.dims];
        let mut any = false;
        for t in tokens(text) {
            counts[(fnv1a(t.as_bytes()) % self.dims as u64) as usize] += 1.0;
            any = true;
        }
        if !any {
            return Err(RetrievalError::EmptyText);
        }
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        Ok(counts.iter().map(|c| (c / norm) as f32).collect())
    }
}

impl Embedder for HashEmbedder {
    fn dims(&self) -> usize {
        self.dims
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, RetrievalError> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}
