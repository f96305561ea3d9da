//! Local retrieval: section-aware chunking, hashed embeddings, flat index.

pub mod chunk;
pub mod embed;
pub mod index;

pub use chunk::{chunk_document, split_sentences, Chunk, ChunkParams, Document, Section};
pub use embed::{Embedder, HashEmbedder, DEFAULT_DIMS};
pub use index::{build_from_corpus, build_index, load_index, save_index, search, VectorIndex};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub chunk_id: String,
    pub filename: String,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetrievalError {
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("text has no tokens")]
    EmptyText,
    #[error("index is empty")]
    EmptyIndex,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("io: {0}")]
    Io(String),
}
