//! Flat inner-product index, batched build and the on-disk format.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::chunk::{chunk_document, corpus_files, Chunk, ChunkParams, Document};
use super::embed::Embedder;
use super::{RetrievalError, RetrievalHit};

pub const FILE_BATCH: usize = 200;
pub const ENCODE_BATCH: usize = 512;
pub const MAGIC: &[u8; 8] = b"MFVEC001";
const HEADER_LEN: usize = 8 + 4 + 4 + 32 + 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowMeta {
    pub filename: String,
    pub chunk_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dims: usize,
    /// Row-major, `rows * dims`.
    vectors: Vec<f32>,
    meta: Vec<RowMeta>,
}

impl VectorIndex {
    pub fn empty(dims: usize) -> VectorIndex {
        VectorIndex { dims, vectors: Vec::new(), meta: Vec::new() }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn rows(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dims..(i + 1) * self.dims]
    }

    pub fn meta(&self) -> &[RowMeta] {
        &self.meta
    }

    pub fn score(&self, i: usize, q: &[f32]) -> f64 {
        dot(self.row(i), q)
    }
}

/// Inner product accumulated in f64, left to right.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + *x as f64 * *y as f64)
}

fn check_rows(vs: &[Vec<f32>], want: usize, dims: usize) -> Result<(), RetrievalError> {
    if vs.len() != want {
        return Err(RetrievalError::DimensionMismatch { expected: want, got: vs.len() });
    }
    match vs.iter().find(|v| v.len() != dims) {
        Some(v) => Err(RetrievalError::DimensionMismatch { expected: dims, got: v.len() }),
        None => Ok(()),
    }
}

pub fn build_index(chunks: &[Chunk], embedder: &dyn Embedder, encode_batch: usize) -> Result<VectorIndex, RetrievalError> {
    if chunks.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    if encode_batch == 0 {
        return Err(RetrievalError::BadParams("encode_batch must be >= 1".into()));
    }
    let dims = embedder.dims();
    let mut vectors = Vec::with_capacity(chunks.len() * dims);
    for batch in chunks.chunks(encode_batch) {
        let texts: Vec<&str> = batch.iter().map(|c| c.text.as_str()).collect();
        let vs = embedder.embed(&texts)?;
        check_rows(&vs, batch.len(), dims)?;
        for v in vs {
            vectors.extend(v);
        }
    }
    let meta = chunks
        .iter()
        .map(|c| RowMeta { filename: c.filename.clone(), chunk_id: c.chunk_id.clone(), text: c.text.clone() })
        .collect();
    Ok(VectorIndex { dims, vectors, meta })
}

/// Reads the corpus `file_batch` files at a time, chunks, and indexes.
pub fn build_from_corpus(
    dir: &Path,
    params: &ChunkParams,
    embedder: &dyn Embedder,
    file_batch: usize,
    encode_batch: usize,
) -> Result<VectorIndex, RetrievalError> {
    if file_batch == 0 {
        return Err(RetrievalError::BadParams("file_batch must be >= 1".into()));
    }
    params.check()?;
    let mut chunks = Vec::new();
    for batch in corpus_files(dir)?.chunks(file_batch) {
        for path in batch {
            chunks.extend(chunk_document(&Document::load(path)?, params)?);
        }
    }
    build_index(&chunks, embedder, encode_batch)
}

#[derive(PartialEq)]
struct Ranked<'a> {
    score: f64,
    chunk_id: &'a str,
    row: usize,
}

impl Eq for Ranked<'_> {}

impl Ord for Ranked<'_> {
    // "better" sorts lower, so the heap top is the worst kept hit
    fn cmp(&self, o: &Self) -> Ordering {
        o.score.total_cmp(&self.score).then_with(|| self.chunk_id.cmp(o.chunk_id))
    }
}

impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

pub fn search(index: &VectorIndex, embedder: &dyn Embedder, query: &str, k: usize) -> Result<Vec<RetrievalHit>, RetrievalError> {
    if index.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    if k == 0 {
        return Err(RetrievalError::BadParams("k must be >= 1".into()));
    }
    let q = embedder.embed(&[query])?.pop().ok_or(RetrievalError::EmptyText)?;
    if q.len() != index.dims {
        return Err(RetrievalError::DimensionMismatch { expected: index.dims, got: q.len() });
    }
    let mut heap = BinaryHeap::with_capacity(k + 1);
    for (row, m) in index.meta.iter().enumerate() {
        heap.push(Ranked { score: index.score(row, &q), chunk_id: &m.chunk_id, row });
        if heap.len() > k {
            heap.pop();
        }
    }
    Ok(heap
        .into_sorted_vec()
        .into_iter()
        .map(|r| {
            let m = &index.meta[r.row];
            RetrievalHit { chunk_id: m.chunk_id.clone(), filename: m.filename.clone(), score: r.score, text: m.text.clone() }
        })
        .collect())
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n")
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut it = s.chars();
    while let Some(c) = it.next() {
        if c == '\\' {
            match it.next() {
                Some('t') => out.push('\t'),
                Some('n') => out.push('\n'),
                Some(o) => out.push(o),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn render_meta(meta: &[RowMeta]) -> String {
    let mut s = String::from("row\tfilename\tchunk_id\ttext\n");
    for (i, m) in meta.iter().enumerate() {
        s.push_str(&format!("{i}\t{}\t{}\t{}\n", escape(&m.filename), escape(&m.chunk_id), escape(&m.text)));
    }
    s
}

/// Writes `index.vec` and `metadata.tsv` into `dir`.
pub fn save_index(index: &VectorIndex, dir: &Path) -> Result<(), RetrievalError> {
    if index.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    std::fs::create_dir_all(dir).map_err(|e| RetrievalError::Io(format!("{}: {e}", dir.display())))?;
    let payload: Vec<u8> = index.vectors.iter().flat_map(|f| f.to_le_bytes()).collect();
    let meta = render_meta(&index.meta);
    let mut bytes = Vec::with_capacity(HEADER_LEN + payload.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(index.dims as u32).to_le_bytes());
    bytes.extend_from_slice(&(index.rows() as u32).to_le_bytes());
    bytes.extend_from_slice(&Sha256::digest(&payload));
    bytes.extend_from_slice(&Sha256::digest(meta.as_bytes()));
    bytes.extend_from_slice(&payload);
    let write = |name: &str, data: &[u8]| {
        std::fs::write(dir.join(name), data).map_err(|e| RetrievalError::Io(format!("{name}: {e}")))
    };
    write("index.vec", &bytes)?;
    write("metadata.tsv", meta.as_bytes())
}

pub fn load_index(dir: &Path) -> Result<VectorIndex, RetrievalError> {
    let read = |name: &str| std::fs::read(dir.join(name)).map_err(|e| RetrievalError::Io(format!("{name}: {e}")));
    let bytes = read("index.vec")?;
    let meta_bytes = read("metadata.tsv")?;
    let corrupt = |m: &str| RetrievalError::CorruptIndex(m.to_string());
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(corrupt("bad header"));
    }
    let dims = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let rows = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != rows * dims * 4 {
        return Err(corrupt(&format!("expected {} payload bytes, found {}", rows * dims * 4, payload.len())));
    }
    if Sha256::digest(payload).as_slice() != &bytes[16..48] {
        return Err(corrupt("vector checksum mismatch"));
    }
    if Sha256::digest(&meta_bytes).as_slice() != &bytes[48..80] {
        return Err(corrupt("metadata checksum mismatch"));
    }
    let text = String::from_utf8(meta_bytes).map_err(|_| corrupt("metadata is not UTF-8"))?;
    let mut meta = Vec::with_capacity(rows);
    for (i, line) in text.lines().skip(1).enumerate() {
        let c: Vec<&str> = line.split('\t').collect();
        if c.len() != 4 || c[0] != i.to_string() {
            return Err(corrupt(&format!("metadata row {i}")));
        }
        meta.push(RowMeta { filename: unescape(c[1]), chunk_id: unescape(c[2]), text: unescape(c[3]) });
    }
    if meta.len() != rows || rows == 0 {
        return Err(corrupt("row count mismatch"));
    }
    let vectors = payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    Ok(VectorIndex { dims, vectors, meta })
}
