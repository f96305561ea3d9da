use std::collections::BTreeSet;

use mof_forge::retrieval::{build_index, HashEmbedder};
use mof_forge_bench::synthetic_chunks;

#[test]
fn synthetic_chunks_index_cleanly() {
    let chunks = synthetic_chunks(1000);
    let ids: BTreeSet<&str> = chunks.iter().map(|c| c.chunk_id.as_str()).collect();
    assert_eq!(ids.len(), 1000);
    assert!(chunks.iter().all(|c| c.char_len == c.text.chars().count()));
    let idx = build_index(&chunks, &HashEmbedder::default(), 512).unwrap();
    assert_eq!(idx.rows(), 1000);
}
