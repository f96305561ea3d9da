//! Shared inputs for the benchmarks.

use mof_forge::retrieval::Chunk;

/// Synthetic chunks with overlapping vocabulary.
pub fn synthetic_chunks(n: usize) -> Vec<Chunk> {
    const WORDS: [&str; 16] = [
        "methane", "uptake", "cutoff", "pressure", "framework", "linker", "diffusion", "charge", "binding", "pore",
        "volume", "temperature", "isotherm", "metal", "node", "guest",
    ];
    (0..n)
        .map(|i| {
            let words: Vec<&str> = (0..24).map(|k| WORDS[(i * 7 + k * (i % 5 + 1)) % WORDS.len()]).collect();
            let text = format!("{}.", words.join(" "));
            Chunk {
                chunk_id: format!("doc{}.txt#{}", i / 10, i % 10),
                filename: format!("doc{}.txt", i / 10),
                section_title: "Methods".into(),
                sentence_start: 0,
                sentences: vec![text.clone()],
                char_len: text.chars().count(),
                text,
                carried: false,
            }
        })
        .collect()
}
