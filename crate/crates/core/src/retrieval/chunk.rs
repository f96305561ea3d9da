//! Documents, sentence splitting and section-aware chunk packing.

use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::RetrievalError;

pub const MAX_CHARS: usize = 1500;
pub const MIN_CHARS: usize = 400;
pub const OVERLAP_SENTS: usize = 1;

/// Lower-cased tokens that end in a period without ending a sentence.
const ABBREVIATIONS: &[&str] = &[
    "e.g.", "i.e.", "al.", "etc.", "fig.", "figs.", "eq.", "eqs.", "ref.", "refs.", "dr.", "prof.", "vs.", "approx.", "ca.",
    "no.", "vol.", "sec.", "tab.", "cf.", "resp.", "mr.", "ms.", "st.",
];

static HEADER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*\[([^\[\]]+)\]\s*$").unwrap());

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub title: String,
    pub text: String,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub filename: String,
    pub sections: Vec<Section>,
}

impl Document {
    /// Text before the first `[Header]` goes into an untitled section.
    pub fn parse(filename: &str, text: &str) -> Document {
        let mut sections: Vec<Section> = Vec::new();
        let mut title = String::new();
        let mut body = String::new();
        let flush = |title: &str, body: &mut String, sections: &mut Vec<Section>| {
            if !title.is_empty() || !body.trim().is_empty() {
                sections.push(Section {
                    title: title.to_string(),
                    text: std::mem::take(body),
                    excluded: title.trim().eq_ignore_ascii_case("references"),
                });
            }
            body.clear();
        };
        for line in text.lines() {
            if let Some(c) = HEADER.captures(line) {
                flush(&title, &mut body, &mut sections);
                title = c[1].trim().to_string();
            } else {
                body.push_str(line);
                body.push('\n');
            }
        }
        flush(&title, &mut body, &mut sections);
        Document { filename: filename.to_string(), sections }
    }

    pub fn load(path: &Path) -> Result<Document, RetrievalError> {
        let text = std::fs::read_to_string(path).map_err(|e| RetrievalError::Io(format!("{}: {e}", path.display())))?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(Document::parse(&name, &text))
    }
}

/// `*.txt` files of a corpus directory, sorted by name.
pub fn corpus_files(dir: &Path) -> Result<Vec<std::path::PathBuf>, RetrievalError> {
    let rd = std::fs::read_dir(dir).map_err(|e| RetrievalError::Io(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<_> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    Ok(files)
}

fn is_abbreviation(word: &str) -> bool {
    let w = word.trim_start_matches(|c: char| !c.is_alphanumeric());
    let initial = w.len() == 2 && w.chars().next().is_some_and(char::is_uppercase);
    initial || ABBREVIATIONS.contains(&w.to_lowercase().as_str())
}

/// Splits on `.`, `!` or `?` followed by whitespace and an upper-case
/// letter. Whitespace inside sentences is collapsed to single spaces.
pub fn split_sentences(text: &str) -> Vec<String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut out = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for (i, w) in words.iter().enumerate() {
        cur.push(w);
        let terminal = w.trim_end_matches(['"', '\'', ')', ']']).ends_with(['.', '!', '?']);
        let next_upper = words.get(i + 1).and_then(|n| n.chars().find(|c| c.is_alphanumeric())).is_some_and(char::is_uppercase);
        let stop = w.ends_with('.') && is_abbreviation(w);
        if terminal && next_upper && !stop {
            out.push(cur.join(" "));
            cur.clear();
        }
    }
    if !cur.is_empty() {
        out.push(cur.join(" "));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkParams {
    pub max_chars: usize,
    pub min_chars: usize,
    pub overlap_sents: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        ChunkParams { max_chars: MAX_CHARS, min_chars: MIN_CHARS, overlap_sents: OVERLAP_SENTS }
    }
}

impl ChunkParams {
    pub fn check(&self) -> Result<(), RetrievalError> {
        if self.max_chars == 0 || self.min_chars == 0 || self.overlap_sents == 0 || self.min_chars >= self.max_chars {
            return Err(RetrievalError::BadParams(format!(
                "need max > min > 0 and overlap > 0, got max {} min {} overlap {}",
                self.max_chars, self.min_chars, self.overlap_sents
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    /// `{filename}#{ordinal}`, ordinal counted over the whole document.
    pub chunk_id: String,
    pub filename: String,
    pub section_title: String,
    /// Index of the first sentence within its section.
    pub sentence_start: usize,
    pub sentences: Vec<String>,
    pub text: String,
    pub char_len: usize,
    /// Built by merging an undersized segment into its successor; such
    /// chunks may exceed `max_chars`.
    pub carried: bool,
}

fn span_len(lens: &[usize], s: usize, e: usize) -> usize {
    lens[s..e].iter().sum::<usize>() + (e - s).saturating_sub(1)
}

/// Greedy segments `[start, end)` over sentence lengths.
fn segments(lens: &[usize], p: &ChunkParams) -> Vec<(usize, usize)> {
    let n = lens.len();
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        let mut len = lens[start];
        while end < n && len + 1 + lens[end] <= p.max_chars {
            len += 1 + lens[end];
            end += 1;
        }
        out.push((start, end));
        if end == n {
            break;
        }
        let back = end - p.overlap_sents.min(end - start);
        start = if end - start > p.overlap_sents && span_len(lens, back, end + 1) <= p.max_chars { back } else { end };
    }
    out
}

/// Sentence spans of one section after the carry merge: `(start, end, carried)`.
pub fn pack(lens: &[usize], p: &ChunkParams) -> Vec<(usize, usize, bool)> {
    let segs = segments(lens, p);
    let mut out = Vec::new();
    let mut carry: Option<usize> = None;
    for (i, &(s, e)) in segs.iter().enumerate() {
        let (start, carried) = match carry.take() {
            Some(cs) => (cs, true),
            None => (s, false),
        };
        if span_len(lens, start, e) < p.min_chars && i + 1 < segs.len() {
            carry = Some(start);
            continue;
        }
        out.push((start, e, carried));
    }
    out
}

pub fn chunk_document(doc: &Document, p: &ChunkParams) -> Result<Vec<Chunk>, RetrievalError> {
    p.check()?;
    let mut out = Vec::new();
    for sec in doc.sections.iter().filter(|s| !s.excluded) {
        let sentences = split_sentences(&sec.text);
        let lens: Vec<usize> = sentences.iter().map(|s| s.chars().count()).collect();
        for (s, e, carried) in pack(&lens, p) {
            let sents = sentences[s..e].to_vec();
            let text = sents.join(" ");
            out.push(Chunk {
                chunk_id: format!("{}#{}", doc.filename, out.len()),
                filename: doc.filename.clone(),
                section_title: sec.title.clone(),
                sentence_start: s,
                char_len: text.chars().count(),
                sentences: sents,
                text,
                carried,
            });
        }
    }
    Ok(out)
}
