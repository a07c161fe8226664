//! Document ingestion, text cleaning, sliding-window chunking, and the
//! per-document chunk cache.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disclosure report kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportType {
    Annual,
    Sustainability,
}

/// Metadata attached to every ingested report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentMeta {
    pub company_id: String,
    pub company_name: String,
    pub report_type: ReportType,
    pub publication_year: i32,
    pub source_path: String,
}

impl DocumentMeta {
    /// Check the structural invariants: non-empty company id and a plausible
    /// publication year.
    pub fn validate(&self) -> Result<()> {
        if self.company_id.is_empty() {
            return Err(Error::Config("company_id must be non-empty".into()));
        }
        if !(1990..=2100).contains(&self.publication_year) {
            return Err(Error::Config(format!(
                "publication_year {} outside [1990, 2100]",
                self.publication_year
            )));
        }
        Ok(())
    }
}

/// A cleaned document ready for chunking.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub meta: DocumentMeta,
    pub text: String,
}

impl Document {
    /// Build a document from already-cleaned text, deriving the id from the
    /// source path's file stem.
    pub fn new(meta: DocumentMeta, text: String) -> Result<Self> {
        let doc_id = derive_doc_id(&meta.source_path);
        Self::with_doc_id(doc_id, meta, text)
    }

    pub fn with_doc_id(doc_id: String, meta: DocumentMeta, text: String) -> Result<Self> {
        meta.validate()?;
        if doc_id.is_empty() {
            return Err(Error::Config("doc_id must be non-empty".into()));
        }
        Ok(Self { doc_id, meta, text })
    }
}

/// File-stem based document id, with characters unsafe for filenames replaced.
pub fn derive_doc_id(source_path: &str) -> String {
    let stem = Path::new(source_path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| source_path.to_string());
    stem.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Converts a source file into raw text. Plain text passthrough is built in;
/// PDF (or anything else) goes through an external command.
pub trait TextConverter: Send + Sync {
    fn convert(&self, path: &Path) -> Result<String>;
}

/// Reads the file as UTF-8 text.
pub struct PlainTextConverter;

impl TextConverter for PlainTextConverter {
    fn convert(&self, path: &Path) -> Result<String> {
        std::fs::read_to_string(path).map_err(|e| Error::Ingest {
            path: path.to_path_buf(),
            cause: e.to_string(),
        })
    }
}

/// Runs an external command and captures its stdout as the document text.
///
/// Occurrences of `{input}` in the arguments are replaced with the file path;
/// if no argument contains the placeholder, the path is appended.
pub struct CommandConverter {
    program: String,
    args: Vec<String>,
}

impl CommandConverter {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
        }
    }
}

impl TextConverter for CommandConverter {
    fn convert(&self, path: &Path) -> Result<String> {
        let path_str = path.to_string_lossy();
        let mut args: Vec<String> = self
            .args
            .iter()
            .map(|a| a.replace("{input}", &path_str))
            .collect();
        if !self.args.iter().any(|a| a.contains("{input}")) {
            args.push(path_str.into_owned());
        }
        let output = Command::new(&self.program)
            .args(&args)
            .output()
            .map_err(|e| Error::Ingest {
                path: path.to_path_buf(),
                cause: format!("converter `{}` failed to start: {e}", self.program),
            })?;
        if !output.status.success() {
            return Err(Error::Ingest {
                path: path.to_path_buf(),
                cause: format!(
                    "converter `{}` exited with {}: {}",
                    self.program,
                    output.status,
                    String::from_utf8_lossy(&output.stderr).trim()
                ),
            });
        }
        let text = String::from_utf8_lossy(&output.stdout).into_owned();
        if text.trim().is_empty() {
            return Err(Error::Ingest {
                path: path.to_path_buf(),
                cause: format!("converter `{}` produced empty output", self.program),
            });
        }
        Ok(text)
    }
}

/// Read a file through the converter and clean its text.
pub fn load_document(
    path: &Path,
    meta: DocumentMeta,
    converter: &dyn TextConverter,
) -> Result<Document> {
    let raw = converter.convert(path)?;
    Document::new(meta, clean_text(&raw))
}

/// Normalize raw text: newlines and whitespace runs collapse to single
/// spaces, Unicode quotes and dashes map to their ASCII equivalents, and the
/// result is trimmed. Idempotent.
pub fn clean_text(raw: &str) -> String {
    let mut mapped = String::with_capacity(raw.len());
    for c in raw.chars() {
        match c {
            '\u{201c}' | '\u{201d}' | '\u{201e}' | '\u{00ab}' | '\u{00bb}' | '\u{2033}' => {
                mapped.push('"')
            }
            '\u{2018}' | '\u{2019}' | '\u{201a}' | '\u{2032}' | '\u{00b4}' => mapped.push('\''),
            '\u{2012}' | '\u{2013}' | '\u{2014}' | '\u{2015}' | '\u{2212}' => mapped.push('-'),
            '\u{2026}' => mapped.push_str("..."),
            c => mapped.push(c),
        }
    }
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A window of consecutive words from one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub doc_id: String,
    pub index: usize,
    pub start_word: usize,
    pub words: Vec<String>,
    pub text: String,
}

/// Split a document into overlapping word windows.
///
/// Chunks start at word offsets 0, stride, 2*stride, ... where
/// stride = window - overlap. The final chunk may be shorter; a non-empty
/// document of at most `window_words` words yields exactly one chunk, and an
/// empty document yields none.
pub fn chunk_text(doc: &Document, window_words: usize, overlap_words: usize) -> Result<Vec<Chunk>> {
    if overlap_words == 0 || overlap_words >= window_words {
        return Err(Error::Config(format!(
            "chunking requires 0 < overlap ({overlap_words}) < window ({window_words})"
        )));
    }
    let words: Vec<&str> = doc.text.split_whitespace().collect();
    if words.is_empty() {
        return Ok(Vec::new());
    }
    let stride = window_words - overlap_words;
    let count = if words.len() <= window_words {
        1
    } else {
        (words.len() - window_words).div_ceil(stride) + 1
    };
    let mut chunks = Vec::with_capacity(count);
    for index in 0..count {
        let start = index * stride;
        let end = (start + window_words).min(words.len());
        let chunk_words: Vec<String> = words[start..end].iter().map(|w| w.to_string()).collect();
        let text = chunk_words.join(" ");
        chunks.push(Chunk {
            doc_id: doc.doc_id.clone(),
            index,
            start_word: start,
            words: chunk_words,
            text,
        });
    }
    Ok(chunks)
}

/// One line of the persisted chunk-cache JSONL.
#[derive(Debug, Serialize, Deserialize)]
struct ChunkLine {
    doc_id: String,
    index: usize,
    start_word: usize,
    text: String,
}

/// Ordered chunk lists per document, addressable by `(doc_id, index)`.
/// Written once per document, read many times.
#[derive(Debug, Default)]
pub struct ChunkCache {
    docs: BTreeMap<String, Vec<Chunk>>,
}

impl ChunkCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a document's chunks. Indices must be dense from 0.
    pub fn insert_document(&mut self, doc_id: &str, chunks: Vec<Chunk>) -> Result<()> {
        if self.docs.contains_key(doc_id) {
            return Err(Error::DuplicateDocument(doc_id.to_string()));
        }
        for (i, c) in chunks.iter().enumerate() {
            if c.index != i || c.doc_id != doc_id {
                return Err(Error::Config(format!(
                    "chunk list for {doc_id} is not dense at position {i}"
                )));
            }
        }
        self.docs.insert(doc_id.to_string(), chunks);
        Ok(())
    }

    pub fn get(&self, doc_id: &str, index: usize) -> Option<&Chunk> {
        self.docs.get(doc_id).and_then(|v| v.get(index))
    }

    pub fn chunks(&self, doc_id: &str) -> Option<&[Chunk]> {
        self.docs.get(doc_id).map(|v| v.as_slice())
    }

    /// Document ids in sorted order.
    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.docs.keys().map(|s| s.as_str())
    }

    /// Adjacent chunks of a cached chunk; `None` at document boundaries.
    pub fn neighbors(&self, doc_id: &str, index: usize) -> Result<(Option<&Chunk>, Option<&Chunk>)> {
        let chunks = self.docs.get(doc_id).ok_or_else(|| Error::ChunkNotFound {
            doc_id: doc_id.to_string(),
            index,
        })?;
        if index >= chunks.len() {
            return Err(Error::ChunkNotFound {
                doc_id: doc_id.to_string(),
                index,
            });
        }
        let prev = index.checked_sub(1).and_then(|i| chunks.get(i));
        let next = chunks.get(index + 1);
        Ok((prev, next))
    }

    /// Write one `<doc_id>.jsonl` file per document into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (doc_id, chunks) in &self.docs {
            let lines = chunks.iter().map(|c| ChunkLine {
                doc_id: c.doc_id.clone(),
                index: c.index,
                start_word: c.start_word,
                text: c.text.clone(),
            });
            crate::jsonl::write(&dir.join(format!("{doc_id}.jsonl")), lines)?;
        }
        Ok(())
    }

    /// Load every `*.jsonl` file in `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut cache = Self::new();
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let lines: Vec<ChunkLine> = crate::jsonl::read(&path)?;
            if lines.is_empty() {
                continue;
            }
            let doc_id = lines[0].doc_id.clone();
            let chunks: Vec<Chunk> = lines
                .into_iter()
                .map(|l| Chunk {
                    doc_id: l.doc_id,
                    index: l.index,
                    start_word: l.start_word,
                    words: l.text.split_whitespace().map(|w| w.to_string()).collect(),
                    text: l.text,
                })
                .collect();
            cache.insert_document(&doc_id, chunks)?;
        }
        Ok(cache)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> DocumentMeta {
        DocumentMeta {
            company_id: "c001".into(),
            company_name: "Acme Corporation".into(),
            report_type: ReportType::Sustainability,
            publication_year: 2023,
            source_path: "reports/c001.txt".into(),
        }
    }

    fn doc_with_words(n: usize) -> Document {
        let text = (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        Document::new(meta(), text).unwrap()
    }

    #[test]
    fn clean_replaces_newlines_and_tabs() {
        assert_eq!(clean_text("a\r\nb"), "a b");
        assert_eq!(clean_text("a  b\tc"), "a b c");
    }

    #[test]
    fn clean_maps_unicode_quotes_and_dashes() {
        assert_eq!(clean_text("\u{201c}net zero\u{201d}"), "\"net zero\"");
        assert_eq!(clean_text("it\u{2019}s 2030\u{2013}2040"), "it's 2030-2040");
    }

    #[test]
    fn clean_is_idempotent_and_never_grows_ascii() {
        let inputs = ["a\r\nb", "  x   y  ", "plain ascii text", "“q” – d…"];
        for raw in inputs {
            let once = clean_text(raw);
            assert_eq!(clean_text(&once), once, "not idempotent for {raw:?}");
        }
        let ascii = "some  spaced\tout\r\ntext here";
        assert!(clean_text(ascii).len() <= ascii.len());
    }

    #[test]
    fn chunk_200_words_default_params() {
        let doc = doc_with_words(200);
        let chunks = chunk_text(&doc, 80, 20).unwrap();
        assert_eq!(chunks.len(), 3);
        assert_eq!(
            chunks.iter().map(|c| c.start_word).collect::<Vec<_>>(),
            vec![0, 60, 120]
        );
        // consecutive chunks share exactly `overlap` words
        for pair in chunks.windows(2) {
            let tail = &pair[0].words[pair[0].words.len() - 20..];
            let head = &pair[1].words[..20];
            assert_eq!(tail, head);
        }
    }

    #[test]
    fn chunk_short_document_is_single_chunk() {
        let doc = doc_with_words(50);
        let chunks = chunk_text(&doc, 80, 20).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].words.len(), 50);
    }

    #[test]
    fn chunk_empty_document_yields_nothing() {
        let doc = Document::new(meta(), String::new()).unwrap();
        assert!(chunk_text(&doc, 80, 20).unwrap().is_empty());
    }

    #[test]
    fn chunk_rejects_bad_params() {
        let doc = doc_with_words(100);
        assert!(chunk_text(&doc, 80, 80).is_err());
        assert!(chunk_text(&doc, 80, 0).is_err());
        assert!(chunk_text(&doc, 20, 80).is_err());
    }

    #[test]
    fn neighbors_at_boundaries() {
        let doc = doc_with_words(200);
        let chunks = chunk_text(&doc, 80, 20).unwrap();
        let mut cache = ChunkCache::new();
        cache.insert_document(&doc.doc_id, chunks).unwrap();

        let (p, n) = cache.neighbors(&doc.doc_id, 1).unwrap();
        assert_eq!(p.unwrap().index, 0);
        assert_eq!(n.unwrap().index, 2);

        let (p, n) = cache.neighbors(&doc.doc_id, 0).unwrap();
        assert!(p.is_none());
        assert_eq!(n.unwrap().index, 1);

        let (p, n) = cache.neighbors(&doc.doc_id, 2).unwrap();
        assert_eq!(p.unwrap().index, 1);
        assert!(n.is_none());

        assert!(cache.neighbors("nope", 0).is_err());
        assert!(cache.neighbors(&doc.doc_id, 3).is_err());
    }

    #[test]
    fn cache_is_write_once() {
        let doc = doc_with_words(10);
        let chunks = chunk_text(&doc, 8, 2).unwrap();
        let mut cache = ChunkCache::new();
        cache.insert_document(&doc.doc_id, chunks.clone()).unwrap();
        assert!(matches!(
            cache.insert_document(&doc.doc_id, chunks),
            Err(Error::DuplicateDocument(_))
        ));
    }

    #[test]
    fn cache_roundtrips_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let doc = doc_with_words(200);
        let chunks = chunk_text(&doc, 80, 20).unwrap();
        let mut cache = ChunkCache::new();
        cache.insert_document(&doc.doc_id, chunks.clone()).unwrap();
        cache.save(dir.path()).unwrap();

        let loaded = ChunkCache::load(dir.path()).unwrap();
        assert_eq!(loaded.chunks(&doc.doc_id).unwrap(), chunks.as_slice());
    }

    #[test]
    fn load_document_cleans_passthrough_text() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.txt");
        std::fs::write(&path, "we aim \u{201c}high\u{201d}\r\nand low").unwrap();
        let doc = load_document(&path, meta(), &PlainTextConverter).unwrap();
        assert_eq!(doc.text, "we aim \"high\" and low");
    }

    #[test]
    fn load_document_empty_file_is_ok() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        std::fs::write(&path, "").unwrap();
        let doc = load_document(&path, meta(), &PlainTextConverter).unwrap();
        assert!(doc.text.is_empty());
        assert!(chunk_text(&doc, 80, 20).unwrap().is_empty());
    }

    #[test]
    fn load_document_unreadable_file_errors() {
        let err = load_document(Path::new("/no/such/file.txt"), meta(), &PlainTextConverter)
            .unwrap_err();
        assert!(matches!(err, Error::Ingest { .. }));
    }

    #[test]
    fn command_converter_captures_stdout_and_failures() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pdf");
        std::fs::write(&path, "ignored").unwrap();

        let cat = CommandConverter::new("cat", vec!["{input}".into()]);
        assert_eq!(cat.convert(&path).unwrap(), "ignored");

        let fail = CommandConverter::new("false", vec![]);
        assert!(matches!(fail.convert(&path), Err(Error::Ingest { .. })));

        let empty = CommandConverter::new("true", vec![]);
        assert!(matches!(empty.convert(&path), Err(Error::Ingest { .. })));
    }

    #[test]
    fn meta_invariants_enforced() {
        let mut m = meta();
        m.publication_year = 1980;
        assert!(Document::new(m, "x".into()).is_err());
        let mut m = meta();
        m.company_id = String::new();
        assert!(Document::new(m, "x".into()).is_err());
    }
}
