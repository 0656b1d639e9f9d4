//! Plain-text corpus loading and fixed-length overlapping chunking.
//!
//! Offsets and lengths are counted in Unicode scalar values, never bytes.
//! Chunks are hard cuts at exact offsets; the final chunk of a document is
//! right-anchored so that every chunk of a long document has the same length.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

pub const DEFAULT_CHUNK_SIZE: usize = 600;
pub const DEFAULT_CHUNK_OVERLAP: usize = 50;

const SIDECAR_SUFFIX: &str = ".meta.json";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("chunk_overlap ({overlap}) must be smaller than chunk_size ({size})")]
    InvalidChunking { size: usize, overlap: usize },
    #[error("corpus directory {path}: {source}")]
    Directory { path: PathBuf, source: io::Error },
    #[error("{} file(s) failed to load: {}", .0.len(), summarize(.0))]
    Load(Vec<LoadFailure>),
    #[error("document {doc_id}: {reason}")]
    InvalidDocument { doc_id: String, reason: String },
}

fn summarize(failures: &[LoadFailure]) -> String {
    failures
        .iter()
        .map(|f| f.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// One file that could not be turned into a [`Document`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}: {reason}", .path.display())]
pub struct LoadFailure {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub source_name: String,
    pub text: String,
    /// `(char_offset, page_number)` pairs marking page starts.
    #[serde(default)]
    pub page_map: Option<Vec<(usize, u32)>>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, source_name: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            source_name: source_name.into(),
            text: text.into(),
            page_map: None,
        }
    }

    pub fn with_page_map(mut self, page_map: Vec<(usize, u32)>) -> Self {
        self.page_map = Some(page_map);
        self
    }

    /// Length in characters.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Checks the page map: offsets strictly increasing and within the text.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let Some(map) = &self.page_map else {
            return Ok(());
        };
        let len = self.char_len();
        for (i, &(offset, _)) in map.iter().enumerate() {
            if offset > len {
                return Err(self.invalid(format!(
                    "page_map[{i}] offset {offset} beyond text length {len}"
                )));
            }
            if i > 0 && offset <= map[i - 1].0 {
                return Err(self.invalid(format!("page_map[{i}] offset {offset} not strictly increasing")));
            }
        }
        Ok(())
    }

    /// Page containing character `offset`, if the page map covers it.
    pub fn page_at(&self, offset: usize) -> Option<u32> {
        let map = self.page_map.as_ref()?;
        let idx = map.partition_point(|&(start, _)| start <= offset);
        idx.checked_sub(1).map(|i| map[i].1)
    }

    fn invalid(&self, reason: String) -> CorpusError {
        CorpusError::InvalidDocument {
            doc_id: self.doc_id.clone(),
            reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub source_name: String,
    pub page: Option<u32>,
    pub char_start: usize,
    pub char_end: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingConfig {
    pub chunk_size: usize,
    pub chunk_overlap: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            chunk_size: DEFAULT_CHUNK_SIZE,
            chunk_overlap: DEFAULT_CHUNK_OVERLAP,
        }
    }
}

impl ChunkingConfig {
    pub fn new(chunk_size: usize, chunk_overlap: usize) -> Result<Self, CorpusError> {
        let config = Self {
            chunk_size,
            chunk_overlap,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.chunk_overlap >= self.chunk_size {
            return Err(CorpusError::InvalidChunking {
                size: self.chunk_size,
                overlap: self.chunk_overlap,
            });
        }
        Ok(())
    }

    fn stride(&self) -> usize {
        self.chunk_size - self.chunk_overlap
    }

    /// Number of chunks a document of `len` characters produces.
    pub fn chunk_count(&self, len: usize) -> usize {
        match len {
            0 => 0,
            n if n <= self.chunk_size => 1,
            n => (n - self.chunk_size).div_ceil(self.stride()) + 1,
        }
    }

    /// Character span of every chunk of a `len`-character document.
    pub fn spans(&self, len: usize) -> Vec<(usize, usize)> {
        let count = self.chunk_count(len);
        if count <= 1 {
            return (0..count).map(|_| (0, len)).collect();
        }
        let mut spans: Vec<_> = (0..count - 1)
            .map(|i| {
                let start = i * self.stride();
                (start, start + self.chunk_size)
            })
            .collect();
        spans.push((len - self.chunk_size, len));
        spans
    }
}

/// Splits one document into chunks.
pub fn chunk_text(doc: &Document, config: ChunkingConfig) -> Result<Vec<Chunk>, CorpusError> {
    config.validate()?;
    doc.validate()?;

    // byte offset of every char boundary, including the end
    let boundaries: Vec<usize> = doc
        .text
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(doc.text.len()))
        .collect();
    let len = boundaries.len() - 1;

    Ok(config
        .spans(len)
        .into_iter()
        .enumerate()
        .map(|(ordinal, (start, end))| Chunk {
            chunk_id: chunk_id(&doc.doc_id, ordinal),
            doc_id: doc.doc_id.clone(),
            source_name: doc.source_name.clone(),
            page: doc.page_at(start),
            char_start: start,
            char_end: end,
            text: doc.text[boundaries[start]..boundaries[end]].to_string(),
        })
        .collect())
}

pub fn chunk_id(doc_id: &str, ordinal: usize) -> String {
    format!("{doc_id}#{ordinal:05}")
}

#[derive(Debug, Default, Deserialize)]
struct Sidecar {
    source_name: Option<String>,
    page_map: Option<Vec<(usize, u32)>>,
}

/// Documents read from a directory plus the files that failed.
#[derive(Debug, Default)]
pub struct LoadedCorpus {
    pub documents: Vec<Document>,
    pub failures: Vec<LoadFailure>,
}

/// Loads every `.txt`/`.md` file under `dir` (recursively), in lexicographic
/// path order.
///
/// `doc_id` is the path relative to `dir` with `/` separators. A sidecar
/// `<stem>.meta.json` next to a file may supply `source_name` and
/// `page_map`; without one, `source_name` defaults to the file stem.
/// Per-file problems are collected in [`LoadedCorpus::failures`].
pub fn load_documents(dir: &Path) -> Result<LoadedCorpus, CorpusError> {
    let dir_err = |source| CorpusError::Directory {
        path: dir.to_path_buf(),
        source,
    };
    if !fs::metadata(dir).map_err(dir_err)?.is_dir() {
        return Err(dir_err(io::Error::new(io::ErrorKind::NotADirectory, "not a directory")));
    }

    let mut files = Vec::new();
    collect_files(dir, &mut files).map_err(dir_err)?;
    files.sort();

    let mut loaded = LoadedCorpus::default();
    for path in files {
        match load_one(dir, &path) {
            Ok(doc) => loaded.documents.push(doc),
            Err(reason) => loaded.failures.push(LoadFailure { path, reason }),
        }
    }
    Ok(loaded)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if matches!(path.extension().and_then(|e| e.to_str()), Some("txt" | "md")) {
            out.push(path);
        }
    }
    Ok(())
}

fn load_one(root: &Path, path: &Path) -> Result<Document, String> {
    let bytes = fs::read(path).map_err(|e| format!("unreadable: {e}"))?;
    let text = String::from_utf8(bytes)
        .map_err(|e| format!("invalid UTF-8 at byte {}", e.utf8_error().valid_up_to()))?;

    let rel = path.strip_prefix(root).unwrap_or(path);
    let doc_id = rel
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/");
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| doc_id.clone());

    let sidecar_path = path.with_file_name(format!("{stem}{SIDECAR_SUFFIX}"));
    let sidecar = match fs::read_to_string(&sidecar_path) {
        Ok(raw) => serde_json::from_str::<Sidecar>(&raw)
            .map_err(|e| format!("sidecar {}: {e}", sidecar_path.display()))?,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Sidecar::default(),
        Err(e) => return Err(format!("sidecar {}: {e}", sidecar_path.display())),
    };

    let doc = Document {
        doc_id,
        source_name: sidecar.source_name.unwrap_or(stem),
        text,
        page_map: sidecar.page_map,
    };
    doc.validate().map_err(|e| e.to_string())?;
    Ok(doc)
}

/// Result of [`ingest_corpus`].
#[derive(Debug, Clone)]
pub struct IngestedCorpus {
    pub documents: usize,
    pub chunks: Vec<Chunk>,
}

/// Loads and chunks a directory. Any per-file load failure aborts ingestion.
pub fn ingest_corpus(dir: &Path, config: ChunkingConfig) -> Result<IngestedCorpus, CorpusError> {
    config.validate()?;
    let loaded = load_documents(dir)?;
    if !loaded.failures.is_empty() {
        return Err(CorpusError::Load(loaded.failures));
    }
    chunk_documents(&loaded.documents, config)
}

/// Chunks already-loaded documents, concatenating in document order.
pub fn chunk_documents(docs: &[Document], config: ChunkingConfig) -> Result<IngestedCorpus, CorpusError> {
    let mut seen = HashSet::new();
    let mut chunks = Vec::new();
    for doc in docs {
        if !seen.insert(doc.doc_id.as_str()) {
            return Err(doc.invalid("duplicate doc_id".into()));
        }
        if doc.text.is_empty() {
            warn!(doc_id = %doc.doc_id, "empty document produces no chunks");
            continue;
        }
        chunks.extend(chunk_text(doc, config)?);
    }
    tracing::info!(documents = docs.len(), chunks = chunks.len(), "corpus chunked");
    Ok(IngestedCorpus {
        documents: docs.len(),
        chunks,
    })
}
