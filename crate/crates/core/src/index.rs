//! Exact flat cosine index.
//!
//! Vectors are unit-normalized before they get here, so the score of an
//! entry is a plain dot product. Search is a full linear scan followed by a
//! sort on `(score desc, chunk_id asc)`.
//!
//! # File format
//!
//! All integers little-endian.
//!
//! ```text
//! magic      4 bytes  "CXRG"
//! version    u16      1
//! dim        u32
//! count      u64
//! vectors    count * dim * f32
//! meta_len   u64
//! metadata   meta_len bytes: one JSON object per line, line i for entry i
//!            {"chunk_id", "doc_id", "source_name", "page", "text"}
//! ```

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::EmbeddingVector;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"CXRG";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 8;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("entry {chunk_id}: dimension {got} does not match index dimension {expected}")]
    DimMismatch {
        chunk_id: String,
        expected: usize,
        got: usize,
    },
    #[error("duplicate chunk_id {0}")]
    Duplicate(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("corrupt index at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error("index file i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkMeta {
    pub doc_id: String,
    pub source_name: String,
    pub page: Option<u32>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry<F> {
    pub chunk_id: String,
    pub vector: EmbeddingVector<F>,
    pub meta: ChunkMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit<F> {
    pub chunk_id: String,
    pub score: F,
    pub rank: usize,
    #[serde(flatten)]
    pub meta: ChunkMeta,
}

/// Orders `(score, chunk_id)` pairs best-first.
pub fn hit_order<F: Scalar>(a: (F, &str), b: (F, &str)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.1.cmp(b.1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex<F> {
    dim: usize,
    entries: Vec<IndexEntry<F>>,
    ids: HashSet<String>,
}

impl<F: Scalar> FlatIndex<F> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
            ids: HashSet::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry<F>] {
        &self.entries
    }

    /// Adds a batch of entries. Either all are added or none.
    pub fn add(&mut self, entries: Vec<IndexEntry<F>>) -> Result<usize, IndexError> {
        let mut batch_ids = HashSet::with_capacity(entries.len());
        for e in &entries {
            if e.vector.dim() != self.dim {
                return Err(IndexError::DimMismatch {
                    chunk_id: e.chunk_id.clone(),
                    expected: self.dim,
                    got: e.vector.dim(),
                });
            }
            if self.ids.contains(&e.chunk_id) || !batch_ids.insert(e.chunk_id.as_str()) {
                return Err(IndexError::Duplicate(e.chunk_id.clone()));
            }
        }
        self.ids.extend(entries.iter().map(|e| e.chunk_id.clone()));
        self.entries.extend(entries);
        Ok(self.entries.len())
    }

    /// The `k` highest-cosine entries, best first. An empty index yields no hits.
    pub fn search_top_k(&self, query: &EmbeddingVector<F>, k: usize) -> Result<Vec<SearchHit<F>>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if self.is_empty() {
            return Ok(Vec::new());
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimMismatch {
                chunk_id: "<query>".into(),
                expected: self.dim,
                got: query.dim(),
            });
        }

        let mut scored: Vec<(F, usize)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.vector.cosine(query), i))
            .collect();
        let cmp = |a: &(F, usize), b: &(F, usize)| {
            hit_order(
                (a.0, self.entries[a.1].chunk_id.as_str()),
                (b.0, self.entries[b.1].chunk_id.as_str()),
            )
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);

        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(rank, (score, i))| {
                let e = &self.entries[i];
                SearchHit {
                    chunk_id: e.chunk_id.clone(),
                    score,
                    rank: rank + 1,
                    meta: e.meta.clone(),
                }
            })
            .collect())
    }
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    chunk_id: String,
    doc_id: String,
    source_name: String,
    page: Option<u32>,
    text: String,
}

impl FlatIndex<f32> {
    /// Serializes the index into the on-disk layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut meta = Vec::new();
        for e in &self.entries {
            let line = MetaLine {
                chunk_id: e.chunk_id.clone(),
                doc_id: e.meta.doc_id.clone(),
                source_name: e.meta.source_name.clone(),
                page: e.meta.page,
                text: e.meta.text.clone(),
            };
            serde_json::to_writer(&mut meta, &line).expect("metadata serializes");
            meta.push(b'\n');
        }

        let mut out = Vec::with_capacity(HEADER_LEN + self.len() * self.dim * 4 + 8 + meta.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for e in &self.entries {
            for v in e.vector.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out
    }

    /// Writes the index to `path` via a temporary file and rename, so readers
    /// never see a partial file. Returns the number of bytes written.
    pub fn save(&self, path: &Path) -> Result<u64, IndexError> {
        let bytes = self.to_bytes();
        let tmp = path.with_extension(format!(
            "{}.tmp",
            path.extension().and_then(|e| e.to_str()).unwrap_or("idx")
        ));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(bytes.len() as u64)
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(r.corrupt_at(0, format!("bad magic {magic:?}")));
        }
        let version = u16::from_le_bytes(r.array("version")?);
        if version != FORMAT_VERSION {
            return Err(r.corrupt_at(4, format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(r.array("dim")?) as usize;
        if dim == 0 {
            return Err(r.corrupt_at(6, "dim is zero".into()));
        }
        let count_at = r.pos;
        let count = u64::from_le_bytes(r.array("count")?);
        let vec_bytes = count
            .checked_mul(dim as u64)
            .and_then(|n| n.checked_mul(4))
            .filter(|&n| n <= r.remaining() as u64)
            .ok_or_else(|| r.corrupt_at(count_at, format!("count {count} x dim {dim} exceeds file size")))?;
        let count = count as usize;

        let block = r.take(vec_bytes as usize, "vector block")?;
        let mut vectors: Vec<Vec<f32>> = block
            .chunks_exact(dim * 4)
            .map(|row| {
                row.chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect()
            })
            .collect();

        let meta_len_at = r.pos;
        let meta_len = u64::from_le_bytes(r.array("metadata length")?);
        if meta_len != r.remaining() as u64 {
            return Err(r.corrupt_at(
                meta_len_at,
                format!("metadata length {meta_len} but {} bytes remain", r.remaining()),
            ));
        }
        let meta_start = r.pos;
        let meta = r.take(meta_len as usize, "metadata")?;

        let mut index = FlatIndex::new(dim);
        let mut entries = Vec::with_capacity(count);
        let mut line_start = 0usize;
        for (i, vector) in vectors.drain(..).enumerate() {
            let offset = (meta_start + line_start) as u64;
            let rest = &meta[line_start..];
            let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| IndexError::Corrupt {
                offset,
                reason: format!("metadata line {i} missing"),
            })?;
            let line: MetaLine = serde_json::from_slice(&rest[..end]).map_err(|e| IndexError::Corrupt {
                offset,
                reason: format!("metadata line {i}: {e}"),
            })?;
            line_start += end + 1;
            entries.push(IndexEntry {
                chunk_id: line.chunk_id,
                vector: EmbeddingVector::from_unit(vector),
                meta: ChunkMeta {
                    doc_id: line.doc_id,
                    source_name: line.source_name,
                    page: line.page,
                    text: line.text,
                },
            });
        }
        if line_start != meta.len() {
            return Err(IndexError::Corrupt {
                offset: (meta_start + line_start) as u64,
                reason: "trailing metadata after last entry".into(),
            });
        }
        index.add(entries).map_err(|e| IndexError::Corrupt {
            offset: meta_start as u64,
            reason: e.to_string(),
        })?;
        Ok(index)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], IndexError> {
        if self.remaining() < n {
            return Err(self.corrupt_at(
                self.pos,
                format!("truncated: {what} needs {n} bytes, {} remain", self.remaining()),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N], IndexError> {
        Ok(self.take(N, what)?.try_into().expect("exact length"))
    }

    fn corrupt_at(&self, offset: usize, reason: String) -> IndexError {
        IndexError::Corrupt {
            offset: offset as u64,
            reason,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, v: Vec<f32>) -> IndexEntry<f32> {
        IndexEntry {
            chunk_id: id.into(),
            vector: EmbeddingVector::normalized(v).unwrap(),
            meta: ChunkMeta {
                doc_id: "doc".into(),
                source_name: "FAO".into(),
                page: Some(1),
                text: format!("text of {id}"),
            },
        }
    }

    fn three() -> FlatIndex<f32> {
        let mut idx = FlatIndex::new(3);
        let n = idx
            .add(vec![
                entry("a", vec![1.0, 0.0, 0.0]),
                entry("b", vec![0.0, 1.0, 0.0]),
                entry("c", vec![1.0, 1.0, 0.0]),
            ])
            .unwrap();
        assert_eq!(n, 3);
        idx
    }

    #[test]
    fn add_rejects_dim_mismatch_and_duplicates() {
        let mut idx = three();
        let err = idx.add(vec![entry("d", vec![1.0, 0.0])]).unwrap_err();
        assert!(matches!(err, IndexError::DimMismatch { ref chunk_id, expected: 3, got: 2 } if chunk_id == "d"));
        let err = idx.add(vec![entry("z", vec![0.0, 0.0, 1.0]), entry("a", vec![1.0, 0.0, 0.0])]).unwrap_err();
        assert!(matches!(err, IndexError::Duplicate(ref id) if id == "a"));
        assert_eq!(idx.len(), 3);
        let err = idx.add(vec![entry("q", vec![0.0, 0.0, 1.0]), entry("q", vec![0.0, 0.0, 1.0])]).unwrap_err();
        assert!(matches!(err, IndexError::Duplicate(_)));
        assert_eq!(idx.len(), 3);
    }

    #[test]
    fn self_match_ranks_first() {
        let idx = three();
        let q = EmbeddingVector::normalized(vec![0.0, 1.0, 0.0]).unwrap();
        let hits = idx.search_top_k(&q, 2).unwrap();
        assert_eq!(hits[0].chunk_id, "b");
        assert!((hits[0].score - 1.0).abs() < 1e-5);
        assert_eq!(hits[0].rank, 1);
        assert_eq!(hits[1].chunk_id, "c");
        assert_eq!(hits[1].rank, 2);
    }

    #[test]
    fn ties_break_by_chunk_id() {
        let mut idx = FlatIndex::new(2);
        idx.add(vec![entry("y", vec![1.0, 0.0]), entry("x", vec![1.0, 0.0]), entry("w", vec![0.0, 1.0])])
            .unwrap();
        let q = EmbeddingVector::normalized(vec![1.0, 0.0]).unwrap();
        let ids: Vec<_> = idx.search_top_k(&q, 3).unwrap().into_iter().map(|h| h.chunk_id).collect();
        assert_eq!(ids, vec!["x", "y", "w"]);
    }

    #[test]
    fn k_larger_than_index_and_invalid_k() {
        let idx = three();
        let q = EmbeddingVector::normalized(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(idx.search_top_k(&q, 10).unwrap().len(), 3);
        assert!(matches!(idx.search_top_k(&q, 0), Err(IndexError::InvalidK)));
        assert!(FlatIndex::<f32>::new(3).search_top_k(&q, 4).unwrap().is_empty());
    }

    #[test]
    fn works_in_f64() {
        let mut idx = FlatIndex::<f64>::new(2);
        idx.add(vec![IndexEntry {
            chunk_id: "a".into(),
            vector: EmbeddingVector::normalized(vec![1.0, 1.0]).unwrap(),
            meta: ChunkMeta { doc_id: "d".into(), source_name: "s".into(), page: None, text: "t".into() },
        }])
        .unwrap();
        let q = EmbeddingVector::normalized(vec![1.0, 0.0]).unwrap();
        let hit = &idx.search_top_k(&q, 1).unwrap()[0];
        assert!((hit.score - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn round_trip_bytes() {
        let idx = three();
        let back = FlatIndex::from_bytes(&idx.to_bytes()).unwrap();
        assert_eq!(back, idx);
    }

    #[test]
    fn empty_round_trip() {
        let idx = FlatIndex::<f32>::new(8);
        let bytes = idx.to_bytes();
        assert_eq!(bytes.len(), HEADER_LEN + 8);
        let back = FlatIndex::from_bytes(&bytes).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.dim(), 8);
    }

    #[test]
    fn header_layout() {
        let bytes = three().to_bytes();
        assert_eq!(&bytes[0..4], b"CXRG");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &[3, 0, 0, 0]);
        assert_eq!(&bytes[10..18], &[3, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&bytes[18..22], &1.0f32.to_le_bytes());
    }

    #[test]
    fn corrupt_files_are_rejected_with_offsets() {
        let good = three().to_bytes();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(FlatIndex::from_bytes(&bad), Err(IndexError::Corrupt { offset: 0, .. })));

        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(FlatIndex::from_bytes(&bad), Err(IndexError::Corrupt { offset: 4, .. })));

        let mut bad = good.clone();
        bad[10] = 200;
        assert!(matches!(FlatIndex::from_bytes(&bad), Err(IndexError::Corrupt { offset: 10, .. })));

        for cut in [3, 17, 30, good.len() - 1] {
            assert!(matches!(FlatIndex::from_bytes(&good[..cut]), Err(IndexError::Corrupt { .. })), "cut {cut}");
        }

        let mut bad = good.clone();
        bad.push(b'x');
        assert!(FlatIndex::from_bytes(&bad).is_err());
    }
}
