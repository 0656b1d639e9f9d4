use std::cmp::Ordering;
use std::time::Instant;

use krishi::gateway::EmbeddingVector;
use krishi::index::{ChunkMeta, FlatIndex, IndexEntry, IndexError};
use krishi::{Scalar, VectorIndex};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_unit<F: Scalar>(rng: &mut ChaCha8Rng, dim: usize) -> EmbeddingVector<F> {
    loop {
        let v: Vec<F> = (0..dim).map(|_| F::from_f64(rng.random_range(-1.0..1.0)).unwrap()).collect();
        if let Ok(e) = EmbeddingVector::normalized(v) {
            return e;
        }
    }
}

fn meta(i: usize) -> ChunkMeta {
    ChunkMeta {
        doc_id: format!("doc{}.txt", i % 7),
        source_name: format!("SRC{}", i % 3),
        page: Some((i % 11) as u32 + 1),
        text: format!("chunk text {i} with বাংলা"),
    }
}

fn random_index<F: Scalar>(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> FlatIndex<F> {
    let mut index = FlatIndex::new(dim);
    let entries = (0..n)
        .map(|i| IndexEntry {
            chunk_id: format!("doc{}.txt#{i:05}", i % 7),
            vector: random_unit(rng, dim),
            meta: meta(i),
        })
        .collect();
    index.add(entries).unwrap();
    index
}

/// Independent scan in f64: score every entry, full sort, take k.
fn naive<F: Scalar>(index: &FlatIndex<F>, q: &EmbeddingVector<F>, k: usize) -> Vec<(String, f64)> {
    let qv: Vec<f64> = q.values().iter().map(|x| x.to_f64().unwrap()).collect();
    let mut all: Vec<(String, f64)> = index
        .entries()
        .iter()
        .map(|e| {
            let s: f64 = e.vector.values().iter().zip(&qv).map(|(a, b)| a.to_f64().unwrap() * b).sum();
            (e.chunk_id.clone(), s.clamp(-1.0, 1.0))
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

fn assert_matches_oracle<F: Scalar>(index: &FlatIndex<F>, q: &EmbeddingVector<F>, k: usize) {
    let got = index.search_top_k(q, k).unwrap();
    let want = naive(index, q, k);
    assert_eq!(got.len(), want.len());
    for (i, (g, w)) in got.iter().zip(&want).enumerate() {
        assert_eq!(g.rank, i + 1);
        assert!((g.score.to_f64().unwrap() - w.1).abs() <= 1e-6, "score {} vs {}", g.score.to_f64().unwrap(), w.1);
        // Near-ties may legitimately order differently across precisions.
        let tied = want.iter().any(|o| o.0 != w.0 && (o.1 - w.1).abs() <= 1e-6);
        if !tied {
            assert_eq!(g.chunk_id, w.0);
        }
    }
}

#[test]
fn top_k_matches_naive_scan_f32() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let index: VectorIndex = random_index(&mut rng, 1000, 384);
    for _ in 0..100 {
        let q = random_unit(&mut rng, 384);
        assert_matches_oracle(&index, &q, 5);
    }
    assert!(started.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn top_k_matches_naive_scan_f64() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let index: FlatIndex<f64> = random_index(&mut rng, 300, 64);
    for _ in 0..30 {
        let q = random_unit(&mut rng, 64);
        assert_matches_oracle(&index, &q, 5);
    }
}

#[test]
fn k_larger_than_index_returns_everything() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let index: VectorIndex = random_index(&mut rng, 3, 16);
    let q = random_unit(&mut rng, 16);
    assert_eq!(index.search_top_k(&q, 10).unwrap().len(), 3);
    assert!(matches!(index.search_top_k(&q, 0), Err(IndexError::InvalidK)));
}

#[test]
fn failed_batch_leaves_index_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut index: VectorIndex = random_index(&mut rng, 5, 16);
    let good = IndexEntry {
        chunk_id: "new#00000".into(),
        vector: random_unit(&mut rng, 16),
        meta: meta(0),
    };
    let bad = IndexEntry {
        chunk_id: "new#00001".into(),
        vector: random_unit(&mut rng, 8),
        meta: meta(1),
    };
    assert!(matches!(index.add(vec![good.clone(), bad]), Err(IndexError::DimMismatch { .. })));
    assert_eq!(index.len(), 5);
    let dup = IndexEntry {
        chunk_id: "doc0.txt#00000".into(),
        ..good
    };
    assert!(matches!(index.add(vec![dup]), Err(IndexError::Duplicate { .. })));
    assert_eq!(index.len(), 5);
}

#[test]
fn persistence_round_trip_655_entries() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let index: VectorIndex = random_index(&mut rng, 655, 384);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("krishi.idx");
    let bytes = index.save(&path).unwrap();
    assert_eq!(bytes, std::fs::metadata(&path).unwrap().len());
    let loaded = VectorIndex::load(&path).unwrap();
    assert_eq!(loaded.len(), 655);
    assert_eq!(loaded.entries(), index.entries());
    for _ in 0..50 {
        let q = random_unit(&mut rng, 384);
        assert_eq!(loaded.search_top_k(&q, 4).unwrap(), index.search_top_k(&q, 4).unwrap());
    }
    assert!(started.elapsed().as_secs_f64() < 2.0);
}

#[test]
fn truncated_file_reports_offset() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let index: VectorIndex = random_index(&mut rng, 4, 16);
    let bytes = index.to_bytes();
    for cut in [0, 3, 10, 30, bytes.len() - 1] {
        match VectorIndex::from_bytes(&bytes[..cut]) {
            Err(IndexError::Corrupt { offset, .. }) => assert!(offset <= cut as u64),
            other => panic!("cut {cut}: expected corrupt, got {other:?}"),
        }
    }
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(VectorIndex::from_bytes(&bad_magic), Err(IndexError::Corrupt { offset: 0, .. })));
}

#[test]
fn missing_file_is_io_error() {
    assert!(matches!(
        VectorIndex::load(std::path::Path::new("/no/such/index.idx")),
        Err(IndexError::Io { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_load_preserves_search(seed in any::<u64>(), n in 1usize..40, dim in 1usize..24, k in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let index: VectorIndex = random_index(&mut rng, n, dim);
        let restored = VectorIndex::from_bytes(&index.to_bytes()).unwrap();
        prop_assert_eq!(restored.entries(), index.entries());
        let q = random_unit(&mut rng, dim);
        prop_assert_eq!(restored.search_top_k(&q, k).unwrap(), index.search_top_k(&q, k).unwrap());
    }

    #[test]
    fn results_sorted_and_bounded(seed in any::<u64>(), n in 1usize..60, k in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let index: VectorIndex = random_index(&mut rng, n, 12);
        let q = random_unit(&mut rng, 12);
        let hits = index.search_top_k(&q, k).unwrap();
        prop_assert_eq!(hits.len(), k.min(n));
        for w in hits.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].chunk_id < w[1].chunk_id));
        }
        prop_assert!(hits.iter().all(|h| (-1.0..=1.0).contains(&h.score)));
    }
}
