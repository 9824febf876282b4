//! Immutable passage-vector store with exact top-k cosine search.
//!
//! Search is a brute-force scan: per-row norms are precomputed, dot
//! products accumulate in four f32 lanes and reduce in f64, and a bounded
//! min-heap keeps the current best k. Ties break by ascending insertion
//! order. Rows whose norm is zero always score 0.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::infer::{latency_stats, LatencyStats};
use crate::model::{
    read_bytes, read_exact, read_f32s, read_u32, read_u64, write_bytes, write_f32s,
    EmbeddingModel,
};

pub const STORE_MAGIC: [u8; 4] = *b"PSTO";
pub const STORE_VERSION: u32 = 1;

/// Ordered collection of (id, vector) rows with precomputed norms.
pub struct VectorStore {
    ids: Vec<String>,
    id_index: HashMap<String, u32>,
    data: Vec<f32>,
    norms: Vec<f32>,
    vector_size: usize,
}

/// One ranked hit.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub pid: String,
    /// Cosine similarity in [-1, 1].
    pub score: f32,
    /// 1-based.
    pub rank: u32,
}

/// Ranked hits, scores non-increasing, ranks consecutive from 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchResult {
    pub hits: Vec<SearchHit>,
}

impl SearchResult {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    /// Rank of `pid` if it appears among the hits.
    pub fn rank_of(&self, pid: &str) -> Option<u32> {
        self.hits.iter().find(|h| h.pid == pid).map(|h| h.rank)
    }
}

impl VectorStore {
    /// Build from parallel ids and row-major vector data.
    pub fn build(ids: Vec<String>, data: Vec<f32>, vector_size: usize) -> Result<VectorStore> {
        if vector_size == 0 {
            return Err(Error::Config("vector_size must be at least 1".into()));
        }
        if data.len() != ids.len() * vector_size {
            return Err(Error::Data(format!(
                "store data has {} values, expected {} ids x {} dims",
                data.len(),
                ids.len(),
                vector_size
            )));
        }
        let mut id_index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if id_index.insert(id.clone(), i as u32).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        let norms = data
            .chunks_exact(vector_size)
            .map(|row| {
                let sq: f64 = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum();
                sq.sqrt() as f32
            })
            .collect();
        Ok(VectorStore {
            ids,
            id_index,
            data,
            norms,
            vector_size,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn vector_size(&self) -> usize {
        self.vector_size
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.id_index.contains_key(id)
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.vector_size..(i + 1) * self.vector_size]
    }

    pub fn vector_of(&self, id: &str) -> Option<&[f32]> {
        self.id_index.get(id).map(|&i| self.vector(i as usize))
    }

    pub fn norm(&self, i: usize) -> f32 {
        self.norms[i]
    }

    /// Exact top-k by cosine similarity over the whole store.
    pub fn top_k(&self, query: &[f32], k: usize) -> Result<SearchResult> {
        self.top_k_prefix(query, k, self.len())
    }

    /// Exact top-k over only the first `n` rows (for scaling benchmarks).
    pub fn top_k_prefix(&self, query: &[f32], k: usize, n: usize) -> Result<SearchResult> {
        if query.len() != self.vector_size {
            return Err(Error::Data(format!(
                "query has dimension {}, store has {}",
                query.len(),
                self.vector_size
            )));
        }
        let n = n.min(self.len());
        let query_norm = l2_norm(query);
        if query_norm == 0.0 {
            return Err(Error::Data("query vector has zero norm".into()));
        }
        let k = k.min(n);
        if k == 0 {
            return Ok(SearchResult::default());
        }

        let mut heap: BinaryHeap<std::cmp::Reverse<Candidate>> = BinaryHeap::with_capacity(k + 1);
        for i in 0..n {
            let score = self.score_row(i, query, query_norm);
            let candidate = Candidate {
                score,
                index: i as u32,
            };
            if heap.len() < k {
                heap.push(std::cmp::Reverse(candidate));
            } else if candidate > heap.peek().expect("heap is non-empty").0 {
                heap.pop();
                heap.push(std::cmp::Reverse(candidate));
            }
        }

        let hits = heap
            .into_sorted_vec()
            .into_iter()
            .enumerate()
            .map(|(i, std::cmp::Reverse(c))| SearchHit {
                pid: self.ids[c.index as usize].clone(),
                score: c.score as f32,
                rank: (i + 1) as u32,
            })
            .collect();
        Ok(SearchResult { hits })
    }

    /// Guarded cosine of the query against row `i`: zero-norm rows score 0.
    fn score_row(&self, i: usize, query: &[f32], query_norm: f64) -> f64 {
        let norm = f64::from(self.norms[i]);
        if norm == 0.0 {
            return 0.0;
        }
        dot_f64(self.vector(i), query) / (norm * query_norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    score: f64,
    index: u32,
}

impl Eq for Candidate {}

// Higher score is better; on equal scores the earlier-inserted row wins.
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Four-lane f32 accumulation with an f64 final reduction.
pub(crate) fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0f32;
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    (f64::from(acc[0]) + f64::from(acc[1])) + (f64::from(acc[2]) + f64::from(acc[3])) + f64::from(tail)
}

fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// Cosine similarity; both vectors must be nonzero and equal-dimensional.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::Data(format!(
            "cosine of mismatched dimensions {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Data("cosine of a zero-norm vector".into()));
    }
    Ok((dot_f64(a, b) / (na * nb)) as f32)
}

/// Store of all passage vectors in a trained model, in document-table
/// order. Passage keys carry the `p_` prefix; question keys are skipped.
pub fn passage_store(model: &EmbeddingModel) -> Result<VectorStore> {
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (i, key) in model.doc_keys().iter().enumerate() {
        if key.starts_with("p_") {
            ids.push(key.clone());
            data.extend_from_slice(model.doc_vectors.row(i));
        }
    }
    if ids.is_empty() {
        return Err(Error::Data(
            "model's document table holds no passage keys".into(),
        ));
    }
    VectorStore::build(ids, data, model.dim())
}

/// Write the store file: magic, version, dimensions, id table, rows.
pub fn save_store(store: &VectorStore, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&STORE_MAGIC)?;
    out.write_all(&STORE_VERSION.to_le_bytes())?;
    out.write_all(&(store.vector_size as u32).to_le_bytes())?;
    out.write_all(&(store.len() as u64).to_le_bytes())?;
    for id in &store.ids {
        write_bytes(&mut out, id.as_bytes())?;
    }
    write_f32s(&mut out, &store.data)?;
    out.flush()?;
    Ok(())
}

pub fn load_store(path: &Path) -> Result<VectorStore> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut input, &mut magic, "store magic")?;
    if magic != STORE_MAGIC {
        return Err(Error::BadMagic {
            expected: STORE_MAGIC,
            found: magic,
        });
    }
    let version = read_u32(&mut input, "store version")?;
    if version != STORE_VERSION {
        return Err(Error::UnsupportedVersion {
            expected: STORE_VERSION,
            found: version,
        });
    }
    let vector_size = read_u32(&mut input, "store vector size")? as usize;
    if vector_size == 0 {
        return Err(Error::Data("store vector size is zero".into()));
    }
    let count = read_u64(&mut input, "store row count")? as usize;

    let mut ids = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        let bytes = read_bytes(&mut input, "store id")?;
        ids.push(
            String::from_utf8(bytes).map_err(|_| Error::Data("store id is not valid UTF-8".into()))?,
        );
    }
    let len = count
        .checked_mul(vector_size)
        .ok_or_else(|| Error::Data("store dimensions overflow".into()))?;
    let mut data = Vec::new();
    data.try_reserve_exact(len)
        .map_err(|_| Error::Data(format!("store of {len} floats does not fit in memory")))?;
    data.resize(len, 0.0);
    read_f32s(&mut input, &mut data, "store rows")?;

    let mut probe = [0u8; 1];
    if input.read(&mut probe)? != 0 {
        return Err(Error::Data("trailing bytes after store payload".into()));
    }
    VectorStore::build(ids, data, vector_size)
}

/// Latency per prefix size, for scaling curves.
#[derive(Debug, Clone, Serialize)]
pub struct SizeLatency {
    pub n: usize,
    pub stats: LatencyStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchBench {
    pub k: usize,
    pub sizes: Vec<SizeLatency>,
}

/// Time top-k scans at the given store-prefix sizes (the full store when
/// `prefix_sizes` is empty). Single worker.
pub fn bench_search(
    store: &VectorStore,
    queries: &[Vec<f32>],
    k: usize,
    prefix_sizes: &[usize],
) -> Result<SearchBench> {
    if queries.len() < 10 {
        return Err(Error::Config(format!(
            "search benchmark needs at least 10 queries, got {}",
            queries.len()
        )));
    }
    let full = vec![store.len()];
    let sizes: &[usize] = if prefix_sizes.is_empty() {
        &full
    } else {
        prefix_sizes
    };

    let mut out = Vec::with_capacity(sizes.len());
    for &n in sizes {
        if n == 0 || n > store.len() {
            return Err(Error::Config(format!(
                "prefix size {n} outside store of {} rows",
                store.len()
            )));
        }
        let mut samples_ms = Vec::with_capacity(queries.len());
        for query in queries {
            let start = Instant::now();
            store.top_k_prefix(query, k, n)?;
            samples_ms.push(start.elapsed().as_secs_f64() * 1e3);
        }
        out.push(SizeLatency {
            n,
            stats: latency_stats(samples_ms, 1),
        });
    }
    Ok(SearchBench { k, sizes: out })
}
