use std::path::Path;
use std::time::Instant;

use pvec::model::EmbeddingModel;
use pvec::store::VectorStore;
use pvec::{infer, seed, store, Error, Result};
use rand::Rng;
use serde_json::json;

use crate::config::RunConfig;
use crate::meta;

pub fn run(
    run: &RunConfig,
    target: &str,
    model_path: Option<&Path>,
    vocab_path: Option<&Path>,
    store_path: Option<&Path>,
    data: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let started = Instant::now();
    let (bench_infer, bench_search) = match target {
        "infer" => (true, false),
        "search" => (false, true),
        "both" => (true, true),
        other => {
            return Err(Error::Config(format!(
                "unknown bench target {other:?} (expected infer, search or both)"
            )))
        }
    };

    let model = match model_path {
        Some(path) => Some(super::load_model(path, vocab_path)?),
        None => None,
    };
    let mut report = serde_json::Map::new();

    if bench_infer {
        let model = model.as_ref().ok_or_else(|| {
            Error::Config("bench target infer needs --model".into())
        })?;
        let queries = infer_queries(run, model, data)?;
        let config = run.infer_config()?;
        let stats = infer::bench_infer(model, &queries, &config)?;
        println!(
            "infer: n={} mean={:.3}ms p50={:.3}ms p95={:.3}ms min={:.3}ms max={:.3}ms",
            stats.queries, stats.mean_ms, stats.p50_ms, stats.p95_ms, stats.min_ms, stats.max_ms
        );
        report.insert(
            "infer".into(),
            serde_json::to_value(&stats).map_err(|e| Error::Data(e.to_string()))?,
        );
    }

    if bench_search {
        let passage_store = match store_path {
            Some(path) => store::load_store(path)?,
            None => {
                let model = model.as_ref().ok_or_else(|| {
                    Error::Config("bench target search needs --store or --model".into())
                })?;
                store::passage_store(model)?
            }
        };
        let k = run.k(10)?;
        let sizes = run.sizes()?;
        let queries = search_queries(run, &passage_store)?;
        let bench = store::bench_search(&passage_store, &queries, k, &sizes)?;
        for size in &bench.sizes {
            println!(
                "search n={}: mean={:.3}ms p50={:.3}ms p95={:.3}ms",
                size.n, size.stats.mean_ms, size.stats.p50_ms, size.stats.p95_ms
            );
        }
        report.insert(
            "search".into(),
            serde_json::to_value(&bench).map_err(|e| Error::Data(e.to_string()))?,
        );
    }

    super::ensure_dir(out)?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(out.join("bench.json"), text)?;
    meta::write_run_meta(out, "bench", run, json!({ "target": target }), started)
}

/// Inference benchmark queries: the data directory's test questions when
/// given, otherwise random token sequences drawn from the vocabulary.
fn infer_queries(
    run: &RunConfig,
    model: &EmbeddingModel,
    data: Option<&Path>,
) -> Result<Vec<Vec<String>>> {
    if let Some(dir) = data {
        let (_passages, _questions, split) = super::load_dataset(dir)?;
        return Ok(split.test.iter().map(|q| q.tokens.clone()).collect());
    }

    let n_queries = run.n_queries()?;
    let query_len = run.query_len()?;
    let vocab_len = model.vocab.len() as u32;
    let mut rng = seed::rng(seed::derive(run.seed()?, "bench-queries"));
    Ok((0..n_queries)
        .map(|_| {
            (0..query_len)
                .map(|_| model.vocab.token(rng.random_range(0..vocab_len)).to_string())
                .collect()
        })
        .collect())
}

/// Search benchmark queries: random dense vectors in the store's dimension.
fn search_queries(run: &RunConfig, passage_store: &VectorStore) -> Result<Vec<Vec<f32>>> {
    let n_queries = run.n_queries()?;
    let dim = passage_store.vector_size();
    let mut rng = seed::rng(seed::derive(run.seed()?, "bench-search-queries"));
    Ok((0..n_queries)
        .map(|_| (0..dim).map(|_| rng.random::<f32>() - 0.5).collect())
        .collect())
}
