use std::path::Path;
use std::time::Instant;

use pvec::{corpus, infer, store, Result};
use serde_json::json;

use crate::config::RunConfig;
use crate::meta;

pub fn run(
    run: &RunConfig,
    model_path: &Path,
    vocab_path: Option<&Path>,
    store_path: &Path,
    query: &str,
    out: &Path,
) -> Result<()> {
    let started = Instant::now();
    let model = super::load_model(model_path, vocab_path)?;
    let passage_store = store::load_store(store_path)?;
    let config = run.infer_config()?;
    let k = run.k(10)?;

    let tokens = corpus::tokenize(query);
    let vector = infer::infer_vector(&model, &tokens, &config)?;
    let result = passage_store.top_k(&vector, k)?;

    println!("rank\tpid\tscore");
    for hit in &result.hits {
        println!("{}\t{}\t{:.6}", hit.rank, hit.pid, hit.score);
    }

    super::ensure_dir(out)?;
    meta::write_run_meta(
        out,
        "search",
        run,
        json!({ "k": k, "hits": result.hits.len() }),
        started,
    )
}
