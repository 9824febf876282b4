use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::Path;
use std::time::Instant;

use pvec::infer::InferenceConfig;
use pvec::{corpus, infer, seed, store, Error, Result};
use serde_json::json;

use crate::config::RunConfig;
use crate::meta;

pub fn run(
    run: &RunConfig,
    model_path: &Path,
    vocab_path: Option<&Path>,
    questions: Option<&Path>,
    binary: bool,
    out: &Path,
) -> Result<()> {
    let started = Instant::now();
    let model = super::load_model(model_path, vocab_path)?;
    let config = run.infer_config()?;

    let text = match questions {
        Some(path) => {
            let mut buf = String::new();
            BufReader::new(File::open(path)?).read_to_string(&mut buf)?;
            buf
        }
        None => {
            let mut buf = String::new();
            io::stdin().lock().read_to_string(&mut buf)?;
            buf
        }
    };

    let mut vectors: Vec<f32> = Vec::new();
    let mut embedded = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tokens = corpus::tokenize(line);
        let line_config = InferenceConfig {
            seed: seed::derive_indexed(config.seed, "infer-line", embedded as u64),
            ..config.clone()
        };
        let vector = infer::infer_vector(&model, &tokens, &line_config).map_err(|e| match e {
            Error::Data(msg) => Error::Data(format!("line {}: {msg}", lineno + 1)),
            other => other,
        })?;
        if binary {
            vectors.extend_from_slice(&vector);
        } else {
            let rendered: Vec<String> = vector.iter().map(|v| v.to_string()).collect();
            println!("{}", rendered.join(" "));
        }
        embedded += 1;
    }

    super::ensure_dir(out)?;
    if binary {
        let ids: Vec<String> = (0..embedded).map(|i| format!("q_{i}")).collect();
        let queries = store::VectorStore::build(ids, vectors, model.dim())?;
        store::save_store(&queries, &out.join("queries.psto"))?;
    }

    meta::write_run_meta(
        out,
        "infer",
        run,
        json!({ "questions_embedded": embedded, "binary": binary }),
        started,
    )
}
