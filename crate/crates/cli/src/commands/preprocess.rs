use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pvec::corpus;
use pvec::Result;
use serde_json::json;

use crate::config::RunConfig;
use crate::meta;

pub fn run(run: &RunConfig, articles: &Path, qa: &[PathBuf], out: &Path) -> Result<()> {
    let started = Instant::now();
    let seed = run.seed()?;
    let block_size = run.block_size()?;

    let raw = corpus::read_articles(articles)?;
    let mut passages = corpus::build_corpus(&raw, block_size);

    let mut records = Vec::new();
    for path in qa {
        records.extend(corpus::read_qa_records(path)?);
    }
    let (questions, dropped) = corpus::link_questions(&records, &passages)?;

    if let Some(target) = run.max_passages()? {
        let protected: HashSet<String> = questions
            .iter()
            .flat_map(|q| q.gold_pids.iter().cloned())
            .collect();
        passages = corpus::downsample_corpus(&passages, &protected, target, seed)?;
    }

    let split = corpus::split_dataset(&questions, seed)?;

    super::ensure_dir(out)?;
    corpus::write_passages(&passages, &out.join("passages.jsonl"))?;
    corpus::write_questions(&questions, &out.join("questions.jsonl"))?;
    corpus::write_split(&split, &out.join("split.json"))?;

    println!(
        "passages={} questions={} dropped={} train={} validation={} test={}",
        passages.len(),
        questions.len(),
        dropped,
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    meta::write_run_meta(
        out,
        "preprocess",
        run,
        json!({
            "articles": raw.len(),
            "passages": passages.len(),
            "questions": questions.len(),
            "dropped_questions": dropped,
        }),
        started,
    )
}
