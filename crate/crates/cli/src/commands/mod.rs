pub mod bench;
pub mod eval;
pub mod infer;
pub mod preprocess;
pub mod search;
pub mod train;
pub mod tune;

use std::fs;
use std::path::{Path, PathBuf};

use pvec::corpus::{self, DatasetSplit, Passage, Question};
use pvec::model::EmbeddingModel;
use pvec::{Error, Result};

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Loads a checkpoint together with its vocabulary. When no vocabulary
/// path is given, `vocab.tsv` next to the model file is used.
pub fn load_model(model_path: &Path, vocab_path: Option<&Path>) -> Result<EmbeddingModel> {
    let vocab_path: PathBuf = match vocab_path {
        Some(p) => p.to_path_buf(),
        None => model_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("vocab.tsv"),
    };
    let vocab = pvec::vocab::read_vocab(&vocab_path)?;
    pvec::model::load_checkpoint(model_path, vocab)
}

/// Loads a preprocessed directory: passages, questions and the split.
pub fn load_dataset(dir: &Path) -> Result<(Vec<Passage>, Vec<Question>, DatasetSplit)> {
    let passages = corpus::read_passages(&dir.join("passages.jsonl"))?;
    let questions = corpus::read_questions(&dir.join("questions.jsonl"))?;
    let split = corpus::read_split(&dir.join("split.json"), &questions)?;
    Ok((passages, questions, split))
}

/// Restricts every part of the split to questions whose dataset tag is in
/// `tags`. The corpus is left untouched so passage ids keep their meaning.
pub fn filter_split(split: DatasetSplit, tags: &[String]) -> Result<DatasetSplit> {
    let keep = |qs: Vec<Question>| -> Vec<Question> {
        qs.into_iter()
            .filter(|q| tags.iter().any(|t| t == q.dataset_tag()))
            .collect()
    };
    let filtered = DatasetSplit {
        train: keep(split.train),
        validation: keep(split.validation),
        test: keep(split.test),
        seed: split.seed,
    };
    if filtered.train.is_empty() && filtered.validation.is_empty() && filtered.test.is_empty() {
        return Err(Error::Data(format!(
            "no questions match dataset tags {tags:?}"
        )));
    }
    Ok(filtered)
}

pub fn split_by_name<'a>(split: &'a DatasetSplit, name: &str) -> Result<&'a [Question]> {
    match name {
        "train" => Ok(&split.train),
        "validation" => Ok(&split.validation),
        "test" => Ok(&split.test),
        other => Err(Error::Config(format!(
            "unknown split {other:?} (expected train, validation or test)"
        ))),
    }
}
