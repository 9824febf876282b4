//! Corpus ingestion: tokenization, passage splitting, question linking,
//! identifier assignment and dataset splits.
//!
//! Articles come in as `{title, text}` records and are cut into disjoint
//! blocks of `block_size` body tokens. Each block becomes a [`Passage`]
//! whose token sequence is `tokenize(title) + "[SEP]" + block`. QA records
//! are linked to passages by exact body-token equality; records whose
//! evidence matches nothing in the corpus are dropped.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Separator inserted between title tokens and body tokens. It is an
/// ordinary vocabulary token, nothing in the model treats it specially.
pub const SEPARATOR_TOKEN: &str = "[SEP]";

/// Default number of body tokens per passage block.
pub const DEFAULT_BLOCK_SIZE: usize = 100;

/// A source article before splitting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawArticle {
    pub title: String,
    #[serde(rename = "text")]
    pub body: String,
}

/// A retrieval unit: one block of an article, with the title prepended.
///
/// `tokens` is `tokenize(title) + [SEP] + body block`; `body_token_count`
/// is the length of the block alone (at most the block size used when
/// splitting). Title and separator tokens do not count toward it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passage {
    pub pid: String,
    pub title: String,
    pub tokens: Vec<String>,
    pub body_token_count: usize,
}

impl Passage {
    /// The body-token block, without title or separator.
    pub fn body_tokens(&self) -> &[String] {
        &self.tokens[self.tokens.len() - self.body_token_count..]
    }
}

/// A raw QA record prior to linking.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QaRecord {
    pub question: String,
    /// Evidence passage texts; each is matched against corpus blocks.
    pub passages: Vec<String>,
    /// Dataset tag, e.g. `nq`, `tq`, `wq`, `cw` or a user tag.
    pub dataset: String,
}

/// A linked question: tokens plus the corpus passages holding its answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub qid: String,
    pub tokens: Vec<String>,
    pub gold_pids: Vec<String>,
}

impl Question {
    /// Dataset tag, i.e. the qid up to the last underscore-separated index.
    pub fn dataset_tag(&self) -> &str {
        match self.qid.rfind('_') {
            Some(pos) => &self.qid[..pos],
            None => &self.qid,
        }
    }
}

/// Train/validation/test partition of the linked questions.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<Question>,
    pub validation: Vec<Question>,
    pub test: Vec<Question>,
    pub seed: u64,
}

/// Lowercase and tokenize a text.
///
/// Alphanumeric runs become single tokens; every other non-whitespace
/// character is a standalone token, and a consecutive run of the same
/// such character collapses to one token ("what???" -> "what", "?").
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut tokens = Vec::new();
    let mut word = String::new();
    let mut prev_punct: Option<char> = None;

    for ch in lowered.chars() {
        if ch.is_alphanumeric() {
            word.push(ch);
            prev_punct = None;
        } else if ch.is_whitespace() {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            prev_punct = None;
        } else {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            if prev_punct != Some(ch) {
                tokens.push(ch.to_string());
            }
            prev_punct = Some(ch);
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Split one article into passages of at most `block_size` body tokens.
///
/// Passage ids are `p_<first_id>`, `p_<first_id + 1>`, ... so a caller
/// splitting many articles keeps ids unique by threading the counter.
/// An empty body yields no passages.
pub fn split_passages(article: &RawArticle, block_size: usize, first_id: u64) -> Vec<Passage> {
    assert!(block_size >= 1, "block_size must be at least 1");
    let title_tokens = tokenize(&article.title);
    let body_tokens = tokenize(&article.body);

    body_tokens
        .chunks(block_size)
        .enumerate()
        .map(|(i, block)| {
            let mut tokens = Vec::with_capacity(title_tokens.len() + 1 + block.len());
            tokens.extend(title_tokens.iter().cloned());
            tokens.push(SEPARATOR_TOKEN.to_string());
            tokens.extend(block.iter().cloned());
            Passage {
                pid: format!("p_{}", first_id + i as u64),
                title: article.title.clone(),
                tokens,
                body_token_count: block.len(),
            }
        })
        .collect()
}

/// Split every article, assigning sequential passage ids across the corpus.
pub fn build_corpus(articles: &[RawArticle], block_size: usize) -> Vec<Passage> {
    let mut passages = Vec::new();
    let mut next_id = 0u64;
    for article in articles {
        let split = split_passages(article, block_size, next_id);
        next_id += split.len() as u64;
        passages.extend(split);
    }
    passages
}

/// Link QA records to corpus passages by exact body-token equality.
///
/// Returns the surviving questions plus the number of dropped records
/// (those whose evidence texts matched no corpus passage). Question ids
/// are `<tag>_<n>` with `n` counting surviving questions per tag.
pub fn link_questions(records: &[QaRecord], corpus: &[Passage]) -> Result<(Vec<Question>, usize)> {
    // Tokens never contain whitespace, so joining with a space is an
    // injective key for a token sequence.
    let mut by_body: HashMap<String, Vec<&str>> = HashMap::new();
    for passage in corpus {
        by_body
            .entry(passage.body_tokens().join(" "))
            .or_default()
            .push(&passage.pid);
    }

    let mut questions = Vec::new();
    let mut dropped = 0usize;
    let mut per_tag: HashMap<String, u64> = HashMap::new();

    for record in records {
        let tag = record.dataset.trim();
        if tag.is_empty() || tag.chars().any(char::is_whitespace) {
            return Err(Error::Data(format!(
                "invalid dataset tag {:?} (must be non-empty, no whitespace)",
                record.dataset
            )));
        }

        let mut gold_pids = Vec::new();
        let mut seen = HashSet::new();
        for evidence in &record.passages {
            let key = tokenize(evidence).join(" ");
            if let Some(pids) = by_body.get(&key) {
                for pid in pids {
                    if seen.insert(*pid) {
                        gold_pids.push((*pid).to_string());
                    }
                }
            }
        }

        if gold_pids.is_empty() {
            dropped += 1;
            continue;
        }

        let counter = per_tag.entry(tag.to_string()).or_insert(0);
        let qid = format!("{tag}_{counter}");
        *counter += 1;
        questions.push(Question {
            qid,
            tokens: tokenize(&record.question),
            gold_pids,
        });
    }

    Ok((questions, dropped))
}

/// Deterministically shuffle and partition questions 80/10/10.
///
/// Train takes `floor(0.8 n)`; the remainder is split evenly between
/// validation and test, with test absorbing the odd leftover.
pub fn split_dataset(questions: &[Question], split_seed: u64) -> Result<DatasetSplit> {
    let n = questions.len();
    if n < 10 {
        return Err(Error::Data(format!(
            "need at least 10 questions to split, got {n}"
        )));
    }

    let mut shuffled: Vec<Question> = questions.to_vec();
    let mut rng = seed::rng(seed::derive(split_seed, "dataset-split"));
    shuffled.shuffle(&mut rng);

    let n_train = n * 8 / 10;
    let remainder = n - n_train;
    let n_val = remainder / 2;

    let test = shuffled.split_off(n_train + n_val);
    let validation = shuffled.split_off(n_train);
    Ok(DatasetSplit {
        train: shuffled,
        validation,
        test,
        seed: split_seed,
    })
}

/// Shrink the corpus to `target` passages, keeping every protected pid
/// and a uniform random sample of the rest. Corpus order is preserved.
pub fn downsample_corpus(
    corpus: &[Passage],
    protected: &HashSet<String>,
    target: usize,
    sample_seed: u64,
) -> Result<Vec<Passage>> {
    if target < protected.len() {
        return Err(Error::Data(format!(
            "downsample target {} is below the {} protected passages",
            target,
            protected.len()
        )));
    }
    if target > corpus.len() {
        return Err(Error::Data(format!(
            "downsample target {} exceeds corpus size {}",
            target,
            corpus.len()
        )));
    }
    let known: HashSet<&str> = corpus.iter().map(|p| p.pid.as_str()).collect();
    if let Some(unknown) = protected.iter().find(|pid| !known.contains(pid.as_str())) {
        return Err(Error::Data(format!(
            "protected pid {unknown:?} is not in the corpus"
        )));
    }

    let candidates: Vec<usize> = corpus
        .iter()
        .enumerate()
        .filter(|(_, p)| !protected.contains(&p.pid))
        .map(|(i, _)| i)
        .collect();
    let n_sample = target - protected.len();

    let mut rng = seed::rng(seed::derive(sample_seed, "downsample"));
    let mut shuffled = candidates;
    shuffled.shuffle(&mut rng);
    let mut keep: HashSet<usize> = shuffled.into_iter().take(n_sample).collect();
    for (i, passage) in corpus.iter().enumerate() {
        if protected.contains(&passage.pid) {
            keep.insert(i);
        }
    }

    Ok(corpus
        .iter()
        .enumerate()
        .filter(|(i, _)| keep.contains(i))
        .map(|(_, p)| p.clone())
        .collect())
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct PassageRow {
    pid: String,
    title: String,
    tokens: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct QuestionRow {
    qid: String,
    tokens: Vec<String>,
    gold_pids: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    seed: u64,
    train: Vec<String>,
    validation: Vec<String>,
    test: Vec<String>,
}

/// Read `corpus.jsonl`: one `{title, text}` object per line.
pub fn read_articles(path: &Path) -> Result<Vec<RawArticle>> {
    read_jsonl(path)
}

/// Read `qa.jsonl`: one `{question, passages, dataset}` object per line.
pub fn read_qa_records(path: &Path) -> Result<Vec<QaRecord>> {
    read_jsonl(path)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| {
            Error::Data(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Write `passages.jsonl` (pid, title, tokens).
pub fn write_passages(passages: &[Passage], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for p in passages {
        let row = PassageRow {
            pid: p.pid.clone(),
            title: p.title.clone(),
            tokens: p.tokens.clone(),
        };
        serde_json::to_writer(&mut out, &row).map_err(|e| Error::Data(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read `passages.jsonl`, recomputing `body_token_count` from the title.
pub fn read_passages(path: &Path) -> Result<Vec<Passage>> {
    let rows: Vec<PassageRow> = read_jsonl(path)?;
    let mut passages = Vec::with_capacity(rows.len());
    let mut seen = HashSet::new();
    for row in rows {
        if !seen.insert(row.pid.clone()) {
            return Err(Error::DuplicateId(row.pid));
        }
        let prefix_len = tokenize(&row.title).len() + 1; // + separator
        if row.tokens.len() < prefix_len {
            return Err(Error::Data(format!(
                "passage {} has fewer tokens than its title prefix",
                row.pid
            )));
        }
        passages.push(Passage {
            body_token_count: row.tokens.len() - prefix_len,
            pid: row.pid,
            title: row.title,
            tokens: row.tokens,
        });
    }
    Ok(passages)
}

/// Write `questions.jsonl` (qid, tokens, gold_pids).
pub fn write_questions(questions: &[Question], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for q in questions {
        let row = QuestionRow {
            qid: q.qid.clone(),
            tokens: q.tokens.clone(),
            gold_pids: q.gold_pids.clone(),
        };
        serde_json::to_writer(&mut out, &row).map_err(|e| Error::Data(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read `questions.jsonl`.
pub fn read_questions(path: &Path) -> Result<Vec<Question>> {
    let rows: Vec<QuestionRow> = read_jsonl(path)?;
    Ok(rows
        .into_iter()
        .map(|row| Question {
            qid: row.qid,
            tokens: row.tokens,
            gold_pids: row.gold_pids,
        })
        .collect())
}

/// Write `split.json` (qid lists per split, plus the seed used).
pub fn write_split(split: &DatasetSplit, path: &Path) -> Result<()> {
    let file = SplitFile {
        seed: split.seed,
        train: split.train.iter().map(|q| q.qid.clone()).collect(),
        validation: split.validation.iter().map(|q| q.qid.clone()).collect(),
        test: split.test.iter().map(|q| q.qid.clone()).collect(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, &file).map_err(|e| Error::Data(e.to_string()))?;
    out.flush()?;
    Ok(())
}

/// Re-assemble a [`DatasetSplit`] from `split.json` and the question list.
pub fn read_split(path: &Path, questions: &[Question]) -> Result<DatasetSplit> {
    let file: SplitFile = serde_json::from_reader(BufReader::new(File::open(path)?))
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let by_qid: HashMap<&str, &Question> =
        questions.iter().map(|q| (q.qid.as_str(), q)).collect();
    let lookup = |qids: &[String]| -> Result<Vec<Question>> {
        qids.iter()
            .map(|qid| {
                by_qid
                    .get(qid.as_str())
                    .map(|q| (*q).clone())
                    .ok_or_else(|| Error::Data(format!("split references unknown qid {qid:?}")))
            })
            .collect()
    };
    Ok(DatasetSplit {
        train: lookup(&file.train)?,
        validation: lookup(&file.validation)?,
        test: lookup(&file.test)?,
        seed: file.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn article(title: &str, body: &str) -> RawArticle {
        RawArticle {
            title: title.to_string(),
            body: body.to_string(),
        }
    }

    #[test]
    fn tokenize_splits_punctuation() {
        assert_eq!(
            tokenize("during same year(1940)"),
            vec!["during", "same", "year", "(", "1940", ")"]
        );
    }

    #[test]
    fn tokenize_collapses_repeated_punctuation() {
        assert_eq!(tokenize("what???"), vec!["what", "?"]);
        assert_eq!(tokenize("a--b"), vec!["a", "-", "b"]);
        // Alternating characters are not a run.
        assert_eq!(tokenize("?!?"), vec!["?", "!", "?"]);
    }

    #[test]
    fn tokenize_lowercases_and_handles_empty() {
        assert_eq!(tokenize("Hello WORLD"), vec!["hello", "world"]);
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("   \t\n"), Vec::<String>::new());
    }

    #[test]
    fn split_produces_blocks_with_title_prefix() {
        let words: Vec<String> = (0..250).map(|i| format!("w{i}")).collect();
        let art = article("My Title", &words.join(" "));
        let passages = split_passages(&art, 100, 0);
        assert_eq!(passages.len(), 3);
        assert_eq!(
            passages.iter().map(|p| p.body_token_count).collect::<Vec<_>>(),
            vec![100, 100, 50]
        );
        assert_eq!(passages[0].pid, "p_0");
        assert_eq!(passages[2].pid, "p_2");
        assert_eq!(&passages[0].tokens[..3], &["my", "title", SEPARATOR_TOKEN]);
        assert_eq!(passages[1].body_tokens()[0], "w100");
    }

    #[test]
    fn split_exact_fit_and_empty_body() {
        let words: Vec<String> = (0..100).map(|i| format!("w{i}")).collect();
        let passages = split_passages(&article("t", &words.join(" ")), 100, 5);
        assert_eq!(passages.len(), 1);
        assert_eq!(passages[0].body_token_count, 100);
        assert_eq!(passages[0].pid, "p_5");

        assert!(split_passages(&article("t", ""), 100, 0).is_empty());
    }

    #[test]
    fn linking_matches_exact_body_tokens() {
        let corpus = build_corpus(
            &[article("A", "the cat sat here"), article("B", "dogs bark loud")],
            100,
        );
        let records = vec![
            QaRecord {
                question: "where did the cat sit?".into(),
                passages: vec!["The cat  sat here".into()],
                dataset: "nq".into(),
            },
            QaRecord {
                question: "no match".into(),
                passages: vec!["nothing like this".into()],
                dataset: "nq".into(),
            },
        ];
        let (questions, dropped) = link_questions(&records, &corpus).unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(questions.len(), 1);
        assert_eq!(questions[0].qid, "nq_0");
        assert_eq!(questions[0].gold_pids, vec!["p_0"]);
        assert_eq!(questions[0].dataset_tag(), "nq");
    }

    #[test]
    fn linking_collects_duplicate_passages() {
        // Same body twice in the corpus -> two gold pids.
        let corpus = build_corpus(
            &[
                article("A", "shared evidence text"),
                article("B", "shared evidence text"),
                article("C", "shared evidence text"),
            ],
            100,
        );
        let records = vec![QaRecord {
            question: "q".into(),
            passages: vec!["shared evidence text".into()],
            dataset: "tq".into(),
        }];
        let (questions, dropped) = link_questions(&records, &corpus).unwrap();
        assert_eq!(dropped, 0);
        assert_eq!(questions[0].gold_pids.len(), 3);
    }

    #[test]
    fn linking_rejects_bad_tags() {
        let corpus = build_corpus(&[article("A", "x")], 100);
        let bad = vec![QaRecord {
            question: "q".into(),
            passages: vec!["x".into()],
            dataset: "has space".into(),
        }];
        assert!(matches!(
            link_questions(&bad, &corpus),
            Err(Error::Data(_))
        ));
    }

    fn dummy_questions(n: usize) -> Vec<Question> {
        (0..n)
            .map(|i| Question {
                qid: format!("nq_{i}"),
                tokens: vec![format!("tok{i}")],
                gold_pids: vec!["p_0".into()],
            })
            .collect()
    }

    #[test]
    fn split_ratios() {
        let split = split_dataset(&dummy_questions(100), 1).unwrap();
        assert_eq!(
            (split.train.len(), split.validation.len(), split.test.len()),
            (80, 10, 10)
        );
        let split = split_dataset(&dummy_questions(101), 1).unwrap();
        assert_eq!(
            (split.train.len(), split.validation.len(), split.test.len()),
            (80, 10, 11)
        );
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let questions = dummy_questions(37);
        let a = split_dataset(&questions, 9).unwrap();
        let b = split_dataset(&questions, 9).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.validation, b.validation);
        assert_eq!(a.test, b.test);

        let mut all: Vec<&str> = a
            .train
            .iter()
            .chain(&a.validation)
            .chain(&a.test)
            .map(|q| q.qid.as_str())
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 37);
    }

    #[test]
    fn split_requires_ten_questions() {
        assert!(split_dataset(&dummy_questions(9), 1).is_err());
        assert!(split_dataset(&dummy_questions(10), 1).is_ok());
    }

    #[test]
    fn downsample_keeps_protected() {
        let articles: Vec<RawArticle> =
            (0..1000).map(|i| article(&format!("t{i}"), &format!("body{i}"))).collect();
        let corpus = build_corpus(&articles, 100);
        let protected: HashSet<String> = (0..100).map(|i| format!("p_{i}")).collect();

        let kept = downsample_corpus(&corpus, &protected, 200, 3).unwrap();
        assert_eq!(kept.len(), 200);
        let kept_pids: HashSet<&str> = kept.iter().map(|p| p.pid.as_str()).collect();
        for pid in &protected {
            assert!(kept_pids.contains(pid.as_str()));
        }
        // Deterministic.
        let again = downsample_corpus(&corpus, &protected, 200, 3).unwrap();
        assert_eq!(kept, again);

        // Identity when target == corpus size.
        let all = downsample_corpus(&corpus, &protected, corpus.len(), 3).unwrap();
        assert_eq!(all, corpus);

        // Exactly the protected set when target == |protected|.
        let only = downsample_corpus(&corpus, &protected, 100, 3).unwrap();
        assert_eq!(only.len(), 100);
        assert!(only.iter().all(|p| protected.contains(&p.pid)));

        // Errors.
        assert!(downsample_corpus(&corpus, &protected, 99, 3).is_err());
        assert!(downsample_corpus(&corpus, &protected, corpus.len() + 1, 3).is_err());
    }
}
