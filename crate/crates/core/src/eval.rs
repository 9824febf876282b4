//! Retrieval metrics: per-question effective rank, top-k retrieval rates
//! under two success modes, and in-domain / zero-shot evaluation runs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::corpus::Question;
use crate::error::{Error, Result};
use crate::infer::{infer_vector, InferenceConfig};
use crate::model::EmbeddingModel;
use crate::seed;
use crate::store::{SearchResult, VectorStore};

pub const DEFAULT_MAX_RANK: u32 = 1000;
pub const DEFAULT_KS: [u32; 4] = [1, 10, 20, 100];

/// What counts as retrieving a question at rank k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessMode {
    /// The mean rank of the retrieved gold passages is within k.
    AvgRank,
    /// Any single gold passage is within k.
    AnyHit,
}

impl std::str::FromStr for SuccessMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "avg_rank" => Ok(SuccessMode::AvgRank),
            "any_hit" => Ok(SuccessMode::AnyHit),
            other => Err(Error::Config(format!("unknown success mode {other:?}"))),
        }
    }
}

/// Where a question's gold passages landed in one search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionRank {
    pub qid: String,
    /// Ascending ranks of gold passages found within max_rank.
    pub gold_ranks: Vec<u32>,
    /// Mean of `gold_ranks`, or max_rank when none were found.
    pub effective_rank: f64,
}

/// Collect the ranks of `gold_pids` within the first `max_rank` results.
pub fn question_rank(
    qid: &str,
    gold_pids: &[String],
    search: &SearchResult,
    max_rank: u32,
) -> QuestionRank {
    let mut gold_ranks: Vec<u32> = gold_pids
        .iter()
        .filter_map(|pid| search.rank_of(pid))
        .filter(|&r| r <= max_rank)
        .collect();
    gold_ranks.sort_unstable();
    let effective_rank = if gold_ranks.is_empty() {
        f64::from(max_rank)
    } else {
        gold_ranks.iter().map(|&r| f64::from(r)).sum::<f64>() / gold_ranks.len() as f64
    };
    QuestionRank {
        qid: qid.to_string(),
        gold_ranks,
        effective_rank,
    }
}

/// Percentage of questions retrieved within rank k.
pub fn retrieval_rate(ranks: &[QuestionRank], k: u32, mode: SuccessMode) -> f64 {
    assert!(!ranks.is_empty(), "retrieval rate over zero questions");
    let successes = ranks
        .iter()
        .filter(|q| match mode {
            SuccessMode::AvgRank => q.effective_rank <= f64::from(k),
            SuccessMode::AnyHit => q.gold_ranks.first().is_some_and(|&r| r <= k),
        })
        .count();
    100.0 * successes as f64 / ranks.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub ks: Vec<u32>,
    pub max_rank: u32,
    pub success_mode: SuccessMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ks: DEFAULT_KS.to_vec(),
            max_rank: DEFAULT_MAX_RANK,
            success_mode: SuccessMode::AvgRank,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub success_mode: SuccessMode,
    pub max_rank: u32,
    /// Retrieval rate (percent) per k.
    pub rates: BTreeMap<u32, f64>,
    pub mean_rank: f64,
    pub n_questions: usize,
    /// Questions whose tokens were all out of vocabulary; scored at
    /// max_rank since nothing can be retrieved for them.
    pub unembeddable_questions: usize,
    pub zero_shot: bool,
    pub questions: Vec<QuestionRank>,
}

/// Infer each question's vector, search the store, and aggregate ranks.
pub fn evaluate(
    model: &EmbeddingModel,
    store: &VectorStore,
    questions: &[Question],
    infer_config: &InferenceConfig,
    options: &EvalOptions,
) -> Result<EvalReport> {
    if questions.is_empty() {
        return Err(Error::Data("evaluation needs at least one question".into()));
    }

    let mut missing: Vec<String> = Vec::new();
    for q in questions {
        for pid in &q.gold_pids {
            if !store.contains(pid) {
                missing.push(format!("{} (gold of {})", pid, q.qid));
            }
        }
    }
    if !missing.is_empty() {
        let shown = missing.len().min(10);
        let mut detail = missing[..shown].join(", ");
        if missing.len() > shown {
            detail.push_str(&format!(" and {} more", missing.len() - shown));
        }
        return Err(Error::Data(format!(
            "gold passages missing from the store: {detail}"
        )));
    }

    let mut ranks = Vec::with_capacity(questions.len());
    let mut unembeddable = 0usize;
    for q in questions {
        let per_question = InferenceConfig {
            seed: seed::derive(infer_config.seed, &format!("eval:{}", q.qid)),
            ..infer_config.clone()
        };
        match infer_vector(model, &q.tokens, &per_question) {
            Ok(vector) => {
                let search = store.top_k(&vector, options.max_rank as usize)?;
                ranks.push(question_rank(&q.qid, &q.gold_pids, &search, options.max_rank));
            }
            Err(Error::Data(_)) => {
                unembeddable += 1;
                ranks.push(QuestionRank {
                    qid: q.qid.clone(),
                    gold_ranks: vec![],
                    effective_rank: f64::from(options.max_rank),
                });
            }
            Err(e) => return Err(e),
        }
    }

    let rates = options
        .ks
        .iter()
        .map(|&k| (k, retrieval_rate(&ranks, k, options.success_mode)))
        .collect();
    let mean_rank = ranks.iter().map(|r| r.effective_rank).sum::<f64>() / ranks.len() as f64;

    Ok(EvalReport {
        success_mode: options.success_mode,
        max_rank: options.max_rank,
        rates,
        mean_rank,
        n_questions: ranks.len(),
        unembeddable_questions: unembeddable,
        zero_shot: false,
        questions: ranks,
    })
}

/// Evaluate questions from a dataset the model was not trained on. Their
/// passages must have been co-indexed at training time, so every store
/// row must exist in the model's document table.
pub fn zero_shot(
    model: &EmbeddingModel,
    store: &VectorStore,
    questions: &[Question],
    infer_config: &InferenceConfig,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let absent: Vec<&str> = store
        .ids()
        .iter()
        .filter(|id| model.doc_index_of(id).is_none())
        .map(|id| id.as_str())
        .take(6)
        .collect();
    if !absent.is_empty() {
        return Err(Error::Data(format!(
            "zero-shot evaluation requires the target dataset's passages to \
             have been co-indexed when the model trained; {} store rows have \
             no document vector (first few: {})",
            absent.len(),
            absent.join(", ")
        )));
    }
    let mut report = evaluate(model, store, questions, infer_config, options)?;
    report.zero_shot = true;
    Ok(report)
}

pub fn write_report_json(report: &EvalReport, path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(file, report).map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}

/// Tab-separated metric table mirroring the JSON report.
pub fn write_report_tsv(report: &EvalReport, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "metric\tvalue")?;
    writeln!(
        out,
        "success_mode\t{}",
        match report.success_mode {
            SuccessMode::AvgRank => "avg_rank",
            SuccessMode::AnyHit => "any_hit",
        }
    )?;
    writeln!(out, "max_rank\t{}", report.max_rank)?;
    writeln!(out, "n_questions\t{}", report.n_questions)?;
    writeln!(out, "unembeddable_questions\t{}", report.unembeddable_questions)?;
    writeln!(out, "zero_shot\t{}", report.zero_shot)?;
    writeln!(out, "mean_rank\t{:.4}", report.mean_rank)?;
    for (k, rate) in &report.rates {
        writeln!(out, "top_{k}\t{rate:.4}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_corpus, DatasetSplit, RawArticle};
    use crate::model::{Experiment, ModePolicy, ModelConfig, Softmax};
    use crate::store::{passage_store, SearchHit};
    use crate::trainer::train_model;

    fn search_with_ranks(n: usize) -> SearchResult {
        SearchResult {
            hits: (1..=n)
                .map(|r| SearchHit {
                    pid: format!("p_{r}"),
                    score: 1.0 - r as f32 * 1e-4,
                    rank: r as u32,
                })
                .collect(),
        }
    }

    fn golds(ranks: &[u32]) -> Vec<String> {
        ranks.iter().map(|r| format!("p_{r}")).collect()
    }

    #[test]
    fn rank_averaging_worked_example() {
        let search = search_with_ranks(100);
        let qr = question_rank("q", &golds(&[5, 13, 27, 31, 50]), &search, 1000);
        assert_eq!(qr.effective_rank, 25.2);
        assert_eq!(qr.gold_ranks, vec![5, 13, 27, 31, 50]);

        let ranks = [qr];
        assert_eq!(retrieval_rate(&ranks, 100, SuccessMode::AvgRank), 100.0);
        assert_eq!(retrieval_rate(&ranks, 20, SuccessMode::AvgRank), 0.0);
    }

    #[test]
    fn missing_gold_defaults_to_max_rank() {
        let search = search_with_ranks(10);
        let qr = question_rank("q", &golds(&[999]), &search, 1000);
        assert!(qr.gold_ranks.is_empty());
        assert_eq!(qr.effective_rank, 1000.0);

        let single = question_rank("q", &golds(&[1]), &search, 1000);
        assert_eq!(single.effective_rank, 1.0);
    }

    #[test]
    fn ranks_beyond_max_rank_are_ignored() {
        let search = search_with_ranks(100);
        let qr = question_rank("q", &golds(&[5, 80]), &search, 50);
        assert_eq!(qr.gold_ranks, vec![5]);
        assert_eq!(qr.effective_rank, 5.0);
    }

    #[test]
    fn success_modes_differ_on_split_ranks() {
        let search = search_with_ranks(600);
        let qr = question_rank("q", &golds(&[5, 500]), &search, 1000);
        assert_eq!(qr.effective_rank, 252.5);
        let ranks = [qr];
        assert_eq!(retrieval_rate(&ranks, 10, SuccessMode::AnyHit), 100.0);
        assert_eq!(retrieval_rate(&ranks, 10, SuccessMode::AvgRank), 0.0);
    }

    #[test]
    fn any_hit_rate_dominates_avg_rank_rate() {
        let search = search_with_ranks(1000);
        let ranks: Vec<QuestionRank> = [
            golds(&[1]),
            golds(&[3, 700]),
            golds(&[50, 60]),
            golds(&[999]),
        ]
        .iter()
        .enumerate()
        .map(|(i, g)| question_rank(&format!("q{i}"), g, &search, 1000))
        .collect();

        for k in [1, 10, 20, 100, 1000] {
            let any = retrieval_rate(&ranks, k, SuccessMode::AnyHit);
            let avg = retrieval_rate(&ranks, k, SuccessMode::AvgRank);
            assert!(any >= avg, "k={k}: any_hit {any} < avg_rank {avg}");
        }
        for mode in [SuccessMode::AvgRank, SuccessMode::AnyHit] {
            let mut last = 0.0;
            for k in [1, 10, 20, 100, 1000] {
                let rate = retrieval_rate(&ranks, k, mode);
                assert!(rate >= last);
                last = rate;
            }
        }
    }

    fn trained_fixture() -> (EmbeddingModel, VectorStore, Vec<Question>) {
        let articles: Vec<RawArticle> = (0..8)
            .map(|i| RawArticle {
                title: format!("title{i}"),
                body: (0..30)
                    .map(|w| format!("word{:02}", (i * 4 + w) % 16))
                    .collect::<Vec<_>>()
                    .join(" "),
            })
            .collect();
        let corpus = build_corpus(&articles, 100);
        let train: Vec<Question> = (0..4)
            .map(|i| Question {
                qid: format!("ds_{i}"),
                tokens: vec![
                    format!("word{:02}", i * 4),
                    format!("word{:02}", i * 4 + 1),
                ],
                gold_pids: vec![format!("p_{i}")],
            })
            .collect();
        let test: Vec<Question> = (0..2)
            .map(|i| Question {
                qid: format!("ds_{}", 10 + i),
                tokens: vec![
                    format!("word{:02}", i * 4),
                    format!("word{:02}", i * 4 + 2),
                ],
                gold_pids: vec![format!("p_{i}")],
            })
            .collect();
        let split = DatasetSplit {
            train,
            validation: vec![],
            test: test.clone(),
            seed: 0,
        };
        let config = ModelConfig {
            vector_size: 16,
            window: 3,
            min_count: 1,
            lr: 0.05,
            min_lr: 0.01,
            epochs: 5,
            mode: ModePolicy::Auto,
            experiment: Experiment::E2,
            softmax: Softmax::Sampled { negatives: 3 },
            seed: 21,
            workers: 1,
        };
        let (model, _) = train_model(&corpus, &split, config).unwrap();
        let store = passage_store(&model).unwrap();
        (model, store, test)
    }

    #[test]
    fn evaluate_is_deterministic() {
        let (model, store, test) = trained_fixture();
        let config = InferenceConfig {
            steps: 10,
            ..InferenceConfig::default()
        };
        let a = evaluate(&model, &store, &test, &config, &EvalOptions::default()).unwrap();
        let b = evaluate(&model, &store, &test, &config, &EvalOptions::default()).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.n_questions, 2);
        assert!(a.mean_rank >= 1.0 && a.mean_rank <= 1000.0);
        for (_, rate) in &a.rates {
            assert!((0.0..=100.0).contains(rate));
        }
    }

    #[test]
    fn missing_gold_pid_is_reported() {
        let (model, store, mut test) = trained_fixture();
        test[0].gold_pids.push("p_777".into());
        let config = InferenceConfig::default();
        match evaluate(&model, &store, &test, &config, &EvalOptions::default()) {
            Err(Error::Data(msg)) => {
                assert!(msg.contains("p_777"), "{msg}");
                assert!(msg.contains(&test[0].qid), "{msg}");
            }
            other => panic!("expected data error, got {:?}", other.map(|r| r.n_questions)),
        }
    }

    #[test]
    fn oov_question_scores_max_rank() {
        let (model, store, mut test) = trained_fixture();
        test[1].tokens = vec!["zzzz".into()];
        let config = InferenceConfig {
            steps: 5,
            ..InferenceConfig::default()
        };
        let report = evaluate(&model, &store, &test, &config, &EvalOptions::default()).unwrap();
        assert_eq!(report.unembeddable_questions, 1);
        assert_eq!(report.questions[1].effective_rank, 1000.0);
    }

    #[test]
    fn zero_shot_requires_co_indexed_passages() {
        let (model, store, test) = trained_fixture();
        let config = InferenceConfig {
            steps: 5,
            ..InferenceConfig::default()
        };

        // Degenerate zero-shot on the training store works and matches
        // evaluate() apart from the flag.
        let zs = zero_shot(&model, &store, &test, &config, &EvalOptions::default()).unwrap();
        let plain = evaluate(&model, &store, &test, &config, &EvalOptions::default()).unwrap();
        assert!(zs.zero_shot);
        assert_eq!(zs.rates, plain.rates);
        assert_eq!(zs.mean_rank, plain.mean_rank);

        // A store row the model never indexed is rejected.
        let mut ids: Vec<String> = store.ids().to_vec();
        ids.push("p_999".into());
        let mut data = Vec::new();
        for i in 0..store.len() {
            data.extend_from_slice(store.vector(i));
        }
        data.extend(std::iter::repeat(0.5).take(store.vector_size()));
        let foreign = VectorStore::build(ids, data, store.vector_size()).unwrap();
        match zero_shot(&model, &foreign, &test, &config, &EvalOptions::default()) {
            Err(Error::Data(msg)) => assert!(msg.contains("co-indexed"), "{msg}"),
            other => panic!("expected data error, got {:?}", other.map(|r| r.zero_shot)),
        }
    }

    #[test]
    fn report_files_round_trip() {
        let (model, store, test) = trained_fixture();
        let config = InferenceConfig {
            steps: 5,
            ..InferenceConfig::default()
        };
        let report = evaluate(&model, &store, &test, &config, &EvalOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();

        let json_path = dir.path().join("report.json");
        write_report_json(&report, &json_path).unwrap();
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
        assert_eq!(parsed["n_questions"], 2);
        assert_eq!(parsed["success_mode"], "avg_rank");
        assert!(parsed["questions"].as_array().unwrap().len() == 2);

        let tsv_path = dir.path().join("report.tsv");
        write_report_tsv(&report, &tsv_path).unwrap();
        let tsv = std::fs::read_to_string(&tsv_path).unwrap();
        assert!(tsv.starts_with("metric\tvalue\n"));
        assert!(tsv.contains("top_100\t"));
        assert!(tsv.contains("mean_rank\t"));
    }
}
