//! Randomized invariants, each checked against a naive reimplementation
//! or an algebraic identity.

use proptest::prelude::*;

use pvec::corpus::{self, RawArticle};
use pvec::eval::{retrieval_rate, QuestionRank, SuccessMode};
use pvec::store::VectorStore;
use pvec::trainer::lr_at;
use pvec::vocab;

/// Mirrors the store's scoring arithmetic step by step: f64 dot, row norm
/// rounded through f32, guarded zero-norm rows. On small-integer inputs
/// every operation is exact, so scores must agree bit for bit.
fn naive_top_k(
    ids: &[String],
    data: &[f32],
    dim: usize,
    query: &[f32],
    k: usize,
) -> Vec<(String, u32, f32)> {
    let query_norm = query
        .iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt();
    let mut scored: Vec<(f64, usize)> = (0..ids.len())
        .map(|i| {
            let row = &data[i * dim..(i + 1) * dim];
            let row_norm = f64::from(
                row.iter()
                    .map(|&v| f64::from(v) * f64::from(v))
                    .sum::<f64>()
                    .sqrt() as f32,
            );
            let score = if row_norm == 0.0 {
                0.0
            } else {
                let dot: f64 = row
                    .iter()
                    .zip(query)
                    .map(|(&a, &b)| f64::from(a) * f64::from(b))
                    .sum();
                dot / (row_norm * query_norm)
            };
            (score, i)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(rank, (score, i))| (ids[i].clone(), (rank + 1) as u32, score as f32))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn retokenizing_is_stable(text in ".{0,200}") {
        let once = corpus::tokenize(&text);
        let again = corpus::tokenize(&once.join(" "));
        prop_assert_eq!(once, again);
    }

    #[test]
    fn passage_blocks_reassemble_the_body(
        words in proptest::collection::vec("[a-z]{1,8}", 0..300),
        block_size in 1usize..50,
    ) {
        let body = words.join(" ");
        let article = RawArticle { title: "some title".into(), body: body.clone() };
        let passages = corpus::split_passages(&article, block_size, 0);

        let mut reassembled = Vec::new();
        for p in &passages {
            prop_assert!(p.body_token_count >= 1);
            prop_assert!(p.body_token_count <= block_size);
            reassembled.extend(p.body_tokens().iter().cloned());
        }
        prop_assert_eq!(reassembled, corpus::tokenize(&body));
    }

    #[test]
    fn top_k_matches_a_naive_scan(
        rows in proptest::collection::vec(proptest::collection::vec(-3i8..=3, 6), 1..120),
        query in proptest::collection::vec(-3i8..=3, 6),
        k in 1usize..140,
    ) {
        prop_assume!(query.iter().any(|&v| v != 0));
        let dim = 6;
        let ids: Vec<String> = (0..rows.len()).map(|i| format!("p_{i}")).collect();
        let data: Vec<f32> = rows.iter().flatten().map(|&v| f32::from(v)).collect();
        let query: Vec<f32> = query.iter().map(|&v| f32::from(v)).collect();

        let store = VectorStore::build(ids.clone(), data.clone(), dim).unwrap();
        let got: Vec<(String, u32, f32)> = store
            .top_k(&query, k)
            .unwrap()
            .hits
            .into_iter()
            .map(|h| (h.pid, h.rank, h.score))
            .collect();
        prop_assert_eq!(got, naive_top_k(&ids, &data, dim, &query, k));
    }

    #[test]
    fn lr_schedule_decays_within_bounds(
        lr in 0.002f32..0.5,
        min_frac in 0.01f32..1.0,
        total in 1u64..10_000,
        step in 0u64..10_000,
    ) {
        let min_lr = lr * min_frac;
        let step = step.min(total);
        let now = lr_at(lr, min_lr, step, total);
        prop_assert!(now <= lr + 1e-6, "lr {now} above start {lr}");
        prop_assert!(now >= min_lr - 1e-6, "lr {now} below floor {min_lr}");
        if step < total {
            let next = lr_at(lr, min_lr, step + 1, total);
            prop_assert!(next <= now + 1e-7, "schedule increased: {now} -> {next}");
        }
    }

    #[test]
    fn store_roundtrip_is_exact(
        rows in proptest::collection::vec(proptest::collection::vec(-1.0f32..1.0, 5), 1..60),
    ) {
        let ids: Vec<String> = (0..rows.len()).map(|i| format!("p_{i}")).collect();
        let data: Vec<f32> = rows.iter().flatten().copied().collect();
        let store = VectorStore::build(ids, data, 5).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.psto");
        pvec::store::save_store(&store, &path).unwrap();
        let loaded = pvec::store::load_store(&path).unwrap();

        prop_assert_eq!(loaded.len(), store.len());
        prop_assert_eq!(loaded.ids(), store.ids());
        for i in 0..store.len() {
            prop_assert_eq!(loaded.vector(i), store.vector(i));
            prop_assert_eq!(loaded.norm(i).to_bits(), store.norm(i).to_bits());
        }
    }

    #[test]
    fn retrieval_rates_are_monotone_in_k(
        gold in proptest::collection::vec(proptest::collection::vec(1u32..1200, 1..4), 1..40),
        k_lo in 1u32..600,
        k_hi in 600u32..1200,
    ) {
        let ranks: Vec<QuestionRank> = gold
            .iter()
            .enumerate()
            .map(|(i, golds)| {
                let mut sorted = golds.clone();
                sorted.sort_unstable();
                let mean = sorted.iter().map(|&r| f64::from(r)).sum::<f64>() / sorted.len() as f64;
                QuestionRank {
                    qid: format!("q_{i}"),
                    gold_ranks: sorted,
                    effective_rank: mean,
                }
            })
            .collect();

        for mode in [SuccessMode::AvgRank, SuccessMode::AnyHit] {
            let lo = retrieval_rate(&ranks, k_lo, mode);
            let hi = retrieval_rate(&ranks, k_hi, mode);
            prop_assert!((0.0..=100.0).contains(&lo));
            prop_assert!((0.0..=100.0).contains(&hi));
            prop_assert!(lo <= hi, "rate fell from {lo} to {hi} as k grew");
        }
        // Any gold hit is a weaker success requirement than the averaged rank.
        let k = k_lo;
        prop_assert!(
            retrieval_rate(&ranks, k, SuccessMode::AnyHit)
                >= retrieval_rate(&ranks, k, SuccessMode::AvgRank)
        );
    }

    #[test]
    fn vocab_roundtrip_is_exact(
        tokens in proptest::collection::vec("[a-z]{1,6}", 1..80),
        min_count in 1u64..3,
    ) {
        let passage = corpus::Passage {
            pid: "p_0".into(),
            title: String::new(),
            body_token_count: tokens.len(),
            tokens,
        };
        let Ok(built) = vocab::build_vocab(&[passage], &[], min_count) else {
            // Every token fell below min_count; nothing to round-trip.
            return Ok(());
        };

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.tsv");
        vocab::write_vocab(&built, &path).unwrap();
        let loaded = vocab::read_vocab(&path).unwrap();

        prop_assert_eq!(loaded.len(), built.len());
        prop_assert_eq!(loaded.total_tokens(), built.total_tokens());
        prop_assert_eq!(loaded.min_count(), built.min_count());
        for i in 0..built.len() as u32 {
            prop_assert_eq!(loaded.token(i), built.token(i));
            prop_assert_eq!(loaded.count(i), built.count(i));
            prop_assert_eq!(loaded.index_of(built.token(i)), Some(i));
        }
    }
}
