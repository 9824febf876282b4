//! Sample generation and the SGD training loop.
//!
//! Training data is a list of (document key, token sequence) pairs chosen
//! by the experiment: passage identifiers keyed to question or passage
//! tokens, question identifiers likewise. Every in-vocabulary token of a
//! pair becomes one sample; the loop shuffles the samples each epoch and
//! applies one gradient step per sample with a linearly decaying
//! learning rate.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;

use crate::corpus::{DatasetSplit, Passage, Question};
use crate::error::{Error, Result};
use crate::model::{
    init_model, step_full, step_sampled, EmbeddingModel, Experiment, Mode, ModelConfig,
    RawParams, Softmax, StepScratch, TrainingSample,
};
use crate::seed;
use crate::vocab::{build_vocab, sampling_table, SamplingTable};

/// The four trained pair kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    /// Passage identifier keyed to question tokens.
    PidQ,
    /// Passage identifier keyed to its own passage tokens.
    PidP,
    /// Question identifier keyed to gold-passage tokens.
    QidP,
    /// Question identifier keyed to its own question tokens.
    QidQ,
}

impl PairKind {
    /// Whether the token side is question text (drives mode resolution).
    pub fn question_text(self) -> bool {
        matches!(self, PairKind::PidQ | PairKind::QidQ)
    }

    pub fn label(self) -> &'static str {
        match self {
            PairKind::PidQ => "pid-q",
            PairKind::PidP => "pid-p",
            PairKind::QidP => "qid-p",
            PairKind::QidQ => "qid-q",
        }
    }
}

/// One training pair before encoding; borrows from the corpus and split.
#[derive(Debug, Clone, Copy)]
pub struct PairSpec<'a> {
    pub doc_key: &'a str,
    pub tokens: &'a [String],
    pub kind: PairKind,
}

/// Document keys for the model table: every corpus passage, plus train
/// question identifiers for the experiments that key pairs by QID.
pub fn build_doc_keys(
    corpus: &[Passage],
    train: &[Question],
    experiment: Experiment,
) -> Vec<String> {
    let mut keys: Vec<String> = corpus.iter().map(|p| p.pid.clone()).collect();
    if matches!(experiment, Experiment::E3 | Experiment::E4) {
        keys.extend(train.iter().map(|q| q.qid.clone()));
    }
    keys
}

/// Enumerate the training pairs for an experiment. Only train-split
/// questions contribute; validation and test questions never appear.
pub fn pair_specs<'a>(
    experiment: Experiment,
    split: &'a DatasetSplit,
    corpus: &'a [Passage],
) -> Result<Vec<PairSpec<'a>>> {
    let by_pid: HashMap<&str, &Passage> =
        corpus.iter().map(|p| (p.pid.as_str(), p)).collect();
    let gold_passage = |pid: &str| -> Result<&'a Passage> {
        by_pid.get(pid).copied().ok_or_else(|| {
            Error::Data(format!("gold passage {pid} is not in the corpus"))
        })
    };

    let mut pairs = Vec::new();
    let push_pid_q = |pairs: &mut Vec<PairSpec<'a>>| {
        for q in &split.train {
            for pid in &q.gold_pids {
                pairs.push(PairSpec {
                    doc_key: pid,
                    tokens: &q.tokens,
                    kind: PairKind::PidQ,
                });
            }
        }
    };
    let push_pid_p = |pairs: &mut Vec<PairSpec<'a>>| {
        for p in corpus {
            pairs.push(PairSpec {
                doc_key: &p.pid,
                tokens: &p.tokens,
                kind: PairKind::PidP,
            });
        }
    };

    match experiment {
        Experiment::E1 => push_pid_q(&mut pairs),
        Experiment::E2 => {
            push_pid_q(&mut pairs);
            push_pid_p(&mut pairs);
        }
        Experiment::E3 | Experiment::E4 => {
            if experiment == Experiment::E4 {
                push_pid_q(&mut pairs);
            }
            for q in &split.train {
                for pid in &q.gold_pids {
                    pairs.push(PairSpec {
                        doc_key: &q.qid,
                        tokens: &gold_passage(pid)?.tokens,
                        kind: PairKind::QidP,
                    });
                }
            }
            for q in &split.train {
                pairs.push(PairSpec {
                    doc_key: &q.qid,
                    tokens: &q.tokens,
                    kind: PairKind::QidQ,
                });
            }
            push_pid_p(&mut pairs);
        }
    }
    Ok(pairs)
}

/// Context indices within `window` of `pos`, excluding `pos` itself.
pub(crate) fn context_window(tokens: &[u32], pos: usize, window: usize, out: &mut Vec<u32>) {
    out.clear();
    let lo = pos.saturating_sub(window);
    let hi = (pos + window + 1).min(tokens.len());
    out.extend_from_slice(&tokens[lo..pos]);
    out.extend_from_slice(&tokens[pos + 1..hi]);
}

/// One sample per token position over an already-encoded sequence:
/// dm mode pairs each target with its window context, dbow mode predicts
/// each token from the document vector alone.
pub fn generate_samples(doc: u32, tokens: &[u32], mode: Mode, window: usize) -> Vec<TrainingSample> {
    let mut samples = Vec::with_capacity(tokens.len());
    let mut context = Vec::new();
    for pos in 0..tokens.len() {
        if mode == Mode::Dm {
            context_window(tokens, pos, window, &mut context);
        }
        samples.push(TrainingSample {
            doc_keys: vec![doc],
            context: context.clone(),
            target: tokens[pos],
        });
    }
    samples
}

/// Per-epoch training statistics.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Mean per-sample loss for each epoch.
    pub epoch_loss: Vec<f64>,
    pub samples_per_epoch: usize,
    /// Pairs that survived vocabulary encoding.
    pub pairs_trained: usize,
    /// Pairs dropped because every token was out of vocabulary.
    pub pairs_dropped: usize,
}

struct EncodedPair {
    doc: u32,
    tokens: Vec<u32>,
    mode: Mode,
}

struct ShardFailure {
    epoch: usize,
    sample_index: usize,
    doc: u32,
}

/// Train the model in place over the given pairs. Single-worker runs are
/// bit-deterministic under the config seed; multi-worker runs share the
/// parameter matrices without synchronization.
pub fn train(model: &mut EmbeddingModel, pairs: &[PairSpec]) -> Result<TrainOutcome> {
    if pairs.is_empty() {
        return Err(Error::Data("no training pairs for this experiment".into()));
    }

    let mut encoded = Vec::with_capacity(pairs.len());
    let mut pairs_dropped = 0usize;
    for spec in pairs {
        let tokens = model.vocab.encode(spec.tokens);
        if tokens.is_empty() {
            pairs_dropped += 1;
            continue;
        }
        let doc = model.doc_index_of(spec.doc_key).ok_or_else(|| {
            Error::Data(format!(
                "pair key {} has no row in the model's document table",
                spec.doc_key
            ))
        })?;
        encoded.push(EncodedPair {
            doc,
            tokens,
            mode: model.config.mode.resolve(spec.kind.question_text()),
        });
    }

    let mut samples: Vec<(u32, u32)> = Vec::new();
    for (pi, pair) in encoded.iter().enumerate() {
        for pos in 0..pair.tokens.len() {
            samples.push((pi as u32, pos as u32));
        }
    }
    if samples.is_empty() {
        return Err(Error::Data(
            "no trainable samples: every pair token is out of vocabulary".into(),
        ));
    }

    let config = model.config.clone();
    let table = match config.softmax {
        Softmax::Sampled { .. } => Some(sampling_table(&model.vocab, 0.75)),
        Softmax::Full => None,
    };
    let vocab_size = model.vocab.len();
    let samples_per_epoch = samples.len();
    let total_scheduled = (config.epochs * samples_per_epoch) as u64;
    let step_counter = AtomicU64::new(0);
    let params = RawParams::new(model);

    let mut epoch_loss = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        shuffle_epoch(&mut samples, config.seed, epoch);

        let workers = config.workers.min(samples_per_epoch);
        let shard_len = samples_per_epoch.div_ceil(workers);
        let shards: Vec<&[(u32, u32)]> = samples.chunks(shard_len).collect();

        let run =
            |shard: &[(u32, u32)], offset: usize, worker: usize| -> std::result::Result<f64, ShardFailure> {
                run_shard(ShardContext {
                    params: &params,
                    config: &config,
                    encoded: &encoded,
                    table: table.as_ref(),
                    vocab_size,
                    step_counter: &step_counter,
                    total_scheduled,
                    epoch,
                    shard,
                    shard_offset: offset,
                    worker,
                })
            };

        let epoch_total = if shards.len() == 1 {
            run(shards[0], 0, 0).map_err(|f| f.into_error(model))?
        } else {
            let outcomes = std::thread::scope(|scope| {
                let handles: Vec<_> = shards
                    .iter()
                    .enumerate()
                    .map(|(w, shard)| {
                        let run = &run;
                        scope.spawn(move || run(shard, w * shard_len, w))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("training worker panicked"))
                    .collect::<Vec<_>>()
            });
            let mut total = 0.0f64;
            for outcome in outcomes {
                total += outcome.map_err(|f| f.into_error(model))?;
            }
            total
        };
        epoch_loss.push(epoch_total / samples_per_epoch as f64);
    }

    Ok(TrainOutcome {
        epoch_loss,
        samples_per_epoch,
        pairs_trained: encoded.len(),
        pairs_dropped,
    })
}

impl ShardFailure {
    fn into_error(self, model: &EmbeddingModel) -> Error {
        Error::NonFiniteLoss {
            epoch: self.epoch,
            sample_index: self.sample_index,
            doc_key: model.doc_key(self.doc).to_string(),
        }
    }
}

struct ShardContext<'a> {
    params: &'a RawParams,
    config: &'a ModelConfig,
    encoded: &'a [EncodedPair],
    table: Option<&'a SamplingTable>,
    vocab_size: usize,
    step_counter: &'a AtomicU64,
    total_scheduled: u64,
    epoch: usize,
    shard: &'a [(u32, u32)],
    shard_offset: usize,
    worker: usize,
}

fn run_shard(ctx: ShardContext) -> std::result::Result<f64, ShardFailure> {
    let ShardContext {
        params,
        config,
        encoded,
        table,
        vocab_size,
        step_counter,
        total_scheduled,
        epoch,
        shard,
        shard_offset,
        worker,
    } = ctx;

    let mut scratch = StepScratch::new(config.vector_size);
    let mut context: Vec<u32> = Vec::new();
    let mut negatives: Vec<u32> = Vec::new();
    let mut neg_rng = seed::rng(seed::derive_indexed(
        config.seed,
        "train-negatives",
        (epoch * config.workers + worker) as u64,
    ));
    let mut total = 0.0f64;

    for (local, &(pi, pos)) in shard.iter().enumerate() {
        let pair = &encoded[pi as usize];
        let pos = pos as usize;
        let step = step_counter.fetch_add(1, Ordering::Relaxed);
        let lr = lr_at(config.lr, config.min_lr, step, total_scheduled);

        match pair.mode {
            Mode::Dm => context_window(&pair.tokens, pos, config.window, &mut context),
            Mode::Dbow => context.clear(),
        }
        let target = pair.tokens[pos];

        // Safety: rows are updated lock-free; overlapping writes between
        // workers are tolerated by design.
        let loss = unsafe {
            match config.softmax {
                Softmax::Sampled { negatives: n } => {
                    let table = table.expect("sampled softmax requires a sampling table");
                    table.sample_excluding_into(&mut neg_rng, n, target, &mut negatives);
                    step_sampled(
                        params,
                        &[pair.doc],
                        &context,
                        target,
                        &negatives,
                        lr,
                        &mut scratch,
                    )
                }
                Softmax::Full => step_full(
                    params,
                    vocab_size,
                    &[pair.doc],
                    &context,
                    target,
                    lr,
                    &mut scratch,
                ),
            }
        };
        if !loss.is_finite() {
            return Err(ShardFailure {
                epoch,
                sample_index: shard_offset + local,
                doc: pair.doc,
            });
        }
        total += loss;
    }
    total
        .is_finite()
        .then_some(total)
        .ok_or(ShardFailure {
            epoch,
            sample_index: shard_offset,
            doc: shard.first().map(|&(pi, _)| encoded[pi as usize].doc).unwrap_or(0),
        })
}

/// Linear decay from `lr` to `min_lr` across the scheduled sample count.
pub fn lr_at(lr: f32, min_lr: f32, step: u64, total_scheduled: u64) -> f32 {
    if total_scheduled == 0 {
        return lr;
    }
    let progress = (step as f64 / total_scheduled as f64).min(1.0);
    lr - (lr - min_lr) * progress as f32
}

pub(crate) fn shuffle_epoch(samples: &mut [(u32, u32)], seed: u64, epoch: usize) {
    let mut rng = seed::rng(seed::derive_indexed(seed, "epoch-shuffle", epoch as u64));
    samples.shuffle(&mut rng);
}

/// Build vocabulary, document table and pairs for the experiment, then
/// train a fresh model.
pub fn train_model(
    corpus: &[Passage],
    split: &DatasetSplit,
    config: ModelConfig,
) -> Result<(EmbeddingModel, TrainOutcome)> {
    config.validate()?;
    let vocab = build_vocab(corpus, &split.train, config.min_count)?;
    let doc_keys = build_doc_keys(corpus, &split.train, config.experiment);
    let mut model = init_model(vocab, doc_keys, config)?;
    let pairs = pair_specs(model.config.experiment, split, corpus)?;
    let outcome = train(&mut model, &pairs)?;
    Ok((model, outcome))
}
