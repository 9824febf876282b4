//! Query-vector inference: fit a fresh document vector for an unseen
//! question against the frozen trained model.
//!
//! Only the new document vector moves; word vectors, output weights and
//! bias stay untouched. Because the context words are frozen, each
//! position's context sum is precomputed once and reused across passes.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{axpy, dot, sigmoid, softplus, EmbeddingModel, Mode, Softmax};
use crate::seed;
use crate::trainer::{context_window, lr_at};
use crate::vocab::sampling_table;

/// Settings for fitting a query vector. `mode` overrides the model's
/// question-side mode when set; the decay floor is the model's `min_lr`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceConfig {
    /// Passes over the question's samples.
    pub steps: usize,
    pub lr: f32,
    pub seed: u64,
    pub mode: Option<Mode>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            steps: 50,
            lr: 0.014,
            seed: 42,
            mode: None,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::Config("inference steps must be at least 1".into()));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::Config("inference lr must be positive".into()));
        }
        Ok(())
    }
}

/// Embed a question's tokens as a vector. Deterministic under the config
/// seed; the model is read-only.
pub fn infer_vector(
    model: &EmbeddingModel,
    tokens: &[String],
    config: &InferenceConfig,
) -> Result<Vec<f32>> {
    infer_vector_with_trace(model, tokens, config).map(|(v, _)| v)
}

/// As [`infer_vector`], additionally returning the mean loss of each pass.
pub fn infer_vector_with_trace(
    model: &EmbeddingModel,
    tokens: &[String],
    config: &InferenceConfig,
) -> Result<(Vec<f32>, Vec<f64>)> {
    config.validate()?;
    let encoded = model.vocab.encode(tokens);
    if encoded.is_empty() {
        return Err(Error::Data(
            "question cannot be embedded: none of its tokens are in the vocabulary".into(),
        ));
    }

    let dim = model.dim();
    let mode = config.mode.unwrap_or(model.config.mode.question_side());
    let min_lr = model.config.min_lr.min(config.lr);
    let n_positions = encoded.len();

    // Context sums are constant across passes since word vectors are frozen.
    let mut ctx_sums = vec![0.0f32; n_positions * dim];
    let mut input_counts = vec![1.0f32; n_positions];
    if mode == Mode::Dm {
        let mut context = Vec::new();
        for pos in 0..n_positions {
            context_window(&encoded, pos, model.config.window, &mut context);
            let sum = &mut ctx_sums[pos * dim..(pos + 1) * dim];
            for &w in &context {
                axpy(sum, 1.0, model.word_vectors.row(w as usize));
            }
            input_counts[pos] = (1 + context.len()) as f32;
        }
    }

    let mut rng = seed::rng(seed::derive(config.seed, "infer-init"));
    let scale = 1.0 / dim as f32;
    let mut doc: Vec<f32> = (0..dim)
        .map(|_| (rng.random::<f32>() - 0.5) * scale)
        .collect();

    let table = match model.config.softmax {
        Softmax::Sampled { .. } => Some(sampling_table(&model.vocab, 0.75)),
        Softmax::Full => None,
    };
    let mut neg_rng = seed::rng(seed::derive(config.seed, "infer-negatives"));

    let total_visits = (config.steps * n_positions) as u64;
    let mut visit = 0u64;
    let mut h = vec![0.0f32; dim];
    let mut dh = vec![0.0f32; dim];
    let mut negatives: Vec<u32> = Vec::new();
    let mut trace = Vec::with_capacity(config.steps);

    for pass in 0..config.steps {
        let mut pass_loss = 0.0f64;
        for pos in 0..n_positions {
            let lr = lr_at(config.lr, min_lr, visit, total_visits);
            visit += 1;
            let n = input_counts[pos];
            let sum = &ctx_sums[pos * dim..(pos + 1) * dim];
            for j in 0..dim {
                h[j] = (doc[j] + sum[j]) / n;
            }
            dh.fill(0.0);
            let target = encoded[pos];

            let loss = match model.config.softmax {
                Softmax::Sampled { negatives: n_neg } => {
                    let table = table.as_ref().expect("sampled softmax requires a table");
                    table.sample_excluding_into(&mut neg_rng, n_neg, target, &mut negatives);
                    let mut loss = 0.0f64;
                    for (k, &c) in std::iter::once(&target).chain(negatives.iter()).enumerate() {
                        let label = if k == 0 { 1.0f32 } else { 0.0 };
                        let row = model.output_weights.row(c as usize);
                        let y = model.output_bias[c as usize] + dot(row, &h);
                        loss += if k == 0 {
                            softplus(-f64::from(y))
                        } else {
                            softplus(f64::from(y))
                        };
                        axpy(&mut dh, sigmoid(y) - label, row);
                    }
                    loss
                }
                Softmax::Full => {
                    let vocab_size = model.vocab.len();
                    let mut logits = Vec::with_capacity(vocab_size);
                    for i in 0..vocab_size {
                        let y = model.output_bias[i] + dot(model.output_weights.row(i), &h);
                        logits.push(f64::from(y));
                    }
                    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0f64;
                    for y in &mut logits {
                        *y = (*y - max).exp();
                        sum += *y;
                    }
                    for (i, &e) in logits.iter().enumerate() {
                        let g = ((e / sum) - if i as u32 == target { 1.0 } else { 0.0 }) as f32;
                        axpy(&mut dh, g, model.output_weights.row(i));
                    }
                    -(logits[target as usize] / sum).ln()
                }
            };
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: pass,
                    sample_index: pos,
                    doc_key: "<query>".into(),
                });
            }
            pass_loss += loss;
            axpy(&mut doc, -lr / n, &dh);
        }
        trace.push(pass_loss / n_positions as f64);
    }

    Ok((doc, trace))
}

/// Wall-clock latency summary, in milliseconds.
#[derive(Debug, Clone, Serialize)]
pub struct LatencyStats {
    pub queries: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub workers: usize,
    pub hardware: String,
}

pub(crate) fn latency_stats(mut samples_ms: Vec<f64>, workers: usize) -> LatencyStats {
    let queries = samples_ms.len();
    let mean_ms = samples_ms.iter().sum::<f64>() / queries as f64;
    samples_ms.sort_by(f64::total_cmp);
    LatencyStats {
        queries,
        mean_ms,
        p50_ms: percentile(&samples_ms, 0.50),
        p95_ms: percentile(&samples_ms, 0.95),
        min_ms: samples_ms[0],
        max_ms: samples_ms[queries - 1],
        workers,
        hardware: hardware_note(),
    }
}

/// Nearest-rank percentile of an ascending-sorted sample.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// CPU model string for benchmark reports.
pub fn hardware_note() -> String {
    if let Ok(cpuinfo) = std::fs::read_to_string("/proc/cpuinfo") {
        for line in cpuinfo.lines() {
            if let Some(rest) = line.strip_prefix("model name") {
                if let Some((_, name)) = rest.split_once(':') {
                    return name.trim().to_string();
                }
            }
        }
    }
    std::env::consts::ARCH.to_string()
}

/// Time per-query inference over the given queries, single worker.
pub fn bench_infer(
    model: &EmbeddingModel,
    queries: &[Vec<String>],
    config: &InferenceConfig,
) -> Result<LatencyStats> {
    if queries.len() < 10 {
        return Err(Error::Config(format!(
            "inference benchmark needs at least 10 queries, got {}",
            queries.len()
        )));
    }
    let mut samples_ms = Vec::with_capacity(queries.len());
    for (i, tokens) in queries.iter().enumerate() {
        let per_query = InferenceConfig {
            seed: seed::derive_indexed(config.seed, "bench-infer", i as u64),
            ..config.clone()
        };
        let start = Instant::now();
        infer_vector(model, tokens, &per_query)?;
        samples_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(latency_stats(samples_ms, 1))
}
