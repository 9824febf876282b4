//! Embedding model: configuration, parameter matrices, the forward pass
//! and SGD updates for both softmax variants, and checkpoint I/O.
//!
//! The model predicts a target token from the mean of the participating
//! document vectors and context word vectors. Logits are `b + U·h`; the
//! full-softmax path normalizes over the whole vocabulary, the sampled
//! path scores the target plus drawn negatives with independent sigmoids.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::vocab::Vocabulary;

/// Which (identifier, token-sequence) pair kinds are trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// PID keyed to question tokens.
    E1,
    /// E1 plus PID keyed to its own passage tokens.
    E2,
    /// QID keyed to passage and question tokens, plus PID-passage.
    E3,
    /// All four pair kinds.
    E4,
}

impl std::str::FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "e1" => Ok(Experiment::E1),
            "e2" => Ok(Experiment::E2),
            "e3" => Ok(Experiment::E3),
            "e4" => Ok(Experiment::E4),
            other => Err(Error::Config(format!("unknown experiment {other:?}"))),
        }
    }
}

/// Training direction for one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Document vector plus averaged context-window word vectors predict
    /// the target word.
    Dm,
    /// Document vector alone predicts each word of the document.
    Dbow,
}

/// Per-pair mode selection.
///
/// `Auto` trains passage-text pairs in dbow and question-text pairs in
/// dm, which is the variant that worked best; `Dm`/`Dbow` force one mode
/// for every pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModePolicy {
    Auto,
    Dm,
    Dbow,
}

impl ModePolicy {
    pub fn resolve(self, question_text: bool) -> Mode {
        match self {
            ModePolicy::Auto => {
                if question_text {
                    Mode::Dm
                } else {
                    Mode::Dbow
                }
            }
            ModePolicy::Dm => Mode::Dm,
            ModePolicy::Dbow => Mode::Dbow,
        }
    }

    /// Mode applied to question-token pairs; inference reuses it.
    pub fn question_side(self) -> Mode {
        self.resolve(true)
    }
}

impl std::str::FromStr for ModePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(ModePolicy::Auto),
            "dm" => Ok(ModePolicy::Dm),
            "dbow" => Ok(ModePolicy::Dbow),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Output-layer variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Softmax {
    /// Normalize over the whole vocabulary. Exact but only practical for
    /// small vocabularies; kept for tests and gradient checks.
    Full,
    /// Negative sampling with `negatives` draws per target.
    Sampled { negatives: usize },
}

/// Training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vector_size: usize,
    pub window: usize,
    pub min_count: u64,
    pub lr: f32,
    pub min_lr: f32,
    pub epochs: usize,
    pub mode: ModePolicy,
    pub experiment: Experiment,
    pub softmax: Softmax,
    pub seed: u64,
    pub workers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vector_size: 800,
            window: 5,
            min_count: 2,
            lr: 0.014,
            min_lr: 0.007,
            epochs: 10,
            mode: ModePolicy::Auto,
            experiment: Experiment::E2,
            softmax: Softmax::Sampled { negatives: 5 },
            seed: 42,
            workers: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vector_size < 1 {
            return Err(Error::Config("vector_size must be at least 1".into()));
        }
        if self.window < 1 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.min_lr.is_finite()) {
            return Err(Error::Config("learning rates must be finite".into()));
        }
        if self.min_lr <= 0.0 || self.min_lr > self.lr {
            return Err(Error::Config(format!(
                "need 0 < min_lr <= lr, got min_lr={} lr={}",
                self.min_lr, self.lr
            )));
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.workers < 1 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if let Softmax::Sampled { negatives } = self.softmax {
            if negatives < 1 {
                return Err(Error::Config("negatives must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// Dense row-major f32 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// One training instance: the document vectors sharing this context, the
/// context word indices (empty in dbow mode) and the target token index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSample {
    /// Indices into the document-vector table.
    pub doc_keys: Vec<u32>,
    /// Vocabulary indices of the context words.
    pub context: Vec<u32>,
    /// Vocabulary index of the predicted token.
    pub target: u32,
}

/// Trained (or training) parameter set.
pub struct EmbeddingModel {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    doc_keys: Vec<String>,
    doc_index: HashMap<String, u32>,
    pub doc_vectors: Matrix,
    pub word_vectors: Matrix,
    /// Output projection `U`.
    pub output_weights: Matrix,
    /// Output bias `b`.
    pub output_bias: Vec<f32>,
}

/// Initialize a fresh model: document and word vectors uniform in
/// (-0.5/dim, +0.5/dim) under the config seed, output layer at zero.
pub fn init_model(
    vocab: Vocabulary,
    doc_keys: Vec<String>,
    config: ModelConfig,
) -> Result<EmbeddingModel> {
    config.validate()?;
    if doc_keys.is_empty() {
        return Err(Error::Config("model needs at least one document key".into()));
    }
    if vocab.is_empty() {
        return Err(Error::Config("model needs a non-empty vocabulary".into()));
    }

    let mut doc_index = HashMap::with_capacity(doc_keys.len());
    for (i, key) in doc_keys.iter().enumerate() {
        if doc_index.insert(key.clone(), i as u32).is_some() {
            return Err(Error::DuplicateId(key.clone()));
        }
    }

    let dim = config.vector_size;
    let mut rng = seed::rng(seed::derive(config.seed, "model-init"));
    let mut doc_vectors = Matrix::zeros(doc_keys.len(), dim);
    fill_uniform(&mut doc_vectors, &mut rng, dim);
    let mut word_vectors = Matrix::zeros(vocab.len(), dim);
    fill_uniform(&mut word_vectors, &mut rng, dim);

    Ok(EmbeddingModel {
        output_weights: Matrix::zeros(vocab.len(), dim),
        output_bias: vec![0.0; vocab.len()],
        doc_vectors,
        word_vectors,
        doc_index,
        doc_keys,
        config,
        vocab,
    })
}

fn fill_uniform(matrix: &mut Matrix, rng: &mut impl rand::Rng, dim: usize) {
    let scale = 1.0 / dim as f32;
    for v in &mut matrix.data {
        *v = (rng.random::<f32>() - 0.5) * scale;
    }
}

/// Full-softmax forward result.
pub struct FullForward {
    pub hidden: Vec<f32>,
    /// Probability per vocabulary index; sums to 1.
    pub probs: Vec<f64>,
}

/// Sampled forward result: sigmoid score per candidate, target first.
pub struct SampledForward {
    pub hidden: Vec<f32>,
    pub candidates: Vec<u32>,
    pub scores: Vec<f32>,
}

/// Sparse analytic gradients of `-log p(target)` for one sample,
/// accumulated in f64. Rows are keyed by table index; duplicate
/// occurrences within a sample are summed.
#[derive(Debug, Default)]
pub struct Gradients {
    pub doc: Vec<(u32, Vec<f64>)>,
    pub word: Vec<(u32, Vec<f64>)>,
    pub output: Vec<(u32, Vec<f64>)>,
    pub bias: Vec<(u32, f64)>,
}

impl EmbeddingModel {
    pub fn dim(&self) -> usize {
        self.config.vector_size
    }

    pub fn n_docs(&self) -> usize {
        self.doc_keys.len()
    }

    pub fn doc_keys(&self) -> &[String] {
        &self.doc_keys
    }

    pub fn doc_key(&self, index: u32) -> &str {
        &self.doc_keys[index as usize]
    }

    pub fn doc_index_of(&self, key: &str) -> Option<u32> {
        self.doc_index.get(key).copied()
    }

    /// Mean of the participating document and context word vectors.
    pub fn hidden(&self, sample: &TrainingSample) -> Vec<f32> {
        let mut h = vec![0.0f32; self.dim()];
        for &d in &sample.doc_keys {
            axpy(&mut h, 1.0, self.doc_vectors.row(d as usize));
        }
        for &w in &sample.context {
            axpy(&mut h, 1.0, self.word_vectors.row(w as usize));
        }
        let n = (sample.doc_keys.len() + sample.context.len()) as f32;
        for v in &mut h {
            *v /= n;
        }
        h
    }

    /// Softmax over the whole vocabulary (computed in f64).
    pub fn forward_full(&self, sample: &TrainingSample) -> FullForward {
        let hidden = self.hidden(sample);
        let n = self.vocab.len();
        let mut logits = Vec::with_capacity(n);
        for i in 0..n {
            let y = self.output_bias[i] + dot(self.output_weights.row(i), &hidden);
            logits.push(f64::from(y));
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logits.iter().map(|&y| (y - max).exp()).collect();
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        FullForward { hidden, probs }
    }

    /// Sigmoid scores for the target and the given negatives.
    pub fn forward_sampled(&self, sample: &TrainingSample, negatives: &[u32]) -> SampledForward {
        let hidden = self.hidden(sample);
        let mut candidates = Vec::with_capacity(1 + negatives.len());
        candidates.push(sample.target);
        candidates.extend_from_slice(negatives);
        let scores = candidates
            .iter()
            .map(|&c| sigmoid(self.output_bias[c as usize] + dot(self.output_weights.row(c as usize), &hidden)))
            .collect();
        SampledForward {
            hidden,
            candidates,
            scores,
        }
    }

    /// `-log p(target)` under the full softmax.
    pub fn loss_full(&self, sample: &TrainingSample) -> f64 {
        -self.forward_full(sample).probs[sample.target as usize].ln()
    }

    /// Negative-sampling loss for the target plus the given negatives.
    pub fn loss_sampled(&self, sample: &TrainingSample, negatives: &[u32]) -> f64 {
        let hidden = self.hidden(sample);
        let mut loss = softplus(-f64::from(self.logit(sample.target, &hidden)));
        for &neg in negatives {
            loss += softplus(f64::from(self.logit(neg, &hidden)));
        }
        loss
    }

    fn logit(&self, token: u32, hidden: &[f32]) -> f32 {
        self.output_bias[token as usize] + dot(self.output_weights.row(token as usize), hidden)
    }

    /// Analytic gradients under the full softmax.
    pub fn grads_full(&self, sample: &TrainingSample) -> Gradients {
        let FullForward { hidden, probs } = self.forward_full(sample);
        let dim = self.dim();
        let mut dh = vec![0.0f64; dim];
        let mut output = Vec::with_capacity(self.vocab.len());
        let mut bias = Vec::with_capacity(self.vocab.len());
        for (i, &p) in probs.iter().enumerate() {
            let g = p - if i as u32 == sample.target { 1.0 } else { 0.0 };
            let u = self.output_weights.row(i);
            for j in 0..dim {
                dh[j] += g * f64::from(u[j]);
            }
            output.push((i as u32, hidden.iter().map(|&h| g * f64::from(h)).collect()));
            bias.push((i as u32, g));
        }
        self.input_grads(sample, &dh, output, bias)
    }

    /// Analytic gradients under negative sampling with fixed negatives.
    pub fn grads_sampled(&self, sample: &TrainingSample, negatives: &[u32]) -> Gradients {
        let hidden = self.hidden(sample);
        let dim = self.dim();
        let mut dh = vec![0.0f64; dim];
        let mut output: HashMap<u32, Vec<f64>> = HashMap::new();
        let mut bias: HashMap<u32, f64> = HashMap::new();
        let candidates = std::iter::once((sample.target, 1.0f32)).chain(negatives.iter().map(|&n| (n, 0.0)));
        for (c, label) in candidates {
            let g = sigmoid(self.logit(c, &hidden)) - label;
            let u = self.output_weights.row(c as usize);
            for j in 0..dim {
                dh[j] += f64::from(g) * f64::from(u[j]);
            }
            let row = output.entry(c).or_insert_with(|| vec![0.0; dim]);
            for j in 0..dim {
                row[j] += f64::from(g) * f64::from(hidden[j]);
            }
            *bias.entry(c).or_insert(0.0) += f64::from(g);
        }
        let mut output: Vec<_> = output.into_iter().collect();
        output.sort_by_key(|(i, _)| *i);
        let mut bias: Vec<_> = bias.into_iter().collect();
        bias.sort_by_key(|(i, _)| *i);
        self.input_grads(sample, &dh, output, bias)
    }

    fn input_grads(
        &self,
        sample: &TrainingSample,
        dh: &[f64],
        output: Vec<(u32, Vec<f64>)>,
        bias: Vec<(u32, f64)>,
    ) -> Gradients {
        let n = (sample.doc_keys.len() + sample.context.len()) as f64;
        let scaled: Vec<f64> = dh.iter().map(|&v| v / n).collect();
        let mut doc: HashMap<u32, Vec<f64>> = HashMap::new();
        for &d in &sample.doc_keys {
            let row = doc.entry(d).or_insert_with(|| vec![0.0; dh.len()]);
            for (r, s) in row.iter_mut().zip(&scaled) {
                *r += s;
            }
        }
        let mut word: HashMap<u32, Vec<f64>> = HashMap::new();
        for &w in &sample.context {
            let row = word.entry(w).or_insert_with(|| vec![0.0; dh.len()]);
            for (r, s) in row.iter_mut().zip(&scaled) {
                *r += s;
            }
        }
        let mut doc: Vec<_> = doc.into_iter().collect();
        doc.sort_by_key(|(i, _)| *i);
        let mut word: Vec<_> = word.into_iter().collect();
        word.sort_by_key(|(i, _)| *i);
        Gradients {
            doc,
            word,
            output,
            bias,
        }
    }

    /// One SGD step on the full-softmax loss. Returns the sample loss.
    pub fn sgd_step_full(&mut self, sample: &TrainingSample, lr: f32) -> f64 {
        let mut scratch = StepScratch::new(self.dim());
        let params = RawParams::new(self);
        // Safety: exclusive borrow of self guarantees sole access.
        unsafe {
            step_full(
                &params,
                self.vocab.len(),
                &sample.doc_keys,
                &sample.context,
                sample.target,
                lr,
                &mut scratch,
            )
        }
    }

    /// One SGD step on the sampled loss with fixed negatives.
    pub fn sgd_step_sampled(&mut self, sample: &TrainingSample, negatives: &[u32], lr: f32) -> f64 {
        let mut scratch = StepScratch::new(self.dim());
        let params = RawParams::new(self);
        // Safety: exclusive borrow of self guarantees sole access.
        unsafe {
            step_sampled(
                &params,
                &sample.doc_keys,
                &sample.context,
                sample.target,
                negatives,
                lr,
                &mut scratch,
            )
        }
    }

    pub fn all_finite(&self) -> bool {
        self.doc_vectors.is_finite()
            && self.word_vectors.is_finite()
            && self.output_weights.is_finite()
            && self.output_bias.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0f32;
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn axpy(dst: &mut [f32], scale: f32, src: &[f32]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

pub(crate) fn sigmoid(y: f32) -> f32 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x), stable for large |x|.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

// ---------------------------------------------------------------------------
// Shared-parameter SGD steps.
//
// The step functions work through raw row pointers so the same code path
// serves both the safe single-worker loop (exclusive &mut access) and the
// multi-worker hogwild loop, where threads update the shared matrices
// without synchronization and benign races are tolerated.
// ---------------------------------------------------------------------------

pub(crate) struct RawParams {
    doc: *mut f32,
    word: *mut f32,
    output: *mut f32,
    bias: *mut f32,
    dim: usize,
}

unsafe impl Send for RawParams {}
unsafe impl Sync for RawParams {}

impl RawParams {
    pub(crate) fn new(model: &mut EmbeddingModel) -> RawParams {
        RawParams {
            doc: model.doc_vectors.data.as_mut_ptr(),
            word: model.word_vectors.data.as_mut_ptr(),
            output: model.output_weights.data.as_mut_ptr(),
            bias: model.output_bias.as_mut_ptr(),
            dim: model.config.vector_size,
        }
    }

    unsafe fn doc_row(&self, i: u32) -> &mut [f32] {
        std::slice::from_raw_parts_mut(self.doc.add(i as usize * self.dim), self.dim)
    }

    unsafe fn word_row(&self, i: u32) -> &mut [f32] {
        std::slice::from_raw_parts_mut(self.word.add(i as usize * self.dim), self.dim)
    }

    unsafe fn output_row(&self, i: u32) -> &mut [f32] {
        std::slice::from_raw_parts_mut(self.output.add(i as usize * self.dim), self.dim)
    }

    unsafe fn bias_at(&self, i: u32) -> &mut f32 {
        &mut *self.bias.add(i as usize)
    }
}

/// Reusable buffers for the step functions.
pub(crate) struct StepScratch {
    h: Vec<f32>,
    dh: Vec<f32>,
    coeffs: Vec<f32>,
}

impl StepScratch {
    pub(crate) fn new(dim: usize) -> StepScratch {
        StepScratch {
            h: vec![0.0; dim],
            dh: vec![0.0; dim],
            coeffs: Vec::new(),
        }
    }
}

unsafe fn hidden_into(params: &RawParams, docs: &[u32], context: &[u32], h: &mut [f32]) {
    h.fill(0.0);
    for &d in docs {
        axpy(h, 1.0, params.doc_row(d));
    }
    for &w in context {
        axpy(h, 1.0, params.word_row(w));
    }
    let n = (docs.len() + context.len()) as f32;
    for v in h.iter_mut() {
        *v /= n;
    }
}

unsafe fn apply_input_updates(
    params: &RawParams,
    docs: &[u32],
    context: &[u32],
    dh: &[f32],
    lr: f32,
) {
    let n = (docs.len() + context.len()) as f32;
    let scale = -lr / n;
    for &d in docs {
        axpy(params.doc_row(d), scale, dh);
    }
    for &w in context {
        axpy(params.word_row(w), scale, dh);
    }
}

/// SGD step on the negative-sampling loss. Gradient coefficients are
/// computed against the pre-step parameters, then applied.
pub(crate) unsafe fn step_sampled(
    params: &RawParams,
    docs: &[u32],
    context: &[u32],
    target: u32,
    negatives: &[u32],
    lr: f32,
    scratch: &mut StepScratch,
) -> f64 {
    let StepScratch { h, dh, coeffs } = scratch;
    hidden_into(params, docs, context, h);
    dh.fill(0.0);
    coeffs.clear();

    let mut loss = 0.0f64;
    for (k, &c) in std::iter::once(&target).chain(negatives.iter()).enumerate() {
        let label = if k == 0 { 1.0f32 } else { 0.0 };
        let y = *params.bias_at(c) + dot(params.output_row(c), h);
        loss += if k == 0 {
            softplus(-f64::from(y))
        } else {
            softplus(f64::from(y))
        };
        let g = sigmoid(y) - label;
        axpy(dh, g, params.output_row(c));
        coeffs.push(g);
    }
    for (k, &c) in std::iter::once(&target).chain(negatives.iter()).enumerate() {
        let g = coeffs[k];
        axpy(params.output_row(c), -lr * g, h);
        *params.bias_at(c) -= lr * g;
    }
    apply_input_updates(params, docs, context, dh, lr);
    loss
}

/// SGD step on the full-softmax loss (probabilities in f64).
pub(crate) unsafe fn step_full(
    params: &RawParams,
    vocab_size: usize,
    docs: &[u32],
    context: &[u32],
    target: u32,
    lr: f32,
    scratch: &mut StepScratch,
) -> f64 {
    let StepScratch { h, dh, coeffs } = scratch;
    hidden_into(params, docs, context, h);
    dh.fill(0.0);
    coeffs.clear();

    let mut logits = Vec::with_capacity(vocab_size);
    for i in 0..vocab_size {
        let y = *params.bias_at(i as u32) + dot(params.output_row(i as u32), h);
        logits.push(f64::from(y));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0f64;
    for y in &mut logits {
        *y = (*y - max).exp();
        sum += *y;
    }
    let loss = -(logits[target as usize] / sum).ln();

    for (i, &e) in logits.iter().enumerate() {
        let p = e / sum;
        let g = (p - if i as u32 == target { 1.0 } else { 0.0 }) as f32;
        axpy(dh, g, params.output_row(i as u32));
        coeffs.push(g);
    }
    for (i, &g) in coeffs.iter().enumerate() {
        axpy(params.output_row(i as u32), -lr * g, h);
        *params.bias_at(i as u32) -= lr * g;
    }
    apply_input_updates(params, docs, context, dh, lr);
    loss
}

// ---------------------------------------------------------------------------
// Checkpoint format
//
//   magic "PVEC" | version u32 | vector_size u32 | vocab_size u64 |
//   n_docs u64 | config JSON (u32 length + UTF-8) |
//   doc keys (u32 length + UTF-8 each) |
//   doc_vectors, word_vectors, U as row-major LE f32 | b as LE f32
// ---------------------------------------------------------------------------

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PVEC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Write the model checkpoint. The vocabulary itself is stored separately
/// (`vocab.tsv`); the checkpoint records only its size.
pub fn save_checkpoint(model: &EmbeddingModel, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(model.dim() as u32).to_le_bytes())?;
    out.write_all(&(model.vocab.len() as u64).to_le_bytes())?;
    out.write_all(&(model.n_docs() as u64).to_le_bytes())?;

    let config_json =
        serde_json::to_vec(&model.config).map_err(|e| Error::Data(e.to_string()))?;
    write_bytes(&mut out, &config_json)?;
    for key in &model.doc_keys {
        write_bytes(&mut out, key.as_bytes())?;
    }
    write_matrix(&mut out, &model.doc_vectors)?;
    write_matrix(&mut out, &model.word_vectors)?;
    write_matrix(&mut out, &model.output_weights)?;
    write_f32s(&mut out, &model.output_bias)?;
    out.flush()?;
    Ok(())
}

/// Read a checkpoint back; the caller supplies the matching vocabulary.
pub fn load_checkpoint(path: &Path, vocab: Vocabulary) -> Result<EmbeddingModel> {
    let mut input = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    read_exact(&mut input, &mut magic, "checkpoint magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: CHECKPOINT_MAGIC,
            found: magic,
        });
    }
    let version = read_u32(&mut input, "checkpoint version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let dim = read_u32(&mut input, "vector size")? as usize;
    let vocab_size = read_u64(&mut input, "vocab size")? as usize;
    let n_docs = read_u64(&mut input, "doc count")? as usize;
    if vocab.len() != vocab_size {
        return Err(Error::Data(format!(
            "vocabulary has {} tokens but checkpoint expects {vocab_size}",
            vocab.len()
        )));
    }

    let config_json = read_bytes(&mut input, "config echo")?;
    let config: ModelConfig =
        serde_json::from_slice(&config_json).map_err(|e| Error::Data(format!("config echo: {e}")))?;
    if config.vector_size != dim {
        return Err(Error::Data(format!(
            "config echo vector_size {} disagrees with header {dim}",
            config.vector_size
        )));
    }

    let mut doc_keys = Vec::with_capacity(n_docs.min(1 << 24));
    let mut doc_index = HashMap::with_capacity(n_docs.min(1 << 24));
    for _ in 0..n_docs {
        let bytes = read_bytes(&mut input, "doc key")?;
        let key = String::from_utf8(bytes)
            .map_err(|_| Error::Data("doc key is not valid UTF-8".into()))?;
        if doc_index.insert(key.clone(), doc_keys.len() as u32).is_some() {
            return Err(Error::DuplicateId(key));
        }
        doc_keys.push(key);
    }

    let doc_vectors = read_matrix(&mut input, n_docs, dim, "doc vectors")?;
    let word_vectors = read_matrix(&mut input, vocab_size, dim, "word vectors")?;
    let output_weights = read_matrix(&mut input, vocab_size, dim, "output weights")?;
    let mut output_bias = vec![0.0f32; vocab_size];
    read_f32s(&mut input, &mut output_bias, "output bias")?;

    let mut probe = [0u8; 1];
    if input.read(&mut probe)? != 0 {
        return Err(Error::Data("trailing bytes after checkpoint payload".into()));
    }

    Ok(EmbeddingModel {
        config,
        vocab,
        doc_keys,
        doc_index,
        doc_vectors,
        word_vectors,
        output_weights,
        output_bias,
    })
}

pub(crate) fn write_bytes<W: Write>(out: &mut W, bytes: &[u8]) -> Result<()> {
    out.write_all(&(bytes.len() as u32).to_le_bytes())?;
    out.write_all(bytes)?;
    Ok(())
}

pub(crate) fn read_bytes<R: Read>(input: &mut R, what: &str) -> Result<Vec<u8>> {
    let len = read_u32(input, what)? as usize;
    if len > (1 << 24) {
        return Err(Error::Data(format!("unreasonable length {len} for {what}")));
    }
    let mut buf = vec![0u8; len];
    read_exact(input, &mut buf, what)?;
    Ok(buf)
}

pub(crate) fn write_f32s<W: Write>(out: &mut W, values: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(4096);
    for chunk in values.chunks(1024) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub(crate) fn read_f32s<R: Read>(input: &mut R, values: &mut [f32], what: &str) -> Result<()> {
    let mut buf = vec![0u8; 4096];
    for chunk in values.chunks_mut(1024) {
        let bytes = &mut buf[..chunk.len() * 4];
        read_exact(input, bytes, what)?;
        for (v, b) in chunk.iter_mut().zip(bytes.chunks_exact(4)) {
            *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
    }
    Ok(())
}

fn write_matrix<W: Write>(out: &mut W, matrix: &Matrix) -> Result<()> {
    write_f32s(out, &matrix.data)
}

fn read_matrix<R: Read>(input: &mut R, rows: usize, cols: usize, what: &str) -> Result<Matrix> {
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Data(format!("matrix dimensions overflow for {what}")))?;
    let mut matrix = Matrix {
        rows,
        cols,
        data: vec![0.0; len],
    };
    read_f32s(input, &mut matrix.data, what)?;
    Ok(matrix)
}

pub(crate) fn read_u32<R: Read>(input: &mut R, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(input, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn read_u64<R: Read>(input: &mut R, what: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(input, &mut buf, what)?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn read_exact<R: Read>(input: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated(what.to_string())
        } else {
            Error::Io(e)
        }
    })
}
