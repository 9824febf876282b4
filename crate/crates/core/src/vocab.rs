//! Shared token vocabulary with frequency filtering and the unigram
//! sampling table used to draw negatives.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::corpus::{Passage, Question};
use crate::error::{Error, Result};

/// Immutable token vocabulary.
///
/// Indices are dense in `[0, len)`, assigned by descending count with
/// lexicographic tie-break, so construction is deterministic. Tokens seen
/// fewer than `min_count` times are dropped; their occurrences are still
/// reflected in `total_tokens`.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_index: HashMap<String, u32>,
    tokens: Vec<String>,
    counts: Vec<u64>,
    total_tokens: u64,
    min_count: u64,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.token_to_index.get(token).copied()
    }

    pub fn token(&self, index: u32) -> &str {
        &self.tokens[index as usize]
    }

    pub fn count(&self, index: u32) -> u64 {
        self.counts[index as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Total token occurrences seen at build time, including dropped ones.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Occurrences belonging to tokens that fell below `min_count`.
    pub fn dropped_occurrences(&self) -> u64 {
        self.total_tokens - self.counts.iter().sum::<u64>()
    }

    /// Map a token sequence to indices, silently skipping unknown tokens.
    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().filter_map(|t| self.index_of(t)).collect()
    }
}

/// Count tokens over all passages and the training questions, then keep
/// tokens with count >= `min_count`.
///
/// Validation and test questions must not be passed in: their tokens do
/// not contribute counts.
pub fn build_vocab(
    passages: &[Passage],
    train_questions: &[Question],
    min_count: u64,
) -> Result<Vocabulary> {
    assert!(min_count >= 1, "min_count must be at least 1");

    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut total = 0u64;
    let all_tokens = passages
        .iter()
        .flat_map(|p| p.tokens.iter())
        .chain(train_questions.iter().flat_map(|q| q.tokens.iter()));
    for token in all_tokens {
        *counts.entry(token.as_str()).or_insert(0) += 1;
        total += 1;
    }

    let mut retained: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .collect();
    if retained.is_empty() {
        return Err(Error::Data(
            "no trainable vocabulary: every token fell below min_count".into(),
        ));
    }
    retained.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut vocab = Vocabulary {
        token_to_index: HashMap::with_capacity(retained.len()),
        tokens: Vec::with_capacity(retained.len()),
        counts: Vec::with_capacity(retained.len()),
        total_tokens: total,
        min_count,
    };
    for (i, (token, count)) in retained.into_iter().enumerate() {
        vocab.token_to_index.insert(token.to_string(), i as u32);
        vocab.tokens.push(token.to_string());
        vocab.counts.push(count);
    }
    Ok(vocab)
}

/// Cumulative distribution over token indices with probability
/// proportional to `count^power`. Used to draw negative samples.
#[derive(Debug, Clone)]
pub struct SamplingTable {
    cumulative: Vec<f64>,
}

/// Build the sampling table; `power` 0.75 is the usual unigram smoothing,
/// `power` 0 gives a uniform distribution.
pub fn sampling_table(vocab: &Vocabulary, power: f64) -> SamplingTable {
    assert!(!vocab.is_empty(), "sampling table needs a non-empty vocabulary");
    let weights: Vec<f64> = vocab.counts().iter().map(|&c| (c as f64).powf(power)).collect();
    let total: f64 = weights.iter().sum();
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in &weights {
        acc += w / total;
        cumulative.push(acc);
    }
    SamplingTable { cumulative }
}

impl SamplingTable {
    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    /// Probability of token `i` (difference of adjacent cumulative entries).
    pub fn probability(&self, i: usize) -> f64 {
        if i == 0 {
            self.cumulative[0]
        } else {
            self.cumulative[i] - self.cumulative[i - 1]
        }
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Draw one token index.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> u32 {
        let x: f64 = rng.random();
        self.cumulative.partition_point(|&c| c <= x) as u32
    }

    /// Draw `n` token indices, none equal to `exclude` (resample on
    /// collision). Returns fewer than `n` only when the vocabulary has a
    /// single token, in which case no valid negative exists.
    pub fn sample_excluding<R: Rng>(&self, rng: &mut R, n: usize, exclude: u32) -> Vec<u32> {
        let mut out = Vec::with_capacity(n);
        self.sample_excluding_into(rng, n, exclude, &mut out);
        out
    }

    /// Like [`sample_excluding`](Self::sample_excluding) but reuses the
    /// caller's buffer, for per-sample draws in training loops.
    pub fn sample_excluding_into<R: Rng>(
        &self,
        rng: &mut R,
        n: usize,
        exclude: u32,
        out: &mut Vec<u32>,
    ) {
        out.clear();
        if self.cumulative.len() <= 1 {
            return;
        }
        while out.len() < n {
            let candidate = self.sample(rng);
            if candidate != exclude {
                out.push(candidate);
            }
        }
    }
}

/// Write `vocab.tsv`: a header carrying total_tokens and min_count,
/// then one `token<TAB>index<TAB>count` line per retained token.
pub fn write_vocab(vocab: &Vocabulary, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "#total_tokens={}\tmin_count={}",
        vocab.total_tokens, vocab.min_count
    )?;
    for i in 0..vocab.len() {
        writeln!(out, "{}\t{}\t{}", vocab.tokens[i], i, vocab.counts[i])?;
    }
    out.flush()?;
    Ok(())
}

/// Read `vocab.tsv` back.
pub fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();

    let header = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty vocab file", path.display())))??;
    let bad_header = || Error::Data(format!("{}: malformed vocab header", path.display()));
    let mut total_tokens = None;
    let mut min_count = None;
    for field in header.trim_start_matches('#').split('\t') {
        match field.split_once('=') {
            Some(("total_tokens", v)) => total_tokens = v.parse().ok(),
            Some(("min_count", v)) => min_count = v.parse().ok(),
            _ => {}
        }
    }
    let (total_tokens, min_count) = match (total_tokens, min_count) {
        (Some(t), Some(m)) => (t, m),
        _ => return Err(bad_header()),
    };

    let mut vocab = Vocabulary {
        token_to_index: HashMap::new(),
        tokens: Vec::new(),
        counts: Vec::new(),
        total_tokens,
        min_count,
    };
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (token, index, count) = match (fields.next(), fields.next(), fields.next()) {
            (Some(t), Some(i), Some(c)) => (t, i, c),
            _ => {
                return Err(Error::Data(format!(
                    "{}:{}: malformed vocab line",
                    path.display(),
                    lineno + 2
                )))
            }
        };
        let index: u32 = index
            .parse()
            .map_err(|_| Error::Data(format!("{}: bad index {index:?}", path.display())))?;
        if index as usize != vocab.tokens.len() {
            return Err(Error::Data(format!(
                "{}: non-dense index {index} at position {}",
                path.display(),
                vocab.tokens.len()
            )));
        }
        let count: u64 = count
            .parse()
            .map_err(|_| Error::Data(format!("{}: bad count {count:?}", path.display())))?;
        if vocab
            .token_to_index
            .insert(token.to_string(), index)
            .is_some()
        {
            return Err(Error::DuplicateId(token.to_string()));
        }
        vocab.tokens.push(token.to_string());
        vocab.counts.push(count);
    }
    if vocab.is_empty() {
        return Err(Error::Data(format!("{}: vocab has no tokens", path.display())));
    }
    Ok(vocab)
}
