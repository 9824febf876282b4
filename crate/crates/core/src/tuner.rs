//! Hyperparameter search over the training configuration, scored on the
//! validation split. Grid search walks the cross product of the space
//! (continuous ranges sampled at their ends and log-midpoint); random
//! search draws configurations under a seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::corpus::{DatasetSplit, Passage};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions};
use crate::infer::InferenceConfig;
use crate::model::ModelConfig;
use crate::seed;
use crate::trainer::train_model;

/// Candidate values per hyperparameter: explicit choices for the
/// discrete ones, inclusive ranges for the continuous ones.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchSpace {
    pub vector_size: Vec<usize>,
    pub window: Vec<usize>,
    pub lr: (f32, f32),
    pub min_lr: (f32, f32),
    pub epochs: (usize, usize),
    pub min_count: Vec<u64>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            vector_size: vec![100, 500, 650, 800, 1000],
            window: vec![3, 5, 10],
            lr: (0.001, 0.1),
            min_lr: (0.0001, 0.01),
            epochs: (5, 20),
            min_count: vec![1, 2, 3],
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.vector_size.is_empty() || self.window.is_empty() || self.min_count.is_empty() {
            return Err(Error::Config("search space has an empty choice set".into()));
        }
        for (name, (lo, hi)) in [("lr", self.lr), ("min_lr", self.min_lr)] {
            if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || lo > hi {
                return Err(Error::Config(format!(
                    "search space {name} range needs 0 < lower <= upper, got [{lo}, {hi}]"
                )));
            }
        }
        if self.epochs.0 < 1 || self.epochs.0 > self.epochs.1 {
            return Err(Error::Config(format!(
                "search space epochs range needs 1 <= lower <= upper, got [{}, {}]",
                self.epochs.0, self.epochs.1
            )));
        }
        Ok(())
    }

    pub fn contains(&self, config: &ModelConfig) -> bool {
        self.vector_size.contains(&config.vector_size)
            && self.window.contains(&config.window)
            && self.min_count.contains(&config.min_count)
            && (self.lr.0..=self.lr.1).contains(&config.lr)
            && (self.min_lr.0..=self.min_lr.1.max(config.lr)).contains(&config.min_lr)
            && (self.epochs.0..=self.epochs.1).contains(&config.epochs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Grid,
    Random { trials: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Maximize the validation top-20 retrieval rate.
    Top20Rate,
    /// Minimize the validation mean rank.
    MeanRank,
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "top20_rate" => Ok(Objective::Top20Rate),
            "mean_rank" => Ok(Objective::MeanRank),
            other => Err(Error::Config(format!("unknown objective {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trial {
    pub index: usize,
    pub config: ModelConfig,
    pub top20_rate: f64,
    pub mean_rank: f64,
    pub wall_ms: f64,
}

#[derive(Debug)]
pub struct TuneOutcome {
    pub best: ModelConfig,
    pub best_objective: f64,
    pub trials: Vec<Trial>,
}

/// Whether trial `a` beats trial `b`: better objective, ties broken by
/// smaller vector_size, then fewer epochs.
pub(crate) fn better_trial(a: &Trial, b: &Trial, objective: Objective) -> bool {
    let (va, vb) = match objective {
        Objective::Top20Rate => (a.top20_rate, b.top20_rate),
        Objective::MeanRank => (-a.mean_rank, -b.mean_rank),
    };
    match va.total_cmp(&vb) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => (a.config.vector_size, a.config.epochs)
            < (b.config.vector_size, b.config.epochs),
    }
}

/// Ends plus log-space midpoint of a positive range, deduplicated.
fn grid_points(lo: f32, hi: f32) -> Vec<f32> {
    let mid = (f64::from(lo) * f64::from(hi)).sqrt() as f32;
    let mut points = vec![lo, mid, hi];
    points.dedup();
    points
}

fn grid_epochs(lo: usize, hi: usize) -> Vec<usize> {
    let mut points = vec![lo, lo + (hi - lo) / 2, hi];
    points.dedup();
    points
}

fn grid_configs(space: &SearchSpace, base: &ModelConfig) -> Vec<ModelConfig> {
    let mut configs = Vec::new();
    for &vector_size in &space.vector_size {
        for &window in &space.window {
            for &min_count in &space.min_count {
                for &lr in &grid_points(space.lr.0, space.lr.1) {
                    for &min_lr in &grid_points(space.min_lr.0, space.min_lr.1) {
                        for &epochs in &grid_epochs(space.epochs.0, space.epochs.1) {
                            configs.push(ModelConfig {
                                vector_size,
                                window,
                                min_count,
                                lr,
                                min_lr: min_lr.min(lr),
                                epochs,
                                ..base.clone()
                            });
                        }
                    }
                }
            }
        }
    }
    configs
}

fn log_uniform(rng: &mut impl Rng, lo: f32, hi: f32) -> f32 {
    let (llo, lhi) = (f64::from(lo).ln(), f64::from(hi).ln());
    (llo + (lhi - llo) * rng.random::<f64>()).exp() as f32
}

fn random_configs(
    space: &SearchSpace,
    base: &ModelConfig,
    trials: usize,
    tune_seed: u64,
) -> Vec<ModelConfig> {
    (0..trials)
        .map(|i| {
            let mut rng = seed::rng(seed::derive_indexed(tune_seed, "tune-trial", i as u64));
            let vector_size = space.vector_size[rng.random_range(0..space.vector_size.len())];
            let window = space.window[rng.random_range(0..space.window.len())];
            let min_count = space.min_count[rng.random_range(0..space.min_count.len())];
            let lr = log_uniform(&mut rng, space.lr.0, space.lr.1);
            let min_lr = log_uniform(&mut rng, space.min_lr.0, space.min_lr.1).min(lr);
            let epochs = rng.random_range(space.epochs.0..=space.epochs.1);
            ModelConfig {
                vector_size,
                window,
                min_count,
                lr,
                min_lr,
                epochs,
                ..base.clone()
            }
        })
        .collect()
}

/// Train and score every candidate configuration on the validation
/// split, returning the best and the full trial log. All trials share
/// one derived training seed so differences come from the
/// hyperparameters alone.
pub fn tune(
    space: &SearchSpace,
    strategy: Strategy,
    objective: Objective,
    corpus: &[Passage],
    split: &DatasetSplit,
    base: &ModelConfig,
    infer_config: &InferenceConfig,
    tune_seed: u64,
) -> Result<TuneOutcome> {
    space.validate()?;
    if split.validation.is_empty() {
        return Err(Error::Data(
            "tuning needs a non-empty validation split".into(),
        ));
    }

    let configs = match strategy {
        Strategy::Grid => grid_configs(space, base),
        Strategy::Random { trials } => {
            if trials == 0 {
                return Err(Error::Config("random search needs at least one trial".into()));
            }
            random_configs(space, base, trials, tune_seed)
        }
    };

    let train_seed = seed::derive(tune_seed, "tune-train");
    let eval_options = EvalOptions::default();
    let mut trials: Vec<Trial> = Vec::with_capacity(configs.len());
    let mut best: Option<usize> = None;

    for (index, mut config) in configs.into_iter().enumerate() {
        config.seed = train_seed;
        let start = Instant::now();
        let (model, _) = train_model(corpus, split, config.clone())?;
        let store = crate::store::passage_store(&model)?;
        let eval_config = InferenceConfig {
            seed: seed::derive(tune_seed, "tune-eval"),
            ..infer_config.clone()
        };
        let report = evaluate(&model, &store, &split.validation, &eval_config, &eval_options)?;
        let trial = Trial {
            index,
            config,
            top20_rate: report.rates[&20],
            mean_rank: report.mean_rank,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        match best {
            Some(b) if !better_trial(&trial, &trials[b], objective) => {}
            _ => best = Some(index),
        }
        trials.push(trial);
    }

    let best = best.expect("at least one trial ran");
    let best_trial = &trials[best];
    Ok(TuneOutcome {
        best: best_trial.config.clone(),
        best_objective: match objective {
            Objective::Top20Rate => best_trial.top20_rate,
            Objective::MeanRank => best_trial.mean_rank,
        },
        trials,
    })
}

/// One JSON object per line, in trial order.
pub fn write_trials_jsonl(trials: &[Trial], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for trial in trials {
        let line = serde_json::to_string(trial).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}
