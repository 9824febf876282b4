use std::path::Path;
use std::time::Instant;

use pvec::tuner::{self, Objective, Strategy};
use pvec::{Error, Result};
use serde_json::json;

use crate::config::RunConfig;
use crate::meta;

pub fn run(run: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let started = Instant::now();
    let (passages, _questions, mut split) = super::load_dataset(data)?;
    if let Some(tags) = run.datasets() {
        split = super::filter_split(split, &tags)?;
    }

    let base = run.model_config()?;
    let infer_config = run.infer_config()?;
    let space = run.search_space()?;
    let strategy = match run.get("strategy").unwrap_or("random") {
        "grid" => Strategy::Grid,
        "random" => Strategy::Random {
            trials: run.trials()?,
        },
        other => {
            return Err(Error::Config(format!(
                "unknown strategy {other:?} (expected grid or random)"
            )))
        }
    };
    let objective: Objective = run.get("objective").unwrap_or("top20_rate").parse()?;

    let outcome = tuner::tune(
        &space,
        strategy,
        objective,
        &passages,
        &split,
        &base,
        &infer_config,
        run.seed()?,
    )?;

    for trial in &outcome.trials {
        println!(
            "trial {}: top20_rate={:.4} mean_rank={:.3} vector_size={} window={} \
             lr={} min_lr={} epochs={} min_count={}",
            trial.index,
            trial.top20_rate,
            trial.mean_rank,
            trial.config.vector_size,
            trial.config.window,
            trial.config.lr,
            trial.config.min_lr,
            trial.config.epochs,
            trial.config.min_count
        );
    }
    println!(
        "best: objective={:.4} vector_size={} window={} lr={} min_lr={} epochs={} min_count={}",
        outcome.best_objective,
        outcome.best.vector_size,
        outcome.best.window,
        outcome.best.lr,
        outcome.best.min_lr,
        outcome.best.epochs,
        outcome.best.min_count
    );

    super::ensure_dir(out)?;
    tuner::write_trials_jsonl(&outcome.trials, &out.join("trials.jsonl"))?;
    meta::write_run_meta(
        out,
        "tune",
        run,
        json!({
            "trials": outcome.trials.len(),
            "best_objective": outcome.best_objective,
            "best_config": outcome.best,
        }),
        started,
    )
}
