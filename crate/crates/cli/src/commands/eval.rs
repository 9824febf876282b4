use std::path::Path;
use std::time::Instant;

use pvec::{eval, store, Error, Result};
use serde_json::json;

use crate::config::RunConfig;
use crate::meta;
use crate::EvalArgs;

pub fn run(run: &mut RunConfig, args: EvalArgs, out: &Path, zero: bool) -> Result<()> {
    let started = Instant::now();
    run.override_with("split", args.split)?;
    run.override_with("success_mode", args.success_mode)?;
    run.override_with("max_rank", args.max_rank)?;
    run.override_with("ks", args.ks)?;
    run.override_with("steps", args.steps)?;
    run.override_with("datasets", args.datasets)?;

    let model = super::load_model(&args.model, args.vocab.as_deref())?;
    let passage_store = store::load_store(&args.store)?;
    let (_passages, _questions, mut split) = super::load_dataset(&args.data)?;
    if let Some(tags) = run.datasets() {
        split = super::filter_split(split, &tags)?;
    }

    let which = run.get("split").unwrap_or("test").to_string();
    let questions = super::split_by_name(&split, &which)?;
    if questions.is_empty() {
        return Err(Error::Data(format!(
            "split {which:?} has no questions to evaluate"
        )));
    }

    let infer_config = run.infer_config()?;
    let options = run.eval_options()?;
    let report = if zero {
        eval::zero_shot(&model, &passage_store, questions, &infer_config, &options)?
    } else {
        eval::evaluate(&model, &passage_store, questions, &infer_config, &options)?
    };

    super::ensure_dir(out)?;
    eval::write_report_json(&report, &out.join("report.json"))?;
    eval::write_report_tsv(&report, &out.join("report.tsv"))?;

    let mut line = format!(
        "questions={} mean_rank={:.3}",
        report.n_questions, report.mean_rank
    );
    for (k, rate) in &report.rates {
        line.push_str(&format!(" top_{k}={rate:.2}"));
    }
    line.push_str(&format!(" unembeddable={}", report.unembeddable_questions));
    println!("{line}");

    let command = if zero { "zero-shot" } else { "eval" };
    meta::write_run_meta(
        out,
        command,
        run,
        json!({
            "split": which,
            "n_questions": report.n_questions,
            "mean_rank": report.mean_rank,
            "rates": report.rates,
        }),
        started,
    )
}
