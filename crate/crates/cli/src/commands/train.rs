use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use pvec::{model, store, trainer, vocab, Result};
use serde_json::json;

use crate::config::RunConfig;
use crate::meta;

pub fn run(run: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let started = Instant::now();
    let config = run.model_config()?;

    let (passages, _questions, mut split) = super::load_dataset(data)?;
    if let Some(tags) = run.datasets() {
        split = super::filter_split(split, &tags)?;
    }

    let (trained, outcome) = trainer::train_model(&passages, &split, config)?;
    for (i, loss) in outcome.epoch_loss.iter().enumerate() {
        println!(
            "epoch {}/{} loss={loss:.6}",
            i + 1,
            trained.config.epochs
        );
    }
    println!(
        "pairs={} dropped={} samples_per_epoch={} vocab={} docs={}",
        outcome.pairs_trained,
        outcome.pairs_dropped,
        outcome.samples_per_epoch,
        trained.vocab.len(),
        trained.n_docs()
    );

    super::ensure_dir(out)?;
    model::save_checkpoint(&trained, &out.join("model.pvec"))?;
    vocab::write_vocab(&trained.vocab, &out.join("vocab.tsv"))?;
    let passage_store = store::passage_store(&trained)?;
    store::save_store(&passage_store, &out.join("store.psto"))?;

    let mut log = BufWriter::new(File::create(out.join("train_log.tsv"))?);
    writeln!(log, "epoch\tmean_loss")?;
    for (i, loss) in outcome.epoch_loss.iter().enumerate() {
        writeln!(log, "{}\t{loss}", i + 1)?;
    }
    log.flush()?;

    meta::write_run_meta(
        out,
        "train",
        run,
        json!({
            "pairs_trained": outcome.pairs_trained,
            "pairs_dropped": outcome.pairs_dropped,
            "samples_per_epoch": outcome.samples_per_epoch,
            "epoch_loss": outcome.epoch_loss,
            "vocab_size": trained.vocab.len(),
            "doc_count": trained.n_docs(),
        }),
        started,
    )
}
