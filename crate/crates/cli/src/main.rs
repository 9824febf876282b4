//! `pvec`: train, query and evaluate identifier-anchored paragraph
//! vectors for passage retrieval.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

mod commands;
mod config;
mod meta;

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "pvec",
    version,
    about = "Paragraph-vector passage retrieval: preprocess, train, search, evaluate"
)]
struct Cli {
    /// Key=value configuration file; flags override its entries.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Top-level seed; all per-stage randomness derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for training and benchmarks.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "pvec_out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split articles into passages, link questions, write the dataset split.
    Preprocess {
        /// Articles as JSONL with `title` and `text` fields.
        #[arg(long, value_name = "PATH")]
        articles: PathBuf,
        /// Question records as JSONL; repeatable to combine datasets.
        #[arg(long = "qa", value_name = "PATH", required = true)]
        qa: Vec<PathBuf>,
        /// Words per passage block.
        #[arg(long, value_name = "N")]
        block_size: Option<usize>,
        /// Downsample the corpus to this many passages, keeping gold ones.
        #[arg(long, value_name = "N")]
        max_passages: Option<usize>,
    },
    /// Train a model on a preprocessed directory.
    Train {
        /// Directory produced by `preprocess`.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Pair selection: e1, e2, e3 or e4.
        #[arg(long)]
        experiment: Option<String>,
        /// Training direction: auto, dm or dbow.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        vector_size: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        min_count: Option<u64>,
        #[arg(long)]
        lr: Option<f32>,
        #[arg(long)]
        min_lr: Option<f32>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Output layer: sampled or full.
        #[arg(long)]
        softmax: Option<String>,
        /// Negatives per target under sampled softmax.
        #[arg(long)]
        negatives: Option<usize>,
        /// Comma-separated dataset tags; trains on those questions only.
        #[arg(long)]
        datasets: Option<String>,
    },
    /// Embed questions (one per line) against a trained model.
    Infer {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Vocabulary file; defaults to vocab.tsv beside the model.
        #[arg(long, value_name = "PATH")]
        vocab: Option<PathBuf>,
        /// Questions file; stdin when omitted.
        #[arg(long, value_name = "PATH")]
        questions: Option<PathBuf>,
        /// Descent passes per question.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f32>,
        /// Write vectors as a binary store instead of text lines.
        #[arg(long)]
        binary: bool,
    },
    /// Embed one query and print its top-k passages.
    Search {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[arg(long, value_name = "PATH")]
        vocab: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        store: PathBuf,
        /// Query text.
        #[arg(long)]
        query: String,
        #[arg(short, long)]
        k: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Retrieval metrics for a question split.
    Eval(EvalArgs),
    /// Evaluate questions from a dataset the model was not trained on.
    ZeroShot(EvalArgs),
    /// Latency benchmarks for inference and search.
    Bench {
        /// What to time: infer, search or both.
        #[arg(long, default_value = "both")]
        target: String,
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        vocab: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        store: Option<PathBuf>,
        /// Questions for the inference benchmark; synthesized when omitted.
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        #[arg(short, long)]
        k: Option<usize>,
        /// Comma-separated store-prefix sizes for the scaling curve.
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Search hyperparameters against the validation split.
    Tune {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// grid or random.
        #[arg(long)]
        strategy: Option<String>,
        /// Trial count for random search.
        #[arg(long)]
        trials: Option<usize>,
        /// top20_rate or mean_rank.
        #[arg(long)]
        objective: Option<String>,
        #[arg(long)]
        experiment: Option<String>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        softmax: Option<String>,
        #[arg(long)]
        negatives: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        datasets: Option<String>,
    },
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    #[arg(long, value_name = "PATH")]
    vocab: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    store: PathBuf,
    /// Preprocessed directory holding the questions to evaluate.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Which split to score: test, validation or train.
    #[arg(long)]
    split: Option<String>,
    /// avg_rank or any_hit.
    #[arg(long)]
    success_mode: Option<String>,
    #[arg(long)]
    max_rank: Option<u32>,
    /// Comma-separated k values.
    #[arg(long)]
    ks: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    /// Comma-separated dataset tags to keep.
    #[arg(long)]
    datasets: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 usage or configuration, 2 data or file format, 3 numeric failure.
fn exit_code(e: &pvec::Error) -> u8 {
    match e {
        pvec::Error::Config(_) => 1,
        pvec::Error::NonFiniteLoss { .. } => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> pvec::Result<()> {
    let mut run = RunConfig::from_file(cli.config.as_deref())?;
    run.override_with("seed", cli.seed)?;
    run.override_with("workers", cli.workers)?;
    let out = cli.out;

    match cli.command {
        Command::Preprocess {
            articles,
            qa,
            block_size,
            max_passages,
        } => {
            run.override_with("block_size", block_size)?;
            run.override_with("max_passages", max_passages)?;
            commands::preprocess::run(&run, &articles, &qa, &out)
        }
        Command::Train {
            data,
            experiment,
            mode,
            vector_size,
            window,
            min_count,
            lr,
            min_lr,
            epochs,
            softmax,
            negatives,
            datasets,
        } => {
            run.override_with("experiment", experiment)?;
            run.override_with("mode", mode)?;
            run.override_with("vector_size", vector_size)?;
            run.override_with("window", window)?;
            run.override_with("min_count", min_count)?;
            run.override_with("lr", lr)?;
            run.override_with("min_lr", min_lr)?;
            run.override_with("epochs", epochs)?;
            run.override_with("softmax", softmax)?;
            run.override_with("negatives", negatives)?;
            run.override_with("datasets", datasets)?;
            commands::train::run(&run, &data, &out)
        }
        Command::Infer {
            model,
            vocab,
            questions,
            steps,
            lr,
            binary,
        } => {
            run.override_with("steps", steps)?;
            run.override_with("lr", lr)?;
            commands::infer::run(&run, &model, vocab.as_deref(), questions.as_deref(), binary, &out)
        }
        Command::Search {
            model,
            vocab,
            store,
            query,
            k,
            steps,
        } => {
            run.override_with("k", k)?;
            run.override_with("steps", steps)?;
            commands::search::run(&run, &model, vocab.as_deref(), &store, &query, &out)
        }
        Command::Eval(args) => commands::eval::run(&mut run, args, &out, false),
        Command::ZeroShot(args) => commands::eval::run(&mut run, args, &out, true),
        Command::Bench {
            target,
            model,
            vocab,
            store,
            data,
            k,
            sizes,
            steps,
        } => {
            run.override_with("k", k)?;
            run.override_with("sizes", sizes)?;
            run.override_with("steps", steps)?;
            commands::bench::run(
                &run,
                &target,
                model.as_deref(),
                vocab.as_deref(),
                store.as_deref(),
                data.as_deref(),
                &out,
            )
        }
        Command::Tune {
            data,
            strategy,
            trials,
            objective,
            experiment,
            mode,
            softmax,
            negatives,
            steps,
            datasets,
        } => {
            run.override_with("strategy", strategy)?;
            run.override_with("trials", trials)?;
            run.override_with("objective", objective)?;
            run.override_with("experiment", experiment)?;
            run.override_with("mode", mode)?;
            run.override_with("softmax", softmax)?;
            run.override_with("negatives", negatives)?;
            run.override_with("steps", steps)?;
            run.override_with("datasets", datasets)?;
            commands::tune::run(&run, &data, &out)
        }
    }
}
