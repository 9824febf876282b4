//! Flat key=value run configuration: defaults, then the `--config` file,
//! then command-line flags, highest wins. Unknown keys are rejected so a
//! typo cannot silently fall back to a default.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use pvec::error::{Error, Result};
use pvec::eval::EvalOptions;
use pvec::infer::InferenceConfig;
use pvec::model::{Mode, ModelConfig, Softmax};
use pvec::tuner::SearchSpace;

const KNOWN_KEYS: &[&str] = &[
    "block_size",
    "max_passages",
    "vector_size",
    "window",
    "min_count",
    "lr",
    "min_lr",
    "epochs",
    "mode",
    "experiment",
    "softmax",
    "negatives",
    "seed",
    "workers",
    "steps",
    "k",
    "max_rank",
    "success_mode",
    "ks",
    "datasets",
    "split",
    "strategy",
    "trials",
    "objective",
    "query_len",
    "n_queries",
    "sizes",
    "space_vector_size",
    "space_window",
    "space_lr",
    "space_min_lr",
    "space_epochs",
    "space_min_count",
];

/// Key=value settings merged from defaults, config file and flags.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn from_file(path: Option<&Path>) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        let Some(path) = path else {
            return Ok(config);
        };
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected key=value, got {raw:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            config.set(key.trim(), value.trim().to_string())?;
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: String) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown configuration key {key:?}")));
        }
        self.values.insert(key.to_string(), value);
        Ok(())
    }

    /// Apply a command-line flag when present; flags always win.
    pub fn override_with<T: ToString>(&mut self, key: &str, flag: Option<T>) -> Result<()> {
        if let Some(value) = flag {
            self.set(key, value.to_string())?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    fn parse<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.values.get(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| {
                Error::Config(format!("configuration key {key} has invalid value {raw:?}"))
            }),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse("seed", 42)
    }

    pub fn workers(&self) -> Result<usize> {
        let default = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1);
        self.parse("workers", default)
    }

    pub fn block_size(&self) -> Result<usize> {
        self.parse("block_size", pvec::corpus::DEFAULT_BLOCK_SIZE)
    }

    pub fn max_passages(&self) -> Result<Option<usize>> {
        Ok(match self.values.get("max_passages") {
            None => None,
            Some(_) => Some(self.parse("max_passages", 0)?),
        })
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let defaults = ModelConfig::default();
        let softmax = match self.get("softmax").unwrap_or("sampled") {
            "full" => Softmax::Full,
            "sampled" => Softmax::Sampled {
                negatives: self.parse("negatives", 5)?,
            },
            other => {
                return Err(Error::Config(format!("unknown softmax variant {other:?}")))
            }
        };
        let config = ModelConfig {
            vector_size: self.parse("vector_size", defaults.vector_size)?,
            window: self.parse("window", defaults.window)?,
            min_count: self.parse("min_count", defaults.min_count)?,
            lr: self.parse("lr", defaults.lr)?,
            min_lr: self.parse("min_lr", defaults.min_lr)?,
            epochs: self.parse("epochs", defaults.epochs)?,
            mode: self.parse("mode", defaults.mode)?,
            experiment: self.parse("experiment", defaults.experiment)?,
            softmax,
            seed: self.seed()?,
            workers: self.workers()?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn infer_config(&self) -> Result<InferenceConfig> {
        let defaults = InferenceConfig::default();
        let mode = match self.get("mode") {
            None | Some("auto") => None,
            Some("dm") => Some(Mode::Dm),
            Some("dbow") => Some(Mode::Dbow),
            Some(other) => {
                return Err(Error::Config(format!("unknown inference mode {other:?}")))
            }
        };
        let config = InferenceConfig {
            steps: self.parse("steps", defaults.steps)?,
            lr: self.parse("lr", defaults.lr)?,
            seed: self.seed()?,
            mode,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn eval_options(&self) -> Result<EvalOptions> {
        let defaults = EvalOptions::default();
        let ks = match self.get("ks") {
            None => defaults.ks,
            Some(raw) => parse_list(raw, "ks")?,
        };
        Ok(EvalOptions {
            ks,
            max_rank: self.parse("max_rank", defaults.max_rank)?,
            success_mode: self.parse("success_mode", defaults.success_mode)?,
        })
    }

    pub fn k(&self, default: usize) -> Result<usize> {
        self.parse("k", default)
    }

    pub fn trials(&self) -> Result<usize> {
        self.parse("trials", 20)
    }

    pub fn query_len(&self) -> Result<usize> {
        self.parse("query_len", 10)
    }

    pub fn n_queries(&self) -> Result<usize> {
        self.parse("n_queries", 100)
    }

    pub fn sizes(&self) -> Result<Vec<usize>> {
        match self.get("sizes") {
            None => Ok(Vec::new()),
            Some(raw) => parse_list(raw, "sizes"),
        }
    }

    /// Dataset tags selected with `datasets=a,b`; `None` means all.
    pub fn datasets(&self) -> Option<Vec<String>> {
        self.get("datasets")
            .map(|raw| raw.split(',').map(|t| t.trim().to_string()).collect())
    }

    pub fn search_space(&self) -> Result<SearchSpace> {
        let defaults = SearchSpace::default();
        let space = SearchSpace {
            vector_size: self.list_or("space_vector_size", defaults.vector_size)?,
            window: self.list_or("space_window", defaults.window)?,
            lr: self.range_or("space_lr", defaults.lr)?,
            min_lr: self.range_or("space_min_lr", defaults.min_lr)?,
            epochs: self.usize_range_or("space_epochs", defaults.epochs)?,
            min_count: self.list_or("space_min_count", defaults.min_count)?,
        };
        space.validate()?;
        Ok(space)
    }

    fn list_or<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => parse_list(raw, key),
        }
    }

    fn range_or(&self, key: &str, default: (f32, f32)) -> Result<(f32, f32)> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => parse_range(raw, key),
        }
    }

    fn usize_range_or(&self, key: &str, default: (usize, usize)) -> Result<(usize, usize)> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => parse_range(raw, key),
        }
    }
}

fn parse_list<T: FromStr>(raw: &str, key: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(|part| {
            part.trim().parse().map_err(|_| {
                Error::Config(format!("configuration key {key} has invalid entry {part:?}"))
            })
        })
        .collect()
}

/// Parse `lo:hi` (or a single value for a degenerate range).
fn parse_range<T: FromStr + Copy>(raw: &str, key: &str) -> Result<(T, T)> {
    let bad = || Error::Config(format!("configuration key {key} expects lo:hi, got {raw:?}"));
    match raw.split_once(':') {
        Some((lo, hi)) => Ok((
            lo.trim().parse().map_err(|_| bad())?,
            hi.trim().parse().map_err(|_| bad())?,
        )),
        None => {
            let v: T = raw.trim().parse().map_err(|_| bad())?;
            Ok((v, v))
        }
    }
}
