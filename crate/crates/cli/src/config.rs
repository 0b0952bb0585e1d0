//! Run configuration shared by every command.
//!
//! Values come from defaults, then a flat `key = value` file, then explicit
//! flags. All three go through [`RunConfig::set`].

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ncel::eval::BenchConfig;
use ncel::features::{Ablation, FrameConfig};
use ncel::model::TrainConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub embeddings: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,

    pub n: usize,
    pub q: usize,
    pub context_window: usize,
    /// Hidden width of the encoder and every convolution layer.
    pub hidden: usize,
    pub layers: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub dev_fraction: f64,
    pub seed: u64,
    pub workers: usize,
    pub finetune: bool,

    pub local: bool,
    pub noatt: bool,
    pub noemb: bool,
    pub prior_only: bool,

    pub entities: usize,
    pub topics: usize,
    pub dim: usize,
    pub train_docs: usize,
    pub test_docs: usize,
    pub mentions_per_doc: usize,
    pub distractor_prob: f64,
    pub prior_margin: f64,

    pub ks: Vec<usize>,
    pub bench_trials: usize,
    pub bench_dim: usize,
    pub bench_hidden: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let frame = FrameConfig::default();
        let bench = BenchConfig::default();
        RunConfig {
            embeddings: None,
            dictionary: None,
            corpus: None,
            checkpoint: None,
            n: frame.n,
            q: frame.q,
            context_window: frame.context_window,
            hidden: 64,
            layers: 3,
            learning_rate: train.learning_rate,
            momentum: train.momentum,
            batch_size: train.batch_size,
            epochs: train.epochs,
            patience: train.patience,
            dev_fraction: train.dev_fraction,
            seed: train.seed,
            workers: 1,
            finetune: false,
            local: false,
            noatt: false,
            noemb: false,
            prior_only: false,
            entities: 200,
            topics: 8,
            dim: 32,
            train_docs: 500,
            test_docs: 100,
            mentions_per_doc: 6,
            distractor_prob: 0.5,
            prior_margin: 0.2,
            ks: bench.ks,
            bench_trials: bench.trials,
            bench_dim: bench.dim,
            bench_hidden: bench.hidden,
        }
    }
}

/// Every key in echo order.
pub const KEYS: &[&str] = &[
    "embeddings",
    "dictionary",
    "corpus",
    "checkpoint",
    "n",
    "q",
    "context_window",
    "hidden",
    "layers",
    "learning_rate",
    "momentum",
    "batch_size",
    "epochs",
    "patience",
    "dev_fraction",
    "seed",
    "workers",
    "finetune",
    "local",
    "noatt",
    "noemb",
    "prior_only",
    "entities",
    "topics",
    "dim",
    "train_docs",
    "test_docs",
    "mentions_per_doc",
    "distractor_prob",
    "prior_margin",
    "ks",
    "bench_trials",
    "bench_dim",
    "bench_hidden",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| "-".into(), |p| p.display().to_string())
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        let path = || (!v.is_empty() && v != "-").then(|| PathBuf::from(v));
        match key {
            "embeddings" => self.embeddings = path(),
            "dictionary" => self.dictionary = path(),
            "corpus" => self.corpus = path(),
            "checkpoint" => self.checkpoint = path(),
            "n" => self.n = parse(key, v)?,
            "q" => self.q = parse(key, v)?,
            "context_window" => self.context_window = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "layers" => self.layers = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "momentum" => self.momentum = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            "dev_fraction" => self.dev_fraction = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "finetune" => self.finetune = parse_bool(key, v)?,
            "local" => self.local = parse_bool(key, v)?,
            "noatt" => self.noatt = parse_bool(key, v)?,
            "noemb" => self.noemb = parse_bool(key, v)?,
            "prior_only" => self.prior_only = parse_bool(key, v)?,
            "entities" => self.entities = parse(key, v)?,
            "topics" => self.topics = parse(key, v)?,
            "dim" => self.dim = parse(key, v)?,
            "train_docs" => self.train_docs = parse(key, v)?,
            "test_docs" => self.test_docs = parse(key, v)?,
            "mentions_per_doc" => self.mentions_per_doc = parse(key, v)?,
            "distractor_prob" => self.distractor_prob = parse(key, v)?,
            "prior_margin" => self.prior_margin = parse(key, v)?,
            "ks" => {
                self.ks = v
                    .split(',')
                    .map(|k| parse(key, k.trim()))
                    .collect::<Result<_, _>>()?
            }
            "bench_trials" => self.bench_trials = parse(key, v)?,
            "bench_dim" => self.bench_dim = parse(key, v)?,
            "bench_hidden" => self.bench_hidden = parse(key, v)?,
            _ => return Err(CliError::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "embeddings" => show_path(&self.embeddings),
            "dictionary" => show_path(&self.dictionary),
            "corpus" => show_path(&self.corpus),
            "checkpoint" => show_path(&self.checkpoint),
            "n" => self.n.to_string(),
            "q" => self.q.to_string(),
            "context_window" => self.context_window.to_string(),
            "hidden" => self.hidden.to_string(),
            "layers" => self.layers.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "momentum" => self.momentum.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "epochs" => self.epochs.to_string(),
            "patience" => self.patience.to_string(),
            "dev_fraction" => self.dev_fraction.to_string(),
            "seed" => self.seed.to_string(),
            "workers" => self.workers.to_string(),
            "finetune" => self.finetune.to_string(),
            "local" => self.local.to_string(),
            "noatt" => self.noatt.to_string(),
            "noemb" => self.noemb.to_string(),
            "prior_only" => self.prior_only.to_string(),
            "entities" => self.entities.to_string(),
            "topics" => self.topics.to_string(),
            "dim" => self.dim.to_string(),
            "train_docs" => self.train_docs.to_string(),
            "test_docs" => self.test_docs.to_string(),
            "mentions_per_doc" => self.mentions_per_doc.to_string(),
            "distractor_prob" => self.distractor_prob.to_string(),
            "prior_margin" => self.prior_margin.to_string(),
            "ks" => self.ks.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
            "bench_trials" => self.bench_trials.to_string(),
            "bench_dim" => self.bench_dim.to_string(),
            "bench_hidden" => self.bench_hidden.to_string(),
            _ => return None,
        })
    }

    /// Applies a `key = value` file. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{}:{}: expected `key = value`", origin.display(), i + 1))
            })?;
            self.set(k.trim(), v)
                .map_err(|e| CliError::Config(format!("{}:{}: {e}", origin.display(), i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, path)
    }

    /// `key=value` lines for artifact headers.
    pub fn header(&self) -> Vec<String> {
        KEYS.iter()
            .map(|k| format!("{k}={}", self.get(k).expect("listed key")))
            .collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.into()));
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        if self.layers == 0 {
            return bad("layers must be at least 1");
        }
        if self.hidden == 0 {
            return bad("hidden must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.distractor_prob) {
            return bad("distractor_prob must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn ablation(&self) -> Ablation {
        Ablation {
            local: self.local,
            no_attention: self.noatt,
            no_embedding: self.noemb,
        }
    }

    pub fn frame(&self) -> FrameConfig {
        FrameConfig {
            n: self.n,
            q: self.q,
            context_window: self.context_window,
            ablation: self.ablation(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            batch_size: self.batch_size,
            epochs: self.epochs,
            patience: self.patience,
            dev_fraction: self.dev_fraction,
            seed: self.seed,
            finetune_embeddings: self.finetune,
            workers: self.workers,
        }
    }

    pub fn bench_config(&self) -> BenchConfig {
        BenchConfig {
            ks: self.ks.clone(),
            n: self.n,
            q: self.q,
            layers: self.layers,
            dim: self.bench_dim,
            hidden: self.bench_hidden,
            trials: self.bench_trials,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_roundtrips_through_get_and_set() {
        let mut a = RunConfig::default();
        for k in KEYS {
            let v = a.get(k).unwrap();
            a.set(k, &v).unwrap();
        }
        assert_eq!(a, RunConfig::default());
        assert!(a.get("nope").is_none());
    }

    #[test]
    fn file_values_and_errors() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\n\nn = 4\nks = 8, 16\nlocal = true\n", Path::new("c")).unwrap();
        assert_eq!((c.n, c.ks.clone(), c.local), (4, vec![8, 16], true));
        let err = c.apply_text("n = 4\nbogus = 1\n", Path::new("c")).unwrap_err();
        assert!(err.to_string().contains("c:2"), "{err}");
        assert!(c.apply_text("n 4\n", Path::new("c")).is_err());
        assert!(c.apply_text("n = -1\n", Path::new("c")).is_err());
        assert!(c.apply_text("local = maybe\n", Path::new("c")).is_err());
    }

    #[test]
    fn validation_rejects_zero_sizes() {
        for (k, v) in [("n", "0"), ("layers", "0"), ("batch_size", "0"), ("workers", "0")] {
            let mut c = RunConfig::default();
            c.set(k, v).unwrap();
            assert!(c.validate().is_err(), "{k}");
        }
        assert!(RunConfig::default().validate().is_ok());
    }
}
