//! `ncel` command-line entry point.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "ncel", version, about = "Collective entity linking with sub-graph convolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Merge dictionary files, keeping the maximal prior of every pair.
    BuildDict {
        #[arg(required = true)]
        sources: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write a synthetic KB (embeddings, dictionary) and train/test corpora.
    GenSynth {
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        synth: Synth,
    },
    /// Train a model and write a checkpoint plus the loss history.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        hyper: Hyper,
        /// Checkpoint to write.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Loss CSV, `<checkpoint>.loss.csv` by default.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Link every mention of a corpus and write one TSV row per mention.
    Link {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Pick the highest-prior candidate instead of running a model.
        #[arg(long)]
        prior_only: bool,
        /// Candidates per mention for the prior-only baseline.
        #[arg(long)]
        n: Option<usize>,
        /// Output TSV, stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Score a link TSV against a gold corpus.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Also write micro, macro and per-document rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Time sub-graph against full-graph forward passes over growing documents.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated mention counts.
        #[arg(long)]
        ks: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        q: Option<usize>,
        #[arg(long)]
        layers: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients on the built-in fixture.
    CheckGrad {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` file; explicit flags win over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Set any config key, e.g. `--set momentum=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Threads for document gradients; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    dictionary: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Args)]
struct Hyper {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    context_window: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    dev_fraction: Option<f64>,
    /// Fine-tune word and entity embeddings; writes `<checkpoint>.emb`.
    #[arg(long)]
    finetune: bool,
    /// Drop the neighbor features and sub-graph edges.
    #[arg(long)]
    local: bool,
    /// Uniform attention over context words.
    #[arg(long)]
    noatt: bool,
    /// Zero the context and entity embedding blocks.
    #[arg(long)]
    noemb: bool,
}

#[derive(Args)]
struct Synth {
    #[arg(long)]
    entities: Option<usize>,
    #[arg(long)]
    topics: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    train_docs: Option<usize>,
    #[arg(long)]
    test_docs: Option<usize>,
    #[arg(long)]
    mentions_per_doc: Option<usize>,
    #[arg(long)]
    distractor_prob: Option<f64>,
    #[arg(long)]
    prior_margin: Option<f64>,
}

type Overrides = Vec<(&'static str, Option<String>)>;

fn show<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(T::to_string)
}

fn path(v: &Option<PathBuf>) -> Option<String> {
    v.as_ref().map(|p| p.display().to_string())
}

fn flag(on: bool) -> Option<String> {
    on.then(|| "true".to_string())
}

impl Common {
    fn overrides(&self) -> Overrides {
        vec![("seed", show(&self.seed)), ("workers", show(&self.workers))]
    }
}

impl Inputs {
    fn overrides(&self) -> Overrides {
        vec![
            ("embeddings", path(&self.embeddings)),
            ("dictionary", path(&self.dictionary)),
            ("corpus", path(&self.corpus)),
        ]
    }
}

impl Hyper {
    fn overrides(&self) -> Overrides {
        vec![
            ("n", show(&self.n)),
            ("q", show(&self.q)),
            ("context_window", show(&self.context_window)),
            ("hidden", show(&self.hidden)),
            ("layers", show(&self.layers)),
            ("learning_rate", show(&self.learning_rate)),
            ("momentum", show(&self.momentum)),
            ("batch_size", show(&self.batch_size)),
            ("epochs", show(&self.epochs)),
            ("patience", show(&self.patience)),
            ("dev_fraction", show(&self.dev_fraction)),
            ("finetune", flag(self.finetune)),
            ("local", flag(self.local)),
            ("noatt", flag(self.noatt)),
            ("noemb", flag(self.noemb)),
        ]
    }
}

impl Synth {
    fn overrides(&self) -> Overrides {
        vec![
            ("entities", show(&self.entities)),
            ("topics", show(&self.topics)),
            ("dim", show(&self.dim)),
            ("train_docs", show(&self.train_docs)),
            ("test_docs", show(&self.test_docs)),
            ("mentions_per_doc", show(&self.mentions_per_doc)),
            ("distractor_prob", show(&self.distractor_prob)),
            ("prior_margin", show(&self.prior_margin)),
        ]
    }
}

/// Defaults, then the config file, then `--set`, then typed flags.
fn resolve(common: &Common, flags: Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &common.config {
        cfg.apply_file(p)?;
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v)?;
    }
    for (k, v) in common.overrides().into_iter().chain(flags) {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::BuildDict { sources, output } => commands::build_dict(&sources, &output),
        Command::GenSynth { out_dir, common, synth } => {
            let cfg = resolve(&common, synth.overrides())?;
            commands::gen_synth(&cfg, &out_dir)
        }
        Command::Train {
            common,
            inputs,
            hyper,
            checkpoint,
            loss_csv,
        } => {
            let mut flags = inputs.overrides();
            flags.extend(hyper.overrides());
            flags.push(("checkpoint", path(&checkpoint)));
            let cfg = resolve(&common, flags)?;
            commands::train(&cfg, loss_csv.as_deref())
        }
        Command::Link {
            common,
            inputs,
            checkpoint,
            prior_only,
            n,
            output,
        } => {
            let mut flags = inputs.overrides();
            flags.extend([("checkpoint", path(&checkpoint)), ("prior_only", flag(prior_only)), ("n", show(&n))]);
            let cfg = resolve(&common, flags)?;
            commands::link(&cfg, output.as_deref())
        }
        Command::Eval {
            common,
            predictions,
            gold,
            csv,
        } => {
            let cfg = resolve(&common, Vec::new())?;
            commands::eval(&cfg, &predictions, &gold, csv.as_deref())
        }
        Command::Bench {
            common,
            ks,
            trials,
            n,
            q,
            layers,
            output,
        } => {
            let flags = vec![
                ("ks", ks),
                ("bench_trials", show(&trials)),
                ("n", show(&n)),
                ("q", show(&q)),
                ("layers", show(&layers)),
            ];
            let cfg = resolve(&common, flags)?;
            commands::bench(&cfg, output.as_deref())
        }
        Command::CheckGrad { common } => {
            let cfg = resolve(&common, Vec::new())?;
            commands::check_grad(&cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
