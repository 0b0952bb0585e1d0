use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ncel::corpus::{generate_synthetic_corpus, load_corpus, write_corpus, SyntheticCorpusConfig};
use ncel::eval::{baseline_prior, bench_complexity, parse_link_tsv, score, write_bench_csv, write_link_tsv};
use ncel::features::{build_document_frames, FrameConfig};
use ncel::fixtures;
use ncel::kb::{generate_synthetic_kb, merge_priors, EmbeddingStore, MentionDictionary, SyntheticKbConfig};
use ncel::model::{link as link_doc, loss_and_gradients, train as train_model, write_history_csv, Checkpoint};
use ncel::model::{ModelParams, ModelShape};
use ncel::numerics::{check_gradients, Matrix};

use crate::config::RunConfig;
use crate::error::CliError;

/// Relative error at which `check-grad` fails.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

fn with_header(header: &[String], body: &str) -> String {
    let mut s = String::new();
    for h in header {
        let _ = writeln!(s, "# {h}");
    }
    s.push_str(body);
    s
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Output {
        path: path.display().to_string(),
        source,
    })
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::Config(format!("`{key}` is required (flag --{key} or config key)")))
}

fn header(command: &str, cfg: &RunConfig) -> Vec<String> {
    let mut h = vec![format!("command={command}")];
    h.extend(cfg.header());
    h
}

fn frame_header(frame: &FrameConfig) -> Vec<String> {
    vec![
        format!("model.n={}", frame.n),
        format!("model.q={}", frame.q),
        format!("model.context_window={}", frame.context_window),
        format!("model.local={}", frame.ablation.local),
        format!("model.noatt={}", frame.ablation.no_attention),
        format!("model.noemb={}", frame.ablation.no_embedding),
    ]
}

pub fn build_dict(sources: &[PathBuf], output: &Path) -> Result<(), CliError> {
    let dicts = sources
        .iter()
        .map(|p| MentionDictionary::load(p))
        .collect::<ncel::Result<Vec<_>>>()?;
    let merged = merge_priors(&dicts);
    let names: Vec<String> = sources.iter().map(|p| p.display().to_string()).collect();
    let h = vec!["command=build-dict".to_string(), format!("sources={}", names.join(","))];
    write_file(output, &with_header(&h, &merged.to_text()))?;
    log::info!("{} surfaces merged from {} files", merged.len(), sources.len());
    Ok(())
}

pub fn gen_synth(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let kb = generate_synthetic_kb(&SyntheticKbConfig {
        entities: cfg.entities,
        topics: cfg.topics,
        dim: cfg.dim,
        prior_margin: cfg.prior_margin,
        seed: cfg.seed,
        ..SyntheticKbConfig::default()
    })?;
    let corpus = |docs: usize, salt: u64, prefix: &str| {
        generate_synthetic_corpus(
            &kb,
            &SyntheticCorpusConfig {
                docs,
                mentions_per_doc: cfg.mentions_per_doc,
                distractor_prob: cfg.distractor_prob,
                seed: cfg.seed.wrapping_mul(1000).wrapping_add(salt),
                id_prefix: prefix.into(),
                ..SyntheticCorpusConfig::default()
            },
        )
    };
    let train = corpus(cfg.train_docs, 1, "train")?;
    let test = corpus(cfg.test_docs, 2, "test")?;
    std::fs::create_dir_all(out_dir).map_err(|source| CliError::Output {
        path: out_dir.display().to_string(),
        source,
    })?;
    let h = header("gen-synth", cfg);
    write_file(&out_dir.join("embeddings.txt"), &with_header(&h, &kb.store.to_text()))?;
    write_file(&out_dir.join("dictionary.txt"), &with_header(&h, &kb.dict.to_text()))?;
    write_file(&out_dir.join("train.txt"), &with_header(&h, &write_corpus(&train)))?;
    write_file(&out_dir.join("test.txt"), &with_header(&h, &write_corpus(&test)))?;
    println!(
        "wrote {} entities, {} surfaces, {} train and {} test documents to {}",
        kb.store.entity_count(),
        kb.dict.len(),
        train.len(),
        test.len(),
        out_dir.display()
    );
    Ok(())
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn train(cfg: &RunConfig, loss_csv: Option<&Path>) -> Result<(), CliError> {
    let store = EmbeddingStore::load(require(&cfg.embeddings, "embeddings")?)?;
    let dict = MentionDictionary::load(require(&cfg.dictionary, "dictionary")?)?;
    let docs = load_corpus(require(&cfg.corpus, "corpus")?)?;
    let ckpt_path = require(&cfg.checkpoint, "checkpoint")?;

    let frame = cfg.frame();
    let shape = ModelShape::uniform(frame.feature_width(store.dim()), cfg.hidden, cfg.layers)?;
    let init = ModelParams::init(&shape, cfg.seed)?;
    let out = train_model(&docs, &dict, &store, &frame, init, &cfg.train_config())?;

    Checkpoint {
        params: out.params,
        frame,
        dim: store.dim(),
        seed: cfg.seed,
    }
    .save(ckpt_path)?;
    let h = header("train", cfg);
    let loss_path = loss_csv.map_or_else(|| suffixed(ckpt_path, ".loss.csv"), Path::to_path_buf);
    write_history_csv(&out.history, &h, &loss_path)?;
    if let Some(tuned) = &out.store {
        write_file(&suffixed(ckpt_path, ".emb"), &with_header(&h, &tuned.to_text()))?;
    }
    let last = out.history.last().map_or(f64::NAN, |r| r.dev_loss);
    println!(
        "trained {} epochs (best {}{}), dev loss {:.6} -> {:.6}; checkpoint {}",
        out.history.len().saturating_sub(1),
        out.best_epoch,
        if out.stopped_early { ", stopped early" } else { "" },
        out.history.first().map_or(f64::NAN, |r| r.dev_loss),
        last,
        ckpt_path.display()
    );
    Ok(())
}

pub fn link(cfg: &RunConfig, output: Option<&Path>) -> Result<(), CliError> {
    let dict = MentionDictionary::load(require(&cfg.dictionary, "dictionary")?)?;
    let docs = load_corpus(require(&cfg.corpus, "corpus")?)?;
    let mut h = header("link", cfg);
    let results = if cfg.prior_only {
        baseline_prior(&docs, &dict, cfg.n)
    } else {
        let store = EmbeddingStore::load(require(&cfg.embeddings, "embeddings")?)?;
        let ck = Checkpoint::load(require(&cfg.checkpoint, "checkpoint")?)?;
        if ck.dim != store.dim() {
            return Err(ncel::Error::Dimension {
                op: "checkpoint embedding dimension",
                left: (ck.dim, 1),
                right: (store.dim(), 1),
            }
            .into());
        }
        h.extend(frame_header(&ck.frame));
        docs.iter()
            .map(|d| link_doc(&build_document_frames(d, &dict, &store, &ck.frame)?, &ck.params, &[]))
            .collect::<ncel::Result<Vec<_>>>()?
    };
    emit(output, &write_link_tsv(&results, &docs, &h)?)
}

pub fn eval(cfg: &RunConfig, preds: &Path, gold: &Path, csv: Option<&Path>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(preds).map_err(|e| ncel::Error::Io {
        path: preds.to_path_buf(),
        source: e,
    })?;
    let p = parse_link_tsv(&text, preds)?;
    let g = load_corpus(gold)?;
    let report = score(&p, &g)?;
    print!("{}", report.to_table());
    if let Some(path) = csv {
        let mut h = header("eval", cfg);
        h.push(format!("predictions={}", preds.display()));
        h.push(format!("gold={}", gold.display()));
        write_file(path, &report.to_csv(&h))?;
    }
    Ok(())
}

pub fn bench(cfg: &RunConfig, output: Option<&Path>) -> Result<(), CliError> {
    let report = bench_complexity(&cfg.bench_config())?;
    eprintln!(
        "fitted slopes: sub-graph {:.3}, full graph {:.3}",
        report.subgcn_slope, report.fullgraph_slope
    );
    emit(output, &write_bench_csv(&report, &header("bench", cfg)))
}

/// Gradient check on the two-mention fixture with `n = 2`, `q = 1`, hidden 8, two layers.
pub fn check_grad(cfg: &RunConfig) -> Result<(), CliError> {
    let frame = FrameConfig {
        n: 2,
        q: 1,
        ..FrameConfig::default()
    };
    let store = fixtures::store();
    let docs = vec![build_document_frames(
        &fixtures::two_mention_doc(),
        &fixtures::dictionary(),
        &store,
        &frame,
    )?];
    let shape = ModelShape::uniform(frame.feature_width(store.dim()), 8, 2)?;
    let params = ModelParams::init(&shape, cfg.seed)?;
    let mats: Vec<Matrix> = params.matrices().into_iter().cloned().collect();
    let err = check_gradients(
        |m| loss_and_gradients(&docs, &ModelParams::from_matrices(&shape, m.to_vec())?),
        &mats,
        1e-6,
        None,
        cfg.seed,
    )?;
    println!("max relative gradient error {err:.3e} over {} parameters", mats.iter().map(|m| m.data().len()).sum::<usize>());
    if err < GRADIENT_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::GradientCheck(err, GRADIENT_TOLERANCE))
    }
}
