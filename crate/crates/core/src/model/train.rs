//! Mini-batch SGD with early stopping on a held-out split of the training documents.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{document_gradients, ModelParams};
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::features::{build_document_frames, DocumentFrames, FrameConfig, SCALAR_FEATURES};
use crate::kb::{EmbeddingStore, MentionDictionary};
use crate::numerics::{Matrix, Sgd};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without dev-loss improvement before stopping.
    pub patience: usize,
    /// Share of training documents held out for early stopping.
    pub dev_fraction: f64,
    pub seed: u64,
    /// Update the context and entity embeddings that feed the features.
    pub finetune_embeddings: bool,
    /// Threads computing document gradients inside a batch.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 16,
            epochs: 10,
            patience: 3,
            dev_fraction: 0.1,
            seed: 7,
            finetune_embeddings: false,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be >= 0", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 || self.patience == 0 || self.workers == 0 {
            return Err(Error::Config("batch size, patience and workers must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dev_fraction) {
            return Err(Error::Config(format!("dev fraction {} outside [0, 1)", self.dev_fraction)));
        }
        Ok(())
    }
}

/// One row per evaluation: epoch 0 is the untrained model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub batch: usize,
    /// Mean mention loss over the epoch's batches (epoch 0: over the training split).
    pub loss: f64,
    /// Mean mention loss on the dev split.
    pub dev_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest dev loss.
    pub params: ModelParams,
    pub history: Vec<LossRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Fine-tuned embeddings matching `params`, when fine-tuning was on.
    pub store: Option<EmbeddingStore>,
    pub dev_docs: Vec<String>,
}

pub fn write_history_csv(history: &[LossRecord], header: &[String], path: &Path) -> Result<()> {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    out.push_str("epoch,batch,loss,dev_loss\n");
    for r in history {
        let _ = writeln!(out, "{},{},{:.12},{:.12}", r.epoch, r.batch, r.loss, r.dev_loss);
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

struct Split {
    train: Vec<usize>,
    dev: Vec<usize>,
}

fn split(count: usize, fraction: f64, rng: &mut ChaCha8Rng) -> Split {
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(rng);
    let dev_count = ((count as f64 * fraction).round() as usize).min(count.saturating_sub(1));
    let mut dev = order[..dev_count].to_vec();
    let mut train = order[dev_count..].to_vec();
    dev.sort_unstable();
    train.sort_unstable();
    Split { train, dev }
}

/// Mean loss over every gold-bearing mention of `docs`.
fn mean_loss(frames: &[DocumentFrames], docs: &[usize], params: &ModelParams) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for &d in docs {
        let f = &frames[d];
        count += f.gold_slots.iter().filter(|g| g.is_some()).count();
        total += super::link(f, params, &[])?.total_loss();
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

type DocGrad = (f64, Vec<Matrix>, Vec<Option<Matrix>>);

fn batch_gradients(
    frames: &[DocumentFrames],
    groups: &[(usize, Vec<bool>)],
    params: &ModelParams,
    scale: f64,
    track: bool,
    workers: usize,
) -> Result<Vec<DocGrad>> {
    let one = |(d, mask): &(usize, Vec<bool>)| document_gradients(&frames[*d], params, Some(mask), scale, track);
    if workers <= 1 || groups.len() <= 1 {
        return groups.iter().map(one).collect();
    }
    let chunk = groups.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = groups
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(one).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(groups.len());
        for h in handles {
            out.extend(h.join().expect("gradient worker panicked")?);
        }
        Ok(out)
    })
}

/// Pushes feature-block gradients back into the embeddings: the entity block
/// goes to the candidate's entity vector, the context block to each context
/// word in proportion to its attention weight. Attention is held fixed.
fn apply_embedding_gradients(
    store: &mut EmbeddingStore,
    frames: &DocumentFrames,
    grads: &[Option<Matrix>],
    lr: f64,
) {
    let d = store.dim();
    for (i, g) in grads.iter().enumerate() {
        let Some(g) = g else { continue };
        let frame = &frames.frames[i];
        for (j, cand) in frames.candidates[i].valid().enumerate() {
            let row = g.row(j);
            let ctx = &row[SCALAR_FEATURES..SCALAR_FEATURES + d];
            let ent = &row[SCALAR_FEATURES + d..SCALAR_FEATURES + 2 * d];
            if let Some(e) = store.entity_mut(&cand.entity) {
                e.iter_mut().zip(ent).for_each(|(v, x)| *v -= lr * x);
            }
            for (w, a) in frame.context_words.iter().zip(&frame.attention[j]) {
                if let Some(v) = store.word_mut(w) {
                    v.iter_mut().zip(ctx).for_each(|(v, x)| *v -= lr * a * x);
                }
            }
        }
    }
}

fn build_frames(
    docs: &[Document],
    dict: &MentionDictionary,
    store: &EmbeddingStore,
    frame: &FrameConfig,
) -> Result<Vec<DocumentFrames>> {
    docs.iter().map(|d| build_document_frames(d, dict, store, frame)).collect()
}

/// Trains `params` on `docs`. Deterministic for a fixed config and seed.
pub fn train(
    docs: &[Document],
    dict: &MentionDictionary,
    store: &EmbeddingStore,
    frame: &FrameConfig,
    params: ModelParams,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if docs.is_empty() {
        return Err(Error::Data("training corpus is empty".into()));
    }
    params.check_shapes()?;
    let finetune = config.finetune_embeddings && !frame.ablation.no_embedding;
    let mut local_store = if finetune { Some(store.clone()) } else { None };
    let mut frames = build_frames(docs, dict, store, frame)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let Split { train: mut order, dev } = split(docs.len(), config.dev_fraction, &mut rng);
    // without a dev split, early stopping watches the training loss
    let watch = if dev.is_empty() { order.clone() } else { dev.clone() };

    let mut params = params;
    let mut sgd = Sgd::new(config.learning_rate, config.momentum)?;
    let initial_dev = mean_loss(&frames, &watch, &params)?;
    let mut history = vec![LossRecord {
        epoch: 0,
        batch: 0,
        loss: mean_loss(&frames, &order, &params)?,
        dev_loss: initial_dev,
    }];
    let mut best = (initial_dev, 0usize, params.clone(), local_store.clone());
    let mut since_best = 0;
    let mut steps = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mentions: Vec<(usize, usize)> = order
            .iter()
            .flat_map(|&d| {
                frames[d]
                    .gold_slots
                    .iter()
                    .enumerate()
                    .filter(|(_, g)| g.is_some())
                    .map(move |(i, _)| (d, i))
            })
            .collect();
        let mut epoch_loss = 0.0;
        for (b, batch) in mentions.chunks(config.batch_size).enumerate() {
            let mut groups: Vec<(usize, Vec<bool>)> = Vec::new();
            for &(d, i) in batch {
                if groups.last().is_none_or(|g| g.0 != d) {
                    groups.push((d, vec![false; frames[d].mention_count()]));
                }
                groups.last_mut().unwrap().1[i] = true;
            }
            let scale = 1.0 / batch.len() as f64;
            let results = batch_gradients(&frames, &groups, &params, scale, finetune, config.workers)?;
            let mut loss = 0.0;
            let mut grads = params.zeros_like();
            for (l, g, _) in &results {
                loss += l;
                for (acc, x) in grads.iter_mut().zip(g) {
                    acc.axpy(1.0, x)?;
                }
            }
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}, batch {}", b + 1)));
            }
            sgd.step(&mut params.matrices_mut(), &grads)
                .map_err(|e| Error::Numeric(format!("epoch {epoch}, batch {}: {e}", b + 1)))?;
            if let Some(s) = local_store.as_mut() {
                for ((d, _), (_, _, fg)) in groups.iter().zip(&results) {
                    apply_embedding_gradients(s, &frames[*d], fg, config.learning_rate);
                }
            }
            epoch_loss += loss * batch.len() as f64;
            steps += 1;
        }
        if let Some(s) = &local_store {
            frames = build_frames(docs, dict, s, frame)?;
        }
        let dev_loss = mean_loss(&frames, &watch, &params)?;
        if !dev_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite dev loss after epoch {epoch}")));
        }
        history.push(LossRecord {
            epoch,
            batch: steps,
            loss: if mentions.is_empty() { 0.0 } else { epoch_loss / mentions.len() as f64 },
            dev_loss,
        });
        log::info!("epoch {epoch}: dev loss {dev_loss:.6}");
        if dev_loss < best.0 {
            best = (dev_loss, epoch, params.clone(), local_store.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (_, best_epoch, params, store) = best;
    Ok(TrainOutcome {
        params,
        history,
        best_epoch,
        stopped_early,
        store,
        dev_docs: dev.iter().map(|&d| docs[d].id.clone()).collect(),
    })
}
