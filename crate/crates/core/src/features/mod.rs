//! Per-candidate feature rows and sub-graph adjacency rows.
//!
//! Row layout of the feature matrix `f` (width `10 + 2d + 2q`):
//!
//! | cols            | content                                   |
//! |-----------------|-------------------------------------------|
//! | 0               | prior                                     |
//! | 1               | normalized edit distance                  |
//! | 2..8            | string flags                              |
//! | 8, 9            | sim(entity, context), sim(sense, context) |
//! | 10..10+d        | attention-weighted context embedding      |
//! | 10+d..10+2d     | entity embedding                          |
//! | 10+2d..         | sim(entity, neighbor mention), 2q slots   |
//!
//! The adjacency row of candidate `j` is `[g_j, 1]` row-normalized, where
//! `g_j` holds relatedness to every candidate slot of the `2q` window
//! neighbors, ordered by (window position, slot).

mod text;

use std::fmt::Write as _;

use crate::candidates::{generate, CandidateSet};
use crate::corpus::{window_slots, Document};
use crate::error::{Error, Result};
use crate::kb::{cosine, entity_title, relatedness, EmbeddingStore, MentionDictionary};
use crate::numerics::{row_normalize, Matrix};

pub use text::{levenshtein, string_features, StringFeatures};

pub const STRING_FLAGS: usize = 6;
/// Scalar columns ahead of the embedding blocks.
pub const SCALAR_FEATURES: usize = 2 + STRING_FLAGS + 2;

/// Feature blocks switched off by the ablation variants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablation {
    /// Drop neighbor-compatibility features and neighbor adjacency.
    pub local: bool,
    /// Uniform instead of attention-weighted context.
    pub no_attention: bool,
    /// Zero the context and entity embedding blocks.
    pub no_embedding: bool,
}

impl Ablation {
    pub const FULL: Ablation = Ablation {
        local: false,
        no_attention: false,
        no_embedding: false,
    };

    pub fn bits(self) -> u8 {
        u8::from(self.local) | u8::from(self.no_attention) << 1 | u8::from(self.no_embedding) << 2
    }

    pub fn from_bits(b: u8) -> Self {
        Ablation {
            local: b & 1 != 0,
            no_attention: b & 2 != 0,
            no_embedding: b & 4 != 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameConfig {
    /// Candidates per mention.
    pub n: usize,
    /// Neighbor mentions on each side.
    pub q: usize,
    /// Context tokens on each side of a mention.
    pub context_window: usize,
    pub ablation: Ablation,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            n: 10,
            q: 3,
            context_window: 20,
            ablation: Ablation::FULL,
        }
    }
}

impl FrameConfig {
    pub fn feature_width(&self, d: usize) -> usize {
        SCALAR_FEATURES + 2 * d + 2 * self.q
    }

    pub fn adjacency_width(&self) -> usize {
        2 * self.q * self.n + 1
    }
}

/// Model inputs for one mention.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFrame {
    /// `n x d0` feature rows; padding rows are zero.
    pub features: Matrix,
    /// `n x (2qn + 1)` row-normalized adjacency; last column is the self-connection.
    pub adjacency: Matrix,
    pub candidate_mask: Vec<bool>,
    /// Validity of the `2qn` neighbor candidate slots.
    pub neighbor_mask: Vec<bool>,
    /// Known context words, shared by all candidates.
    pub context_words: Vec<String>,
    /// Attention over `context_words` for each valid candidate.
    pub attention: Vec<Vec<f64>>,
}

impl CandidateFrame {
    pub fn n(&self) -> usize {
        self.candidate_mask.len()
    }

    pub fn self_column(&self) -> usize {
        self.adjacency.cols() - 1
    }
}

/// Known words within `window` tokens on either side of mention `i`, mention tokens excluded.
pub fn context_words<'a>(doc: &'a Document, i: usize, window: usize, store: &EmbeddingStore) -> Vec<&'a str> {
    let m = &doc.mentions[i];
    let left = m.start.saturating_sub(window)..m.start;
    let right = m.end..(m.end + window).min(doc.tokens.len());
    left.chain(right)
        .map(|k| doc.tokens[k].as_str())
        .filter(|w| store.word(w).is_some())
        .collect()
}

/// Softmax over `cosine(word, entity)` for the known words in `words`.
///
/// The result is aligned with `words`; unknown words get weight 0 and take
/// no part in the normalization. `None` when no word is known.
pub fn attention_weights(words: &[&str], entity: &str, store: &EmbeddingStore) -> Result<Option<Vec<f64>>> {
    let e = store.entity(entity).ok_or_else(|| Error::Lookup {
        kind: "entity",
        id: entity.to_string(),
    })?;
    attention_from_vector(words, e, store, false)
}

fn attention_from_vector(words: &[&str], e: &[f64], store: &EmbeddingStore, uniform: bool) -> Result<Option<Vec<f64>>> {
    let mut sims: Vec<Option<f64>> = Vec::with_capacity(words.len());
    for w in words {
        sims.push(match store.word(w) {
            Some(_) if uniform => Some(0.0),
            Some(v) => Some(match cosine(v, e) {
                Ok(c) => c,
                Err(Error::Degenerate(_)) => 0.0,
                Err(err) => return Err(err),
            }),
            None => None,
        });
    }
    let max = sims.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(None);
    }
    let mut weights: Vec<f64> = sims.iter().map(|s| s.map_or(0.0, |s| (s - max).exp())).collect();
    let z: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= z);
    Ok(Some(weights))
}

/// `sum_k weights[k] * w_k` over known words.
pub fn context_embedding(words: &[&str], weights: &[f64], store: &EmbeddingStore) -> Vec<f64> {
    let mut c = vec![0.0; store.dim()];
    for (w, a) in words.iter().zip(weights) {
        if let Some(v) = store.word(w) {
            for (ci, vi) in c.iter_mut().zip(v) {
                *ci += a * vi;
            }
        }
    }
    c
}

/// Mean of the known token vectors of `surface`; zero when no token is known.
pub fn mention_embedding(surface: &str, store: &EmbeddingStore) -> Vec<f64> {
    let mut acc = vec![0.0; store.dim()];
    let mut known = 0usize;
    for t in surface.split_whitespace() {
        if let Some(v) = store.word(t) {
            known += 1;
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
        }
    }
    if known == 0 {
        log::warn!("mention `{surface}` has no known tokens; using a zero embedding");
        return acc;
    }
    acc.iter_mut().for_each(|a| *a /= known as f64);
    acc
}

/// Cosine between the candidate and each neighbor mention embedding, by window slot.
/// Missing neighbors and zero embeddings give 0.
pub fn neighbor_compatibility(entity: &[f64], neighbor_embeddings: &[Option<&[f64]>]) -> Vec<f64> {
    neighbor_embeddings
        .iter()
        .map(|m| match m {
            Some(v) => cosine(entity, v).unwrap_or(0.0),
            None => 0.0,
        })
        .collect()
}

/// Relatedness of `entity` to every candidate slot of the window neighbors.
///
/// `neighbors` has one entry per window slot; each set must have `n` slots.
pub fn build_subgraph(
    entity: &str,
    neighbors: &[Option<&CandidateSet>],
    store: &EmbeddingStore,
    n: usize,
) -> Result<Vec<f64>> {
    let mut g = vec![0.0; neighbors.len() * n];
    for (p, set) in neighbors.iter().enumerate() {
        let Some(set) = set else { continue };
        for (k, c) in set.valid().take(n).enumerate() {
            g[p * n + k] = relatedness(entity, &c.entity, store)?;
        }
    }
    Ok(g)
}

/// Candidate sets for every mention of `doc`.
pub fn document_candidates(doc: &Document, dict: &MentionDictionary, n: usize) -> Vec<CandidateSet> {
    doc.mentions
        .iter()
        .enumerate()
        .map(|(i, m)| generate(i, &m.surface, dict, n))
        .collect()
}

/// Builds `f`, `Ã` and the masks for mention `i`.
pub fn assemble_frame(
    doc: &Document,
    i: usize,
    candidates: &[CandidateSet],
    store: &EmbeddingStore,
    cfg: &FrameConfig,
) -> Result<CandidateFrame> {
    let mention_embeddings: Vec<Vec<f64>> = doc
        .mentions
        .iter()
        .map(|m| mention_embedding(&m.surface, store))
        .collect();
    assemble_frame_cached(doc, i, candidates, &mention_embeddings, store, cfg)
}

fn assemble_frame_cached(
    doc: &Document,
    i: usize,
    candidates: &[CandidateSet],
    mention_embeddings: &[Vec<f64>],
    store: &EmbeddingStore,
    cfg: &FrameConfig,
) -> Result<CandidateFrame> {
    let (n, q, d) = (cfg.n, cfg.q, store.dim());
    let ab = cfg.ablation;
    let d0 = cfg.feature_width(d);
    let own = &candidates[i];
    if own.n() != n {
        return Err(Error::Contract(format!("candidate set has {} slots, expected {n}", own.n())));
    }

    let slots = window_slots(doc.mentions.len(), i, q);
    let neighbor_sets: Vec<Option<&CandidateSet>> = slots.iter().map(|s| s.map(|j| &candidates[j])).collect();
    let neighbor_embs: Vec<Option<&[f64]>> = slots
        .iter()
        .map(|s| s.map(|j| mention_embeddings[j].as_slice()))
        .collect();
    let mut neighbor_mask = vec![false; 2 * q * n];
    for (p, set) in neighbor_sets.iter().enumerate() {
        if let Some(set) = set {
            for k in 0..set.valid_count().min(n) {
                neighbor_mask[p * n + k] = true;
            }
        }
    }

    let words = context_words(doc, i, cfg.context_window, store);
    let mention = &doc.mentions[i];
    let mut f = Matrix::zeros(n, d0);
    let mut raw_adj = Matrix::zeros(n, 2 * q * n + 1);
    let mut attention = Vec::new();

    for (j, cand) in own.valid().enumerate() {
        let e = store.entity(&cand.entity).ok_or_else(|| Error::Lookup {
            kind: "entity",
            id: cand.entity.clone(),
        })?;
        let row = f.row_mut(j);
        row[0] = cand.prior;
        let s = string_features(&mention.surface, &entity_title(&cand.entity))?;
        row[1] = s.edit;
        row[2..2 + STRING_FLAGS].copy_from_slice(&s.flags);

        match attention_from_vector(&words, e, store, ab.no_attention)? {
            Some(weights) => {
                let c = context_embedding(&words, &weights, store);
                let compat_e = cosine(e, &c).unwrap_or(0.0);
                let compat_s = match store.sense_for_entity(&cand.entity) {
                    Some(sv) => cosine(sv, &c).unwrap_or(0.0),
                    None => compat_e,
                };
                row[8] = compat_e;
                row[9] = compat_s;
                if !ab.no_embedding {
                    row[SCALAR_FEATURES..SCALAR_FEATURES + d].copy_from_slice(&c);
                }
                attention.push(weights);
            }
            None => attention.push(Vec::new()),
        }
        if !ab.no_embedding {
            row[SCALAR_FEATURES + d..SCALAR_FEATURES + 2 * d].copy_from_slice(e);
        }
        if !ab.local {
            let nc = neighbor_compatibility(e, &neighbor_embs);
            row[SCALAR_FEATURES + 2 * d..].copy_from_slice(&nc);
            let g = build_subgraph(&cand.entity, &neighbor_sets, store, n)?;
            raw_adj.row_mut(j)[..2 * q * n].copy_from_slice(&g);
        }
    }
    // every row, padding included, keeps its self-connection
    for j in 0..n {
        raw_adj.set(j, 2 * q * n, 1.0);
    }
    let adjacency = row_normalize(&raw_adj)?;

    Ok(CandidateFrame {
        features: f,
        adjacency,
        candidate_mask: own.mask(),
        neighbor_mask,
        context_words: words.iter().map(|w| w.to_string()).collect(),
        attention,
    })
}

/// Candidate sets, frames and gold slots for a whole document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentFrames {
    pub doc_id: String,
    pub candidates: Vec<CandidateSet>,
    pub frames: Vec<CandidateFrame>,
    /// Gold slot when the gold entity is among the valid candidates.
    pub gold_slots: Vec<Option<usize>>,
    pub q: usize,
}

impl DocumentFrames {
    pub fn mention_count(&self) -> usize {
        self.frames.len()
    }
}

pub fn build_document_frames(
    doc: &Document,
    dict: &MentionDictionary,
    store: &EmbeddingStore,
    cfg: &FrameConfig,
) -> Result<DocumentFrames> {
    let candidates = document_candidates(doc, dict, cfg.n);
    frames_from_candidates(doc, candidates, store, cfg)
}

pub fn frames_from_candidates(
    doc: &Document,
    candidates: Vec<CandidateSet>,
    store: &EmbeddingStore,
    cfg: &FrameConfig,
) -> Result<DocumentFrames> {
    let mention_embeddings: Vec<Vec<f64>> = doc
        .mentions
        .iter()
        .map(|m| mention_embedding(&m.surface, store))
        .collect();
    let frames = (0..doc.mentions.len())
        .map(|i| assemble_frame_cached(doc, i, &candidates, &mention_embeddings, store, cfg))
        .collect::<Result<Vec<_>>>()?;
    let gold_slots = doc
        .mentions
        .iter()
        .zip(&candidates)
        .map(|(m, c)| m.gold.as_deref().and_then(|g| c.position(g)))
        .collect();
    Ok(DocumentFrames {
        doc_id: doc.id.clone(),
        candidates,
        frames,
        gold_slots,
        q: cfg.q,
    })
}

/// One-line text dump of a frame, floats at 17 significant digits.
pub fn dump_frame(doc_id: &str, mention: usize, frame: &CandidateFrame) -> String {
    let mut out = format!(
        "frame {doc_id} {mention} n {} d0 {} cols {} mask ",
        frame.n(),
        frame.features.cols(),
        frame.adjacency.cols()
    );
    for &m in &frame.candidate_mask {
        out.push(if m { '1' } else { '0' });
    }
    out.push_str(" f");
    for v in frame.features.data() {
        let _ = write!(out, " {v:.16e}");
    }
    out.push_str(" a");
    for v in frame.adjacency.data() {
        let _ = write!(out, " {v:.16e}");
    }
    out
}
