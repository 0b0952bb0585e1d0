//! The network: MLP encoder, `T` sub-graph convolution layers that exchange
//! hidden states between window neighbors, and a per-candidate linear decoder.
//!
//! For mention `i` at layer `t` the stacked input of candidate row `j` is the
//! hidden rows of every neighbor candidate slot (window order, zero rows for
//! missing neighbors) followed by row `j` of the mention's own hidden state.
//! Multiplying by the adjacency row then reduces to
//! `A_nb · H_nb + a_self ⊙ h_i`, which is what [`forward_on_tape`] computes.
//! All mentions read layer-`t` states and write layer `t + 1` together.

mod checkpoint;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::window_slots;
use crate::error::{Error, Result};
use crate::features::DocumentFrames;
use crate::numerics::{masked_softmax, Block, Matrix, Tape, Var};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use train::{train, write_history_csv, LossRecord, TrainConfig, TrainOutcome};

/// Layer widths: `d0` input features, then `d1 ..= d_{T+1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelShape {
    pub d0: usize,
    pub widths: Vec<usize>,
}

impl ModelShape {
    /// Constant hidden width `hidden` with `layers` sub-graph convolutions.
    pub fn uniform(d0: usize, hidden: usize, layers: usize) -> Result<Self> {
        if layers == 0 || hidden == 0 || d0 == 0 {
            return Err(Error::Config("model needs d0, hidden width and layers >= 1".into()));
        }
        Ok(ModelShape {
            d0,
            widths: vec![hidden; layers + 1],
        })
    }

    /// Number of sub-graph convolution layers `T`.
    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub shape: ModelShape,
    pub encoder_w: Matrix,
    pub encoder_b: Matrix,
    /// `W^t`, one per layer, not shared.
    pub layers: Vec<Matrix>,
    pub decoder: Matrix,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Matrix::from_vec(rows, cols, data).expect("finite init")
}

impl ModelParams {
    /// Glorot-uniform weights, zero bias.
    pub fn init(shape: &ModelShape, seed: u64) -> Result<Self> {
        if shape.widths.len() < 2 {
            return Err(Error::Config("model needs at least one sub-graph layer".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = &shape.widths;
        let encoder_w = glorot(&mut rng, shape.d0, w[0]);
        let layers = w.windows(2).map(|p| glorot(&mut rng, p[0], p[1])).collect();
        let decoder = glorot(&mut rng, *w.last().unwrap(), 1);
        Ok(ModelParams {
            shape: shape.clone(),
            encoder_w,
            encoder_b: Matrix::zeros(1, w[0]),
            layers,
            decoder,
        })
    }

    pub fn matrices(&self) -> Vec<&Matrix> {
        let mut v = vec![&self.encoder_w, &self.encoder_b];
        v.extend(self.layers.iter());
        v.push(&self.decoder);
        v
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = vec![&mut self.encoder_w, &mut self.encoder_b];
        v.extend(self.layers.iter_mut());
        v.push(&mut self.decoder);
        v
    }

    /// Rebuilds parameters from matrices in [`ModelParams::matrices`] order.
    pub fn from_matrices(shape: &ModelShape, mut m: Vec<Matrix>) -> Result<Self> {
        let t = shape.layers();
        if m.len() != t + 3 {
            return Err(Error::Contract(format!("expected {} matrices, got {}", t + 3, m.len())));
        }
        let decoder = m.pop().unwrap();
        let layers = m.split_off(2);
        let encoder_b = m.pop().unwrap();
        let encoder_w = m.pop().unwrap();
        let p = ModelParams {
            shape: shape.clone(),
            encoder_w,
            encoder_b,
            layers,
            decoder,
        };
        p.check_shapes()?;
        Ok(p)
    }

    pub fn check_shapes(&self) -> Result<()> {
        let w = &self.shape.widths;
        let mut expect = vec![(self.shape.d0, w[0]), (1, w[0])];
        expect.extend(w.windows(2).map(|p| (p[0], p[1])));
        expect.push((*w.last().unwrap(), 1));
        for (m, e) in self.matrices().iter().zip(&expect) {
            if m.shape() != *e {
                return Err(Error::Dimension {
                    op: "model parameters",
                    left: m.shape(),
                    right: *e,
                });
            }
            if !m.is_finite() {
                return Err(Error::Numeric("non-finite parameter".into()));
            }
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Vec<Matrix> {
        self.matrices().iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect()
    }
}

/// Parameter leaves registered on a tape.
pub struct ParamVars {
    pub all: Vec<Var>,
}

impl ParamVars {
    pub fn register(tape: &mut Tape, params: &ModelParams) -> Self {
        ParamVars {
            all: params.matrices().into_iter().map(|m| tape.leaf(m.clone())).collect(),
        }
    }

    fn encoder_w(&self) -> Var {
        self.all[0]
    }

    fn encoder_b(&self) -> Var {
        self.all[1]
    }

    fn layer(&self, t: usize) -> Var {
        self.all[2 + t]
    }

    fn decoder(&self) -> Var {
        *self.all.last().unwrap()
    }
}

/// Tape handles produced by one document forward pass.
pub struct TapeForward {
    /// Feature leaves, one per mention.
    pub features: Vec<Var>,
    /// Score columns, one per mention.
    pub scores: Vec<Var>,
    /// Cross-entropy terms for the mentions that were asked for and have a valid gold slot.
    pub losses: Vec<(usize, Var)>,
    /// Probabilities per mention; `None` when the mention has no candidates.
    pub probabilities: Vec<Option<Vec<f64>>>,
}

fn mask_vector(mask: &[bool]) -> Vec<f64> {
    mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
}

/// Records the document forward pass on `tape`.
///
/// `loss_for[i]` selects which mentions contribute a loss term; `None` means
/// every mention with a gold slot. Feature matrices get adjoints only when
/// `track_features` is set.
pub fn forward_on_tape(
    tape: &mut Tape,
    vars: &ParamVars,
    params: &ModelParams,
    doc: &DocumentFrames,
    loss_for: Option<&[bool]>,
    track_features: bool,
) -> Result<TapeForward> {
    let k = doc.mention_count();
    let q = doc.q;
    let mut features = Vec::with_capacity(k);
    let mut hidden = Vec::with_capacity(k);
    for fr in &doc.frames {
        if fr.features.cols() != params.shape.d0 {
            return Err(Error::Dimension {
                op: "encode",
                left: fr.features.shape(),
                right: params.encoder_w.shape(),
            });
        }
        let f = if track_features {
            tape.leaf(fr.features.clone())
        } else {
            tape.constant(fr.features.clone())
        };
        features.push(f);
        let z = tape.matmul(f, vars.encoder_w())?;
        let z = tape.add_bias(z, vars.encoder_b())?;
        let h = tape.relu(z);
        hidden.push(tape.row_scale(h, mask_vector(&fr.candidate_mask))?);
    }

    // constant adjacency pieces
    let mut nb_adj = Vec::with_capacity(k);
    let mut self_w = Vec::with_capacity(k);
    let mut slots = Vec::with_capacity(k);
    for (i, fr) in doc.frames.iter().enumerate() {
        let n = fr.n();
        let cols = fr.adjacency.cols();
        if cols != 2 * q * n + 1 {
            return Err(Error::Dimension {
                op: "sub-graph adjacency",
                left: fr.adjacency.shape(),
                right: (n, 2 * q * n + 1),
            });
        }
        let mut a = Matrix::zeros(n, cols - 1);
        let mut s = Vec::with_capacity(n);
        for r in 0..n {
            a.row_mut(r).copy_from_slice(&fr.adjacency.row(r)[..cols - 1]);
            s.push(fr.adjacency.get(r, cols - 1));
        }
        nb_adj.push(tape.constant(a));
        self_w.push(s);
        slots.push(window_slots(k, i, q));
    }

    for t in 0..params.shape.layers() {
        let width = params.layers[t].rows();
        let mut next = Vec::with_capacity(k);
        for (i, fr) in doc.frames.iter().enumerate() {
            let n = fr.n();
            let blocks = slots[i]
                .iter()
                .map(|s| match s {
                    Some(j) => Block::Var(hidden[*j]),
                    None => Block::Zeros(n),
                })
                .collect();
            let stacked = tape.stack(blocks, width)?;
            let mixed = tape.matmul(nb_adj[i], stacked)?;
            let own = tape.row_scale(hidden[i], self_w[i].clone())?;
            let agg = tape.add(mixed, own)?;
            let z = tape.matmul(agg, vars.layer(t))?;
            let h = tape.relu(z);
            next.push(tape.row_scale(h, mask_vector(&fr.candidate_mask))?);
        }
        hidden = next;
    }

    let mut scores = Vec::with_capacity(k);
    let mut losses = Vec::new();
    let mut probabilities = Vec::with_capacity(k);
    for (i, fr) in doc.frames.iter().enumerate() {
        let s = tape.matmul(hidden[i], vars.decoder())?;
        scores.push(s);
        if !fr.candidate_mask.iter().any(|&m| m) {
            probabilities.push(None);
            continue;
        }
        let wanted = loss_for.is_none_or(|l| l[i]);
        match doc.gold_slots[i] {
            Some(g) if wanted => {
                let (loss, p) = tape.softmax_xent(s, g, &fr.candidate_mask)?;
                losses.push((i, loss));
                probabilities.push(Some(p));
            }
            _ => probabilities.push(Some(masked_softmax(tape.value(s).data(), &fr.candidate_mask)?)),
        }
    }
    Ok(TapeForward {
        features,
        scores,
        losses,
        probabilities,
    })
}

/// Per-mention output of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct MentionLink {
    pub surface_slot: usize,
    /// Chosen entity; `None` when the mention has no candidates.
    pub entity: Option<String>,
    pub slot: Option<usize>,
    pub probability: f64,
    /// Probability per candidate slot, zero on padding.
    pub probabilities: Vec<f64>,
    /// Whether the choice equals the gold entity, when gold is known.
    pub correct: Option<bool>,
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkResult {
    pub doc_id: String,
    pub mentions: Vec<MentionLink>,
}

impl LinkResult {
    pub fn total_loss(&self) -> f64 {
        self.mentions.iter().filter_map(|m| m.loss).sum()
    }
}

/// Lowest index among the maxima.
pub fn argmax(p: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, (&v, &m)) in p.iter().zip(mask).enumerate() {
        if m && best.is_none_or(|b| v > p[b]) {
            best = Some(j);
        }
    }
    best
}

/// Forward pass with argmax assignment for every mention of one document.
pub fn link(doc: &DocumentFrames, params: &ModelParams, gold: &[Option<String>]) -> Result<LinkResult> {
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params);
    let out = forward_on_tape(&mut tape, &vars, params, doc, None, false)?;
    let loss_of: std::collections::HashMap<usize, f64> = out
        .losses
        .iter()
        .map(|(i, v)| (*i, tape.value(*v).get(0, 0)))
        .collect();
    let mut mentions = Vec::with_capacity(doc.mention_count());
    for (i, probs) in out.probabilities.into_iter().enumerate() {
        let fr = &doc.frames[i];
        let g = gold.get(i).and_then(|g| g.as_deref());
        let m = match probs {
            None => MentionLink {
                surface_slot: i,
                entity: None,
                slot: None,
                probability: 0.0,
                probabilities: vec![0.0; fr.n()],
                correct: g.map(|_| false),
                loss: None,
            },
            Some(p) => {
                let j = argmax(&p, &fr.candidate_mask).expect("at least one valid slot");
                let entity = doc.candidates[i].slot(j).map(|c| c.entity.clone());
                MentionLink {
                    surface_slot: i,
                    correct: g.map(|g| entity.as_deref() == Some(g)),
                    entity,
                    slot: Some(j),
                    probability: p[j],
                    probabilities: p,
                    loss: loss_of.get(&i).copied(),
                }
            }
        };
        mentions.push(m);
    }
    Ok(LinkResult {
        doc_id: doc.doc_id.clone(),
        mentions,
    })
}

/// Summed loss over `docs` and its gradient with respect to every parameter.
pub fn loss_and_gradients(docs: &[DocumentFrames], params: &ModelParams) -> Result<(f64, Vec<Matrix>)> {
    let mut total = 0.0;
    let mut grads = params.zeros_like();
    for doc in docs {
        let (loss, g, _) = document_gradients(doc, params, None, 1.0, false)?;
        total += loss;
        for (acc, x) in grads.iter_mut().zip(&g) {
            acc.axpy(1.0, x)?;
        }
    }
    Ok((total, grads))
}

/// Loss (scaled by `scale`) and gradients for one document. Also returns the
/// gradient with respect to each mention's feature matrix.
pub(crate) fn document_gradients(
    doc: &DocumentFrames,
    params: &ModelParams,
    loss_for: Option<&[bool]>,
    scale: f64,
    track_features: bool,
) -> Result<(f64, Vec<Matrix>, Vec<Option<Matrix>>)> {
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params);
    let out = forward_on_tape(&mut tape, &vars, params, doc, loss_for, track_features)?;
    if out.losses.is_empty() {
        return Ok((0.0, params.zeros_like(), vec![None; doc.mention_count()]));
    }
    let sum = tape.sum(out.losses.iter().map(|(_, v)| *v).collect())?;
    let root = tape.scale(sum, scale);
    let loss = tape.value(root).get(0, 0);
    let mut g = tape.backward(root);
    let grads = vars
        .all
        .iter()
        .zip(params.matrices())
        .map(|(v, m)| g.take(*v).unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols())))
        .collect();
    let fgrads = out.features.iter().map(|v| g.take(*v)).collect();
    Ok((loss, grads, fgrads))
}
