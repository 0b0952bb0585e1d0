//! Reverse-mode differentiation over the handful of primitives the network uses.
//!
//! Values are recorded in evaluation order; [`Tape::backward`] walks the
//! records in reverse and accumulates adjoints. Constants and parameters are
//! both leaves; only their adjoints differ in how the caller uses them.

use super::matrix::{matmul_into, matmul_nt_into, matmul_tn_into, Matrix};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One block of a vertical stack: an existing value or a run of zero rows.
#[derive(Clone, Copy, Debug)]
pub enum Block {
    Var(Var),
    Zeros(usize),
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Relu(Var),
    RowScale(Var, Vec<f64>),
    Stack(Vec<Block>),
    Sum(Vec<Var>),
    Scale(Var, f64),
    SoftmaxXent {
        scores: Var,
        gold: usize,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A leaf that never receives an adjoint; saves work for fixed inputs.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    fn is_constant(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Constant)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(Error::Dimension {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let mut out = Matrix::zeros(sa.0, sb.1);
        matmul_into(self.value(a), self.value(b), &mut out);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Dimension {
                op: "add",
                left: sa,
                right: sb,
            });
        }
        let mut out = self.value(a).clone();
        for (o, x) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o += x;
        }
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Adds a `1 x c` bias row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb.0 != 1 || sa.1 != sb.1 {
            return Err(Error::Dimension {
                op: "add_bias",
                left: sa,
                right: sb,
            });
        }
        let mut out = self.value(a).clone();
        let b = self.value(bias).data().to_vec();
        for r in 0..out.rows() {
            for (o, x) in out.row_mut(r).iter_mut().zip(&b) {
                *o += x;
            }
        }
        Ok(self.push(out, Op::AddBias(a, bias)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = super::matrix::relu(self.value(a));
        self.push(out, Op::Relu(a))
    }

    /// Multiplies row `r` of `a` by the constant `scale[r]`.
    pub fn row_scale(&mut self, a: Var, scale: Vec<f64>) -> Result<Var> {
        let sa = self.shape(a);
        if scale.len() != sa.0 {
            return Err(Error::Dimension {
                op: "row_scale",
                left: sa,
                right: (scale.len(), 1),
            });
        }
        let mut out = self.value(a).clone();
        for (r, s) in scale.iter().enumerate() {
            out.row_mut(r).iter_mut().for_each(|v| *v *= s);
        }
        Ok(self.push(out, Op::RowScale(a, scale)))
    }

    /// Vertically stacks blocks that all have `cols` columns.
    pub fn stack(&mut self, blocks: Vec<Block>, cols: usize) -> Result<Var> {
        let mut data = Vec::new();
        let mut rows = 0;
        for b in &blocks {
            match *b {
                Block::Var(v) => {
                    let m = self.value(v);
                    if m.cols() != cols {
                        return Err(Error::Dimension {
                            op: "stack",
                            left: m.shape(),
                            right: (rows, cols),
                        });
                    }
                    data.extend_from_slice(m.data());
                    rows += m.rows();
                }
                Block::Zeros(r) => {
                    data.resize(data.len() + r * cols, 0.0);
                    rows += r;
                }
            }
        }
        Ok(self.push(Matrix::from_raw(rows, cols, data), Op::Stack(blocks)))
    }

    /// Sums `1 x 1` values. An empty sum is zero.
    pub fn sum(&mut self, terms: Vec<Var>) -> Result<Var> {
        let mut total = 0.0;
        for &t in &terms {
            if self.shape(t) != (1, 1) {
                return Err(Error::Dimension {
                    op: "sum",
                    left: self.shape(t),
                    right: (1, 1),
                });
            }
            total += self.value(t).get(0, 0);
        }
        Ok(self.push(Matrix::from_raw(1, 1, vec![total]), Op::Sum(terms)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= k);
        self.push(out, Op::Scale(a, k))
    }

    /// Masked softmax cross-entropy of an `n x 1` score column against `gold`.
    /// Returns the `1 x 1` loss node and the probabilities.
    pub fn softmax_xent(&mut self, scores: Var, gold: usize, mask: &[bool]) -> Result<(Var, Vec<f64>)> {
        let s = self.value(scores);
        if s.cols() != 1 {
            return Err(Error::Dimension {
                op: "softmax_xent",
                left: s.shape(),
                right: (mask.len(), 1),
            });
        }
        let (probs, loss) = super::matrix::softmax_xent(s.data(), gold, mask)?;
        let node = self.push(
            Matrix::from_raw(1, 1, vec![loss]),
            Op::SoftmaxXent {
                scores,
                gold,
                probs: probs.clone(),
            },
        );
        Ok((node, probs))
    }

    /// Reverse sweep from the scalar `root`. Returns one adjoint slot per node;
    /// nodes that do not influence `root` have `None`.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut adj: Vec<Option<Matrix>> = Vec::with_capacity(self.nodes.len());
        adj.resize_with(self.nodes.len(), || None);
        let (r, c) = self.shape(root);
        adj[root.0] = Some(Matrix::from_raw(r, c, vec![1.0; r * c]));

        for idx in (0..=root.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Constant => {}
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if !self.is_constant(*a) {
                        matmul_nt_into(&g, vb, slot(&mut adj, *a, va.shape()));
                    }
                    if !self.is_constant(*b) {
                        matmul_tn_into(va, &g, slot(&mut adj, *b, vb.shape()));
                    }
                }
                Op::Add(a, b) => {
                    accumulate(slot(&mut adj, *a, g.shape()), &g);
                    accumulate(slot(&mut adj, *b, g.shape()), &g);
                }
                Op::AddBias(a, bias) => {
                    accumulate(slot(&mut adj, *a, g.shape()), &g);
                    let gb = slot(&mut adj, *bias, (1, g.cols()));
                    for r in 0..g.rows() {
                        for (o, x) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                }
                Op::Relu(a) => {
                    let input = self.value(*a);
                    let ga = slot(&mut adj, *a, g.shape());
                    for ((o, x), gi) in ga.data_mut().iter_mut().zip(input.data()).zip(g.data()) {
                        if *x > 0.0 {
                            *o += gi;
                        }
                    }
                }
                Op::RowScale(a, scale) => {
                    let ga = slot(&mut adj, *a, g.shape());
                    for (r, s) in scale.iter().enumerate() {
                        for (o, x) in ga.row_mut(r).iter_mut().zip(g.row(r)) {
                            *o += s * x;
                        }
                    }
                }
                Op::Stack(blocks) => {
                    let cols = g.cols();
                    let mut offset = 0;
                    for b in blocks {
                        match *b {
                            Block::Var(v) => {
                                let rows = self.value(v).rows();
                                let gv = slot(&mut adj, v, (rows, cols));
                                let src = &g.data()[offset * cols..(offset + rows) * cols];
                                for (o, x) in gv.data_mut().iter_mut().zip(src) {
                                    *o += x;
                                }
                                offset += rows;
                            }
                            Block::Zeros(rows) => offset += rows,
                        }
                    }
                }
                Op::Sum(terms) => {
                    let gv = g.get(0, 0);
                    for t in terms {
                        slot(&mut adj, *t, (1, 1)).data_mut()[0] += gv;
                    }
                }
                Op::Scale(a, k) => {
                    let ga = slot(&mut adj, *a, g.shape());
                    for (o, x) in ga.data_mut().iter_mut().zip(g.data()) {
                        *o += k * x;
                    }
                }
                Op::SoftmaxXent { scores, gold, probs } => {
                    let gv = g.get(0, 0);
                    let gs = slot(&mut adj, *scores, (probs.len(), 1));
                    for (j, (o, p)) in gs.data_mut().iter_mut().zip(probs).enumerate() {
                        let y = if j == *gold { 1.0 } else { 0.0 };
                        *o += gv * (p - y);
                    }
                }
            }
            if matches!(node.op, Op::Leaf) {
                adj[idx] = Some(g);
            }
        }
        Gradients { adj }
    }
}

fn slot(adj: &mut [Option<Matrix>], v: Var, shape: (usize, usize)) -> &mut Matrix {
    adj[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
}

fn accumulate(dst: &mut Matrix, src: &Matrix) {
    for (o, x) in dst.data_mut().iter_mut().zip(src.data()) {
        *o += x;
    }
}

/// Adjoints of leaf values after a reverse sweep.
pub struct Gradients {
    adj: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.adj[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.adj[v.0].take()
    }
}
