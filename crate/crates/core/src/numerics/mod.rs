//! Dense float64 kernel: matrices, a small reverse-mode tape, momentum SGD and
//! a finite-difference gradient checker.

mod gradcheck;
mod matrix;
mod optim;
mod tape;

pub use gradcheck::check_gradients;
pub use matrix::{masked_softmax, matmul, relu, row_normalize, softmax_xent, Matrix};
pub use optim::Sgd;
pub use tape::{Block, Gradients, Tape, Var};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
