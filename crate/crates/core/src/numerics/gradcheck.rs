use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Compares analytic gradients against central differences.
///
/// `loss_fn` returns the loss and its analytic gradient (one matrix per
/// parameter) at the given parameter values. At most `max_coords` coordinates
/// per parameter are checked; `None` checks all of them. The returned value is
/// the largest `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn check_gradients<F>(
    mut loss_fn: F,
    params: &[Matrix],
    epsilon: f64,
    max_coords: Option<usize>,
    seed: u64,
) -> Result<f64>
where
    F: FnMut(&[Matrix]) -> Result<(f64, Vec<Matrix>)>,
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::Contract(format!("epsilon {epsilon} outside [1e-7, 1e-3]")));
    }
    let (loss0, analytic) = loss_fn(params)?;
    if !loss0.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {loss0}")));
    }
    if analytic.len() != params.len() {
        return Err(Error::Contract("gradient count differs from parameter count".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work: Vec<Matrix> = params.to_vec();
    let mut worst = 0.0f64;
    for (pi, param) in params.iter().enumerate() {
        let len = param.data().len();
        let coords: Vec<usize> = match max_coords {
            Some(k) if k < len => sample(&mut rng, len, k).into_vec(),
            _ => (0..len).collect(),
        };
        for c in coords {
            let orig = param.data()[c];
            work[pi].data_mut()[c] = orig + epsilon;
            let (plus, _) = loss_fn(&work)?;
            work[pi].data_mut()[c] = orig - epsilon;
            let (minus, _) = loss_fn(&work)?;
            work[pi].data_mut()[c] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric("non-finite loss during finite differences".into()));
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[pi].data()[c];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matrix::matmul;

    #[test]
    fn quadratic_has_exact_gradient() {
        let w = Matrix::from_rows(&[vec![0.3, -1.2], vec![2.0, 0.7]]).unwrap();
        let err = check_gradients(
            |p| Ok((0.5 * p[0].frobenius_sq(), vec![p[0].clone()])),
            &[w],
            1e-5,
            None,
            0,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn linear_model_gradient() {
        // loss = sum((X W - y)^2) / 2, grad = X^T (X W - y)
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.3], vec![0.2, 0.9]]).unwrap();
        let y = Matrix::column_vector(&[1.0, -1.0, 0.5]);
        let w = Matrix::column_vector(&[0.1, -0.4]);
        let err = check_gradients(
            |p| {
                let mut r = matmul(&x, &p[0])?;
                r.axpy(-1.0, &y)?;
                let g = matmul(&x.transpose(), &r)?;
                Ok((0.5 * r.frobenius_sq(), vec![g]))
            },
            &[w],
            1e-6,
            None,
            0,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let w = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let err = check_gradients(
            |p| Ok((0.5 * p[0].frobenius_sq(), vec![Matrix::zeros(1, 2)])),
            &[w],
            1e-5,
            None,
            0,
        )
        .unwrap();
        assert!(err > 0.5);
    }

    #[test]
    fn rejects_non_finite_loss_and_bad_epsilon() {
        let w = Matrix::zeros(1, 1);
        assert!(matches!(
            check_gradients(|_| Ok((f64::NAN, vec![Matrix::zeros(1, 1)])), std::slice::from_ref(&w), 1e-5, None, 0),
            Err(Error::Numeric(_))
        ));
        assert!(check_gradients(|_| Ok((0.0, vec![Matrix::zeros(1, 1)])), &[w], 1e-1, None, 0).is_err());
    }
}
