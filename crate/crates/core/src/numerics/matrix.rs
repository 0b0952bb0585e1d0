use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            if r > 0 {
                write!(f, "; ")?;
            }
            for (c, v) in self.row(r).iter().enumerate() {
                if c > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v}")?;
            }
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Contract(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite matrix entry {bad}")));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Contract("ragged rows".into()));
        }
        Matrix::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn row_vector(v: &[f64]) -> Self {
        Matrix {
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
    }

    pub fn column_vector(v: &[f64]) -> Self {
        Matrix {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: f64, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension {
                op: "axpy",
                left: self.shape(),
                right: other.shape(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Standard matrix product.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Dimension {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    matmul_into(a, b, &mut out);
    Ok(out)
}

/// `out += a * b`, shapes already checked.
pub(crate) fn matmul_into(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    let n = b.cols;
    for i in 0..a.rows {
        let arow = &a.data[i * a.cols..(i + 1) * a.cols];
        let orow = &mut out.data[i * n..(i + 1) * n];
        for (k, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * n..(k + 1) * n];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
}

/// `out += a^T * b`
pub(crate) fn matmul_tn_into(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    debug_assert_eq!(a.rows, b.rows);
    let n = b.cols;
    for k in 0..a.rows {
        let arow = &a.data[k * a.cols..(k + 1) * a.cols];
        let brow = &b.data[k * n..(k + 1) * n];
        for (i, &aki) in arow.iter().enumerate() {
            if aki == 0.0 {
                continue;
            }
            let orow = &mut out.data[i * n..(i + 1) * n];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aki * bkj;
            }
        }
    }
}

/// `out += a * b^T`
pub(crate) fn matmul_nt_into(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    debug_assert_eq!(a.cols, b.cols);
    let m = b.rows;
    for i in 0..a.rows {
        let arow = &a.data[i * a.cols..(i + 1) * a.cols];
        for j in 0..m {
            let brow = &b.data[j * b.cols..(j + 1) * b.cols];
            let dot: f64 = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            out.data[i * m + j] += dot;
        }
    }
}

pub fn relu(x: &Matrix) -> Matrix {
    let data = x.data.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Matrix::from_raw(x.rows, x.cols, data)
}

/// Divides each row with positive sum by that sum; all-zero rows pass through.
pub fn row_normalize(a: &Matrix) -> Result<Matrix> {
    if let Some(bad) = a.data.iter().find(|&&v| v < 0.0 || v.is_nan()) {
        return Err(Error::Contract(format!(
            "row_normalize needs nonnegative entries, found {bad}"
        )));
    }
    let mut out = a.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let sum: f64 = row.iter().sum();
        // rows already summing to one within rounding are left untouched so
        // that normalization is exactly idempotent
        let tol = 4.0 * f64::EPSILON * row.len() as f64;
        if sum > 0.0 && (sum - 1.0).abs() > tol {
            row.iter_mut().for_each(|v| *v /= sum);
        }
    }
    Ok(out)
}

/// Masked, max-shifted softmax. Masked slots get exactly 0.
pub fn masked_softmax(scores: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if scores.len() != mask.len() {
        return Err(Error::Dimension {
            op: "masked_softmax",
            left: (scores.len(), 1),
            right: (mask.len(), 1),
        });
    }
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Degenerate("all softmax slots are masked".into()));
    }
    if !max.is_finite() {
        return Err(Error::Numeric(format!("non-finite score {max}")));
    }
    let mut probs: Vec<f64> = scores
        .iter()
        .zip(mask)
        .map(|(&s, &m)| if m { (s - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    Ok(probs)
}

/// Masked softmax followed by cross-entropy against `gold`.
///
/// The loss is computed as `logsumexp - score[gold]` so that a dominant
/// gold score yields a loss of (numerically) zero rather than `-ln(1 - tiny)`.
pub fn softmax_xent(scores: &[f64], gold: usize, mask: &[bool]) -> Result<(Vec<f64>, f64)> {
    let probs = masked_softmax(scores, mask)?;
    if gold >= mask.len() || !mask[gold] {
        return Err(Error::Contract(format!("gold slot {gold} is masked")));
    }
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| (s - max).exp())
        .sum();
    let loss = max + z.ln() - scores[gold];
    Ok((probs, loss.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn identity_and_projector_products() {
        let b = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&Matrix::identity(2), &b).unwrap(), b);

        let p = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let v = Matrix::column_vector(&[5.0, 7.0]);
        assert_eq!(matmul(&p, &v).unwrap().data(), &[5.0, 0.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, 3, 4);
        let b = random(&mut rng, 4, 2);
        assert!(matmul(&a, &b).unwrap().max_abs_diff(&naive_matmul(&a, &b)) < 1e-12);
    }

    #[test]
    fn transposed_products_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random(&mut rng, 5, 3);
        let b = random(&mut rng, 5, 4);
        let mut tn = Matrix::zeros(3, 4);
        matmul_tn_into(&a, &b, &mut tn);
        assert!(tn.max_abs_diff(&naive_matmul(&a.transpose(), &b)) < 1e-12);

        let c = random(&mut rng, 6, 3);
        let mut nt = Matrix::zeros(5, 6);
        matmul_nt_into(&a, &c, &mut nt);
        assert!(nt.max_abs_diff(&naive_matmul(&a, &c.transpose())) < 1e-12);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)"), "{msg}");
    }

    #[test]
    fn from_vec_rejects_nan() {
        assert!(matches!(
            Matrix::from_vec(1, 2, vec![1.0, f64::NAN]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn relu_cases() {
        let x = Matrix::from_rows(&[vec![-1.0, 2.0]]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 2.0]);
        let neg = Matrix::from_rows(&[vec![-1.0, -3.0], vec![-0.5, -2.0]]).unwrap();
        assert_eq!(relu(&neg), Matrix::zeros(2, 2));
        assert_eq!(relu(&Matrix::zeros(1, 1)).data(), &[0.0]);
    }

    #[test]
    fn softmax_uniform_and_stabilized() {
        let (p, loss) = softmax_xent(&[0.0, 0.0, 0.0], 0, &[true; 3]).unwrap();
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((loss - 3f64.ln()).abs() < 1e-15);

        let (p, loss) = softmax_xent(&[1000.0, 0.0], 0, &[true; 2]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] < 1e-300);
        assert!(loss.abs() < 1e-15);
    }

    #[test]
    fn softmax_matches_extended_precision() {
        // ln(1 + e^-1 + e^-2), 40-digit evaluation
        let expected = 0.407_605_964_444_380_3_f64;
        let (_, loss) = softmax_xent(&[1.0, 2.0, 3.0], 2, &[true; 3]).unwrap();
        assert!((loss - expected).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn softmax_masking() {
        let p = masked_softmax(&[3.0, 1.0, 2.0], &[true, false, true]).unwrap();
        assert_eq!(p[1], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(matches!(
            softmax_xent(&[1.0, 2.0], 1, &[true, false]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            masked_softmax(&[1.0, 2.0], &[false, false]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn row_normalize_cases() {
        let a = Matrix::from_rows(&[vec![2.0, 2.0], vec![0.0, 0.0]]).unwrap();
        let n = row_normalize(&a).unwrap();
        assert_eq!(n.data(), &[0.5, 0.5, 0.0, 0.0]);
        let neg = Matrix::from_rows(&[vec![1.0, -0.1]]).unwrap();
        assert!(matches!(row_normalize(&neg), Err(Error::Contract(_))));
    }

    #[test]
    fn row_normalize_random_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut a = random(&mut rng, 4, 5);
        a.data_mut().iter_mut().for_each(|v| *v = v.abs());
        a.row_mut(2).iter_mut().for_each(|v| *v = 0.0);
        let n = row_normalize(&a).unwrap();
        for r in 0..4 {
            let s: f64 = n.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12 || n.row(r).iter().all(|&v| v == 0.0));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn mat(r: usize, c: usize) -> impl Strategy<Value = Matrix> {
            proptest::collection::vec(-2.0f64..2.0, r * c)
                .prop_map(move |d| Matrix::from_vec(r, c, d).unwrap())
        }

        proptest! {
            #[test]
            fn matmul_is_associative(a in mat(3, 4), b in mat(4, 5), c in mat(5, 2)) {
                let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
                let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
                let scale = left.data().iter().map(|v| v.abs()).fold(1.0, f64::max);
                prop_assert!(left.max_abs_diff(&right) / scale < 1e-9);
            }

            #[test]
            fn softmax_is_probability_vector(
                scores in proptest::collection::vec(-50.0f64..50.0, 1..12),
                mask_bits in proptest::collection::vec(any::<bool>(), 12),
            ) {
                let mut mask: Vec<bool> = mask_bits[..scores.len()].to_vec();
                mask[0] = true;
                let p = masked_softmax(&scores, &mask).unwrap();
                let s: f64 = p.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
                for (v, m) in p.iter().zip(&mask) {
                    prop_assert!((0.0..=1.0).contains(v));
                    if !m { prop_assert_eq!(*v, 0.0); }
                }
            }

            #[test]
            fn row_normalize_idempotent(a in mat(4, 5)) {
                let mut a = a;
                a.data_mut().iter_mut().for_each(|v| *v = v.abs());
                let once = row_normalize(&a).unwrap();
                let twice = row_normalize(&once).unwrap();
                for r in 0..4 {
                    let s: f64 = once.row(r).iter().sum();
                    if s > 0.0 {
                        for (x, y) in once.row(r).iter().zip(twice.row(r)) {
                            prop_assert_eq!(x, y);
                        }
                    }
                }
            }
        }
    }
}
