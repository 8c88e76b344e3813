//! Dense vector arithmetic shared by the model, oracle and scheduler network.
//!
//! Everything here is 64-bit and allocation-light; the models in this crate
//! are small enough that plain `Vec<f64>` beats pulling in a tensor library.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedules::ImportanceWeights;

/// Flat parameter vector of a model or scheduler network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: f64, other: &ParamVector) -> Result<()> {
        check_len(self.len(), other.len(), "axpy")?;
        for (a, b) in self.0.iter_mut().zip(other.iter()) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &ParamVector) -> Result<f64> {
        check_len(self.len(), other.len(), "max_abs_diff")?;
        Ok(self
            .iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::dim(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::dim(format!("row {i} has {} columns, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::dim(format!("{what}: lengths {a} and {b} differ")));
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len(), "dot")?;
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

/// Softmax with max subtraction. Input must be finite and non-empty.
pub fn softmax(v: &[f64]) -> ImportanceWeights {
    ImportanceWeights::from_normalized(softmax_vec(v))
}

pub(crate) fn softmax_vec(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for o in &mut out {
        *o /= sum;
    }
    out
}

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff_grad<F>(mut f: F, x: &ParamVector, eps: f64) -> Result<ParamVector>
where
    F: FnMut(&ParamVector) -> Result<f64>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::arg(format!("eps must be positive, got {eps}")));
    }
    let mut probe = x.clone();
    let mut grad = ParamVector::zeros(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let plus = f(&probe)?;
        probe[i] = orig - eps;
        let minus = f(&probe)?;
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite function value while differencing coordinate {i}"
            )));
        }
        grad[i] = (plus - minus) / (2.0 * eps);
    }
    Ok(grad)
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, or 0 when both are exactly zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len(), "relative_error")?;
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom == 0.0 {
        Ok(0.0)
    } else {
        Ok(diff / denom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap(), 32.0);
        assert_eq!(dot(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(dot(&[3.0, -7.5, 2.0], &[0.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn dot_length_mismatch() {
        assert!(matches!(dot(&[1.0, 2.0], &[1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn softmax_examples() {
        let w = softmax(&[0.0, 0.0]);
        assert_eq!(w.as_slice(), &[0.5, 0.5]);
        let w = softmax(&[2f64.ln(), 0.0]);
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_large_inputs_do_not_overflow() {
        let w = softmax(&[1000.0, 999.0, -1000.0]);
        assert!(w.iter().all(|p| p.is_finite()));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn finite_diff_square() {
        let g = finite_diff_grad(|x| Ok(x[0] * x[0]), &ParamVector::new(vec![3.0]), 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn finite_diff_constant_and_linear() {
        let x = ParamVector::new(vec![0.3, -1.2, 4.0]);
        let g = finite_diff_grad(|_| Ok(2.5), &x, 1e-5).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));

        let a = [1.5, -2.0, 0.25];
        let g = finite_diff_grad(|x| dot(&a, x), &x, 1e-5).unwrap();
        for (gi, ai) in g.iter().zip(a) {
            assert!((gi - ai).abs() < 1e-9, "{gi} vs {ai}");
        }
    }

    #[test]
    fn finite_diff_rejects_non_finite() {
        let x = ParamVector::new(vec![0.0]);
        let r = finite_diff_grad(|x| Ok(if x[0] > 0.0 { f64::INFINITY } else { 0.0 }), &x, 1e-5);
        assert!(matches!(r, Err(Error::Numeric(_))));
        assert!(matches!(
            finite_diff_grad(|_| Ok(0.0), &x, 0.0),
            Err(Error::Argument(_))
        ));
    }

    fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50.0f64..50.0, n)
    }

    proptest! {
        #[test]
        fn softmax_is_simplex_point(v in prop::collection::vec(-300.0f64..300.0, 1..12)) {
            let w = softmax(&v);
            prop_assert!(w.iter().all(|&p| p > 0.0 && p <= 1.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn softmax_shift_invariant(v in prop::collection::vec(-20.0f64..20.0, 1..8), c in -100.0f64..100.0) {
            let a = softmax(&v);
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let b = softmax(&shifted);
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn dot_symmetric_bilinear((a, b, c) in (1usize..16).prop_flat_map(|n| (vec_strategy(n), vec_strategy(n), vec_strategy(n))), s in -3.0f64..3.0) {
            let ab = dot(&a, &b).unwrap();
            prop_assert_eq!(ab, dot(&b, &a).unwrap());
            let sa_plus_c: Vec<f64> = a.iter().zip(&c).map(|(x, z)| s * x + z).collect();
            let lhs = dot(&sa_plus_c, &b).unwrap();
            let rhs = s * ab + dot(&c, &b).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }
}
