use crate::error::{Error, Result};
use crate::numeric::Scalar;

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![S::zero(); n],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// Converts a row-major `f64` matrix, the storage type of all datasets.
    pub fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(vec![rows, cols], data.iter().map(|&x| S::lit(x)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row count of a matrix; a vector is treated as a single row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => 1,
            _ => self.shape[0],
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn row(&self, i: usize) -> &[S] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    /// Copy of rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        let c = self.cols();
        Self {
            shape: vec![end - start, c],
            data: self.data[start * c..end * c].to_vec(),
        }
    }

    /// Copy of columns `start..end` of a matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Self {
        let c = self.cols();
        let w = end - start;
        let mut data = Vec::with_capacity(self.rows() * w);
        for r in 0..self.rows() {
            data.extend_from_slice(&self.data[r * c + start..r * c + end]);
        }
        Self {
            shape: vec![self.rows(), w],
            data,
        }
    }

    /// Row-wise concatenation `[a | b]`.
    pub fn hcat(a: &Self, b: &Self) -> Result<Self> {
        if a.rows() != b.rows() {
            return Err(Error::Shape(format!(
                "hcat row mismatch {} vs {}",
                a.rows(),
                b.rows()
            )));
        }
        let (ca, cb) = (a.cols(), b.cols());
        let mut data = Vec::with_capacity(a.rows() * (ca + cb));
        for r in 0..a.rows() {
            data.extend_from_slice(a.row(r));
            data.extend_from_slice(b.row(r));
        }
        Ok(Self {
            shape: vec![a.rows(), ca + cb],
            data,
        })
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vcat(parts: &[&Self]) -> Result<Self> {
        let cols = parts.first().map(|p| p.cols()).unwrap_or(0);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols() != cols {
                return Err(Error::Shape(format!(
                    "vcat column mismatch {} vs {cols}",
                    p.cols()
                )));
            }
            rows += p.rows();
            data.extend_from_slice(&p.data);
        }
        Ok(Self {
            shape: vec![rows, cols],
            data,
        })
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.to_f64_lossy()).collect()
    }
}

/// Row-major matrix view used by the dense kernels.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a, S> {
    pub data: &'a [S],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a, S> Mat<'a, S> {
    pub fn new(data: &'a [S], rows: usize, cols: usize) -> Self {
        debug_assert!(data.len() >= rows * cols);
        Self {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    pub fn t(self) -> Self {
        Self {
            transposed: !self.transposed,
            ..self
        }
    }

    fn logical(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (usize, usize) {
        if self.transposed {
            (1, self.cols)
        } else {
            (self.cols, 1)
        }
    }
}

/// `out <- a b` (or `out += a b` when `accumulate`), `out` row-major.
pub(crate) fn matmul<S: Scalar>(a: Mat<'_, S>, b: Mat<'_, S>, out: &mut [S], accumulate: bool) {
    let (m, k) = a.logical();
    let (kb, n) = b.logical();
    assert_eq!(k, kb, "inner dimensions differ");
    assert!(a.data.len() >= a.rows * a.cols && b.data.len() >= b.rows * b.cols);
    assert!(out.len() >= m * n);
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    let beta = if accumulate { S::one() } else { S::zero() };
    if k == 0 {
        if !accumulate {
            out[..m * n].iter_mut().for_each(|x| *x = S::zero());
        }
        return;
    }
    S::gemm(
        m,
        k,
        n,
        S::one(),
        a.data,
        rsa,
        csa,
        b.data,
        rsb,
        csb,
        beta,
        out,
        n,
        1,
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matmul_matches_naive_in_all_transpositions() {
        let a: Vec<f64> = (0..6).map(|x| x as f64 * 0.5 - 1.0).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|x| (x as f64).sin()).collect(); // 3x4
        let expected = naive(&a, 2, 3, &b, 4);

        let mut out = vec![0.0; 8];
        matmul(Mat::new(&a, 2, 3), Mat::new(&b, 3, 4), &mut out, false);
        for (x, y) in out.iter().zip(&expected) {
            assert!((x - y).abs() < 1e-12);
        }

        // transpose both operands explicitly and multiply through the views
        let at: Vec<f64> = (0..6).map(|i| a[(i % 2) * 3 + i / 2]).collect(); // 3x2
        let bt: Vec<f64> = (0..12).map(|i| b[(i % 3) * 4 + i / 3]).collect(); // 4x3
        let mut out2 = vec![1.0; 8];
        matmul(Mat::new(&at, 3, 2).t(), Mat::new(&bt, 4, 3).t(), &mut out2, false);
        for (x, y) in out2.iter().zip(&expected) {
            assert!((x - y).abs() < 1e-12);
        }

        matmul(Mat::new(&a, 2, 3), Mat::new(&b, 3, 4), &mut out, true);
        for (x, y) in out.iter().zip(&expected) {
            assert!((x - 2.0 * y).abs() < 1e-12);
        }
    }

    #[test]
    fn new_rejects_bad_length() {
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn concat_helpers() {
        let a = Tensor::<f64>::from_rows(2, 1, vec![1.0, 2.0]).unwrap();
        let b = Tensor::<f64>::from_rows(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let h = Tensor::hcat(&a, &b).unwrap();
        assert_eq!(h.data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        assert_eq!(h.slice_cols(1, 3), b);
        let v = Tensor::vcat(&[&b, &b]).unwrap();
        assert_eq!(v.shape(), &[4, 2]);
        assert_eq!(v.slice_rows(2, 4), b);
    }
}
