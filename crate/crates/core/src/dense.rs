//! Row-major dense kernels for the time-integration inner loop.
//!
//! The Galerkin right-hand side is a handful of matrix-vector products and a
//! Cholesky solve per stage. These are memory bound, so the matrices are kept
//! row-major and every product reduces to contiguous dot products.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::par;

/// Rows per parallel task; small enough to balance, large enough to amortize.
const ROW_BLOCK: usize = 64;

/// Dot product with independent partial sums so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Square matrix stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMajor {
    n: usize,
    data: Vec<f64>,
}

impl RowMajor {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "square matrix expected");
        let n = m.nrows();
        // nalgebra is column-major, so the transpose's storage is our row order
        Self {
            n,
            data: m.transpose().as_slice().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `out = beta·out + alpha·A x`
    pub fn gemv(&self, alpha: f64, x: &[f64], beta: f64, out: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(out.len(), self.n);
        par::for_each_chunk_mut(out, ROW_BLOCK, |b, chunk| {
            for (r, o) in chunk.iter_mut().enumerate() {
                let v = alpha * dot(self.row(b * ROW_BLOCK + r), x);
                *o = if beta == 0.0 { v } else { beta * *o + v };
            }
        });
    }

    /// `A x` as a new vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.gemv(1.0, x, 0.0, &mut out);
        out
    }

    /// `xᵀ A x`
    pub fn quadratic(&self, x: &[f64]) -> f64 {
        dot(x, &self.apply(x))
    }
}

/// Cholesky factor `L` with both `L` and `Lᵀ` stored row-major, so the forward
/// and backward sweeps each read contiguous rows.
#[derive(Debug, Clone)]
pub struct CholeskyRows {
    n: usize,
    l: Vec<f64>,
    lt: Vec<f64>,
}

impl CholeskyRows {
    pub fn new(m: DMatrix<f64>) -> Option<Self> {
        let n = m.nrows();
        let chol: Cholesky<f64, Dyn> = Cholesky::new(m)?;
        let l = chol.l();
        Some(Self {
            n,
            lt: l.as_slice().to_vec(),
            l: l.transpose().as_slice().to_vec(),
        })
    }

    /// Solve `L Lᵀ x = b` in place.
    pub fn solve_mut(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for i in 0..n {
            let row = &self.l[i * n..i * n + i + 1];
            b[i] = (b[i] - dot(&row[..i], &b[..i])) / row[i];
        }
        for i in (0..n).rev() {
            let row = &self.lt[i * n + i..(i + 1) * n];
            b[i] = (b[i] - dot(&row[1..], &b[i + 1..])) / row[0];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |i, j| (((i * 31 + j * 17) as u64 ^ seed) % 97) as f64 / 97.0 - 0.5);
        &a * a.transpose() + DMatrix::identity(n, n) * n as f64
    }

    #[test]
    fn gemv_matches_nalgebra() {
        let m = spd(37, 3) + DMatrix::from_fn(37, 37, |i, j| i as f64 - 2.0 * j as f64);
        let x: Vec<f64> = (0..37).map(|i| (i as f64).sin()).collect();
        let mut out: Vec<f64> = (0..37).map(|i| i as f64).collect();
        let expect = DVector::from_column_slice(&out) * 0.5 + &m * DVector::from_column_slice(&x) * 2.0;
        RowMajor::from_matrix(&m).gemv(2.0, &x, 0.5, &mut out);
        for (a, b) in out.iter().zip(expect.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn cholesky_solve_inverts(n in 1usize..40, seed in any::<u64>()) {
            let m = spd(n, seed);
            let x: Vec<f64> = (0..n).map(|i| ((i as u64 ^ seed) % 13) as f64 - 6.0).collect();
            let mut b = (&m * DVector::from_column_slice(&x)).as_slice().to_vec();
            CholeskyRows::new(m).unwrap().solve_mut(&mut b);
            for (a, e) in b.iter().zip(&x) {
                prop_assert!((a - e).abs() <= 1e-10 * e.abs().max(1.0));
            }
        }

        #[test]
        fn dot_matches_naive(v in proptest::collection::vec(-1e3f64..1e3, 0..50)) {
            let w: Vec<f64> = v.iter().map(|x| x * 0.5 - 1.0).collect();
            let naive: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            prop_assert!((dot(&v, &w) - naive).abs() <= 1e-9 * naive.abs().max(1.0));
        }
    }

    #[test]
    fn not_positive_definite_is_rejected() {
        assert!(CholeskyRows::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_none());
    }
}
