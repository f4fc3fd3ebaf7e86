//! Row-compressed sparse storage and the dense-product interface used by the
//! sketching code.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Compressed sparse row matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from `(row, col, value)` triplets. Duplicate coordinates keep the
    /// last value seen; explicit zeros are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::param(format!(
                    "entry ({r}, {c}) outside a {nrows}x{ncols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::param(format!("non-finite value at ({r}, {c})")));
            }
            sorted.push((r, c, v));
        }
        // stable sort keeps insertion order among duplicates
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut i = 0;
        while i < sorted.len() {
            let (r, c, _) = sorted[i];
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1].0 == r && sorted[j + 1].1 == c {
                j += 1;
            }
            let v = sorted[j].2;
            if v != 0.0 {
                indices.push(c as u32);
                values.push(v);
                indptr[r + 1] += 1;
            }
            i = j + 1;
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn from_dense(dense: &DMatrix<f64>) -> Self {
        let mut triplets = Vec::new();
        for r in 0..dense.nrows() {
            for c in 0..dense.ncols() {
                let v = dense[(r, c)];
                if v != 0.0 {
                    triplets.push((r, c, v));
                }
            }
        }
        Self::from_triplets(dense.nrows(), dense.ncols(), &triplets).expect("in-bounds triplets")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Fraction of entries that are zero.
    pub fn sparsity(&self) -> f64 {
        let total = self.nrows * self.ncols;
        if total == 0 {
            return 0.0;
        }
        1.0 - self.nnz() as f64 / total as f64
    }

    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[u32], &[f64])> + '_ {
        (0..self.nrows).map(move |r| self.row(r))
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (idx, val) = self.row(r);
            idx.iter().zip(val).map(move |(&c, &v)| (r, c as usize, v))
        })
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn row_values_mut(&mut self, r: usize) -> &mut [f64] {
        let span = self.indptr[r]..self.indptr[r + 1];
        &mut self.values[span]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            out[(r, c)] = v;
        }
        out
    }

    /// Gather rows `order[0], order[1], …` into a new matrix.
    pub fn select_rows(&self, order: &[usize]) -> Self {
        let mut indptr = Vec::with_capacity(order.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for &r in order {
            let (idx, val) = self.row(r);
            indices.extend_from_slice(idx);
            values.extend_from_slice(val);
            indptr.push(indices.len());
        }
        Self {
            nrows: order.len(),
            ncols: self.ncols,
            indptr,
            indices,
            values,
        }
    }
}

/// Anything that can be multiplied against dense blocks from both sides.
pub trait LinearOperator: Sync {
    fn shape(&self) -> (usize, usize);
    /// `self · rhs`
    fn mul_dense(&self, rhs: &DMatrix<f64>) -> DMatrix<f64>;
    /// `selfᵀ · rhs`
    fn tr_mul_dense(&self, rhs: &DMatrix<f64>) -> DMatrix<f64>;
    fn frobenius_sq(&self) -> f64;
}

impl LinearOperator for CsrMatrix {
    fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    fn mul_dense(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(rhs.nrows(), self.ncols);
        let l = rhs.ncols();
        let mut out = DMatrix::zeros(self.nrows, l);
        for r in 0..self.nrows {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                for j in 0..l {
                    out[(r, j)] += v * rhs[(c as usize, j)];
                }
            }
        }
        out
    }

    fn tr_mul_dense(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(rhs.nrows(), self.nrows);
        let l = rhs.ncols();
        let mut out = DMatrix::zeros(self.ncols, l);
        for r in 0..self.nrows {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                for j in 0..l {
                    out[(c as usize, j)] += v * rhs[(r, j)];
                }
            }
        }
        out
    }

    fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

impl LinearOperator for DMatrix<f64> {
    fn shape(&self) -> (usize, usize) {
        (self.nrows(), self.ncols())
    }

    fn mul_dense(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self * rhs
    }

    fn tr_mul_dense(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.tr_mul(rhs)
    }

    fn frobenius_sq(&self) -> f64 {
        self.norm_squared()
    }
}
