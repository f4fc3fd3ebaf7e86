//! Randomized truncated SVD (range finder with power iterations) producing the
//! low-rank sketch `Z = X·V_d`.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed;
use crate::sparse::LinearOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SvdParams {
    pub rank: usize,
    pub oversample: usize,
    pub power_iters: usize,
}

impl Default for SvdParams {
    fn default() -> Self {
        Self {
            rank: 32,
            oversample: 10,
            power_iters: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvdSketch {
    /// `M x d`, orthonormal columns.
    pub right_vectors: DMatrix<f64>,
    /// Nonincreasing.
    pub singular_values: Vec<f64>,
    /// `N x d` projection of the input rows.
    pub sketch: DMatrix<f64>,
}

impl SvdSketch {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Map sketch-space column vectors back to the original column space.
    pub fn lift(&self, sketch_cols: &DMatrix<f64>) -> DMatrix<f64> {
        &self.right_vectors * sketch_cols
    }
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

pub fn randomized_svd<X: LinearOperator>(x: &X, params: SvdParams, seed: u64) -> Result<SvdSketch> {
    let (n, m) = x.shape();
    let d = params.rank;
    if d == 0 || d > n.min(m) {
        return Err(Error::param(format!("svd rank {d} must lie in [1, {}]", n.min(m))));
    }
    let l = (d + params.oversample).min(n.min(m));
    let mut rng = seed::child_rng(seed, &[seed::stage::SKETCH]);
    let omega = DMatrix::from_fn(m, l, |_, _| StandardNormal.sample(&mut rng));

    let mut q = orthonormalize(x.mul_dense(&omega));
    for _ in 0..params.power_iters {
        let w = orthonormalize(x.tr_mul_dense(&q));
        q = orthonormalize(x.mul_dense(&w));
    }
    // B = Qᵀ X is l x M; its right singular vectors approximate those of X.
    let bt = x.tr_mul_dense(&q);
    let svd = bt.transpose().svd(false, true);
    let vt = svd.v_t.expect("requested right vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut right = DMatrix::zeros(m, d);
    let mut sv = Vec::with_capacity(d);
    for (col, &k) in order.iter().take(d).enumerate() {
        sv.push(svd.singular_values[k].max(0.0));
        let mut v = vt.row(k).transpose();
        // largest-magnitude component made nonnegative
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        right.set_column(col, &v);
    }
    let sketch = x.mul_dense(&right);
    Ok(SvdSketch {
        right_vectors: right,
        singular_values: sv,
        sketch,
    })
}

/// Fraction of the squared Frobenius norm carried by the sketch's singular
/// values.
pub fn energy_captured<X: LinearOperator>(sketch: &SvdSketch, x: &X) -> Result<f64> {
    if sketch.right_vectors.nrows() != x.shape().1 {
        return Err(Error::Dimension {
            expected: x.shape().1,
            got: sketch.right_vectors.nrows(),
        });
    }
    let total = x.frobenius_sq();
    if total == 0.0 {
        return Err(Error::Undefined("energy fraction of a zero matrix"));
    }
    let kept: f64 = sketch.singular_values.iter().map(|s| s * s).sum();
    Ok((kept / total).clamp(0.0, 1.0))
}
