use log::info;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::{auto_lambda, encode, reconstruction_mse, Dictionary, SparseCodes};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DictParams {
    pub atoms: usize,
    /// `None` picks `0.1 · mean ‖Dᵀx‖_∞` on a warm-up batch.
    pub lambda: Option<f64>,
    pub epochs: usize,
    pub batch: usize,
}

impl Default for DictParams {
    fn default() -> Self {
        Self {
            atoms: 20,
            lambda: None,
            epochs: 10,
            batch: 2048,
        }
    }
}

pub const AUTO_LAMBDA_FACTOR: f64 = 0.1;
pub const WARMUP_ROWS: usize = 256;

#[derive(Debug, Clone)]
pub struct SubDictionary {
    pub dictionary: Dictionary,
    pub codes: SparseCodes,
    pub lambda: f64,
    pub mse: f64,
    /// Best held-out objective after initialisation and after each epoch.
    pub objective_trace: Vec<f64>,
}

fn mean_objective(rows: &DMatrix<f64>, dict: &Dictionary, lambda: f64) -> f64 {
    if rows.nrows() == 0 {
        return 0.0;
    }
    let codes = encode(rows, dict, lambda).expect("shapes checked by caller");
    let mse = reconstruction_mse(rows, dict, &codes).expect("shapes checked by caller");
    let l1: f64 = codes.rows.iter().flatten().map(|(_, v)| v.abs()).sum();
    (0.5 * mse * rows.len() as f64 + lambda * l1) / rows.nrows() as f64
}

/// Refit atoms one at a time against the current residual. Each atom becomes
/// the normalised least-squares fit of its residual; its codes absorb the
/// norm. Returns the columns that no row used.
fn update_atoms(rows: &DMatrix<f64>, atoms: &mut DMatrix<f64>, codes: &mut DMatrix<f64>) -> Vec<usize> {
    // residual, n x dim
    let mut resid = rows - &*codes * atoms.transpose();
    let mut unused = Vec::new();
    for j in 0..atoms.ncols() {
        let theta: DVector<f64> = codes.column(j).into_owned();
        let tt = theta.norm_squared();
        if tt == 0.0 {
            unused.push(j);
            continue;
        }
        let old = atoms.column(j).into_owned();
        resid += &theta * old.transpose();
        let fit = resid.tr_mul(&theta) / tt;
        let norm = fit.norm();
        if norm <= f64::EPSILON {
            // residual orthogonal to the codes: leave the atom, drop its use
            resid -= &theta * old.transpose();
            continue;
        }
        let atom = fit / norm;
        let theta = theta * norm;
        resid -= &theta * atom.transpose();
        atoms.set_column(j, &atom);
        codes.set_column(j, &theta);
    }
    unused
}

/// One coding pass followed by one sweep of atom updates, without any
/// replacement of unused atoms.
pub fn alternation_step(rows: &DMatrix<f64>, dict: &Dictionary, lambda: f64) -> Result<(Dictionary, DMatrix<f64>)> {
    let mut codes = encode(rows, dict, lambda)?.to_dense();
    let mut atoms = dict.atoms.clone();
    update_atoms(rows, &mut atoms, &mut codes);
    Ok((
        Dictionary {
            atoms,
            provenance: dict.provenance.clone(),
        },
        codes,
    ))
}

fn random_unit(dim: usize, rng: &mut seed::Rng) -> DVector<f64> {
    loop {
        let v = DVector::<f64>::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 0.0 {
            return v / n;
        }
    }
}

/// Learn up to `params.atoms` unit-norm atoms for the rows of one cluster by
/// alternating Lasso coding and per-atom residual fits. The dictionary kept
/// after each epoch is the best seen on a fixed evaluation batch.
pub fn learn_subdictionary(
    rows: &DMatrix<f64>,
    params: DictParams,
    cluster: usize,
    seed: u64,
) -> Result<SubDictionary> {
    let n = rows.nrows();
    let dim = rows.ncols();
    if n == 0 || dim == 0 {
        return Err(Error::param(format!("cluster {cluster} has no data")));
    }
    if params.atoms == 0 || params.batch == 0 {
        return Err(Error::param("atom count and batch size must be positive"));
    }
    let n_atoms = params.atoms.min(n);
    if n_atoms < params.atoms {
        info!(
            "cluster {cluster}: only {n} rows, learning {n_atoms} of {} atoms",
            params.atoms
        );
    }
    let mut rng = seed::child_rng(seed, &[seed::stage::DICT, cluster as u64]);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut atoms = DMatrix::zeros(dim, n_atoms);
    for j in 0..n_atoms {
        let r = rows.row(order[j]).transpose();
        let norm = r.norm();
        let col = if norm > 0.0 {
            r / norm
        } else {
            random_unit(dim, &mut rng)
        };
        atoms.set_column(j, &col);
    }
    let mut dict = Dictionary::from_atoms(atoms, cluster);
    let lambda = params
        .lambda
        .unwrap_or_else(|| auto_lambda(rows, &dict, AUTO_LAMBDA_FACTOR, WARMUP_ROWS));

    order.shuffle(&mut rng);
    let eval_rows: Vec<usize> = order.iter().take(params.batch.min(n)).copied().collect();
    let eval = rows.select_rows(&eval_rows);
    let mut best = (dict.atoms.clone(), mean_objective(&eval, &dict, lambda));
    let mut trace = vec![best.1];

    let batch = params.batch.min(n);
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut used = vec![false; n_atoms];
        let mut worst: Vec<(f64, usize)> = Vec::with_capacity(n);
        for chunk in order.chunks(batch) {
            let xb = rows.select_rows(chunk);
            let mut codes = encode(&xb, &dict, lambda)?.to_dense();
            let unused = update_atoms(&xb, &mut dict.atoms, &mut codes);
            for (j, u) in used.iter_mut().enumerate() {
                if !unused.contains(&j) {
                    *u = true;
                }
            }
            let resid = &xb - &codes * dict.atoms.transpose();
            for (k, &row) in chunk.iter().enumerate() {
                worst.push((resid.row(k).norm_squared(), row));
            }
        }
        worst.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut donors = worst.iter().filter(|w| w.0 > 0.0);
        for j in (0..n_atoms).filter(|&j| !used[j]) {
            let Some(&(_, row)) = donors.next() else { break };
            let r = rows.row(row).transpose();
            dict.atoms.set_column(j, &(&r / r.norm()));
        }

        let obj = mean_objective(&eval, &dict, lambda);
        if obj < best.1 {
            best = (dict.atoms.clone(), obj);
        } else {
            dict.atoms.copy_from(&best.0);
        }
        trace.push(best.1);
    }

    let codes = encode(rows, &dict, lambda)?;
    let mse = reconstruction_mse(rows, &dict, &codes)?;
    Ok(SubDictionary {
        dictionary: dict,
        codes,
        lambda,
        mse,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit_on_orthonormal_rows() {
        let rows = DMatrix::<f64>::identity(6, 6);
        let params = DictParams {
            atoms: 6,
            lambda: Some(1e-9),
            epochs: 3,
            batch: 16,
        };
        let sub = learn_subdictionary(&rows, params, 0, 1).unwrap();
        assert!(sub.mse < 1e-10, "mse {}", sub.mse);
        assert!(sub.dictionary.max_norm_deviation() < 1e-8);
    }

    #[test]
    fn small_cluster_learns_fewer_atoms() {
        let rows = DMatrix::from_fn(3, 5, |r, c| (r + c) as f64 + 1.0);
        let sub = learn_subdictionary(&rows, DictParams::default(), 2, 1).unwrap();
        assert_eq!(sub.dictionary.n_atoms(), 3);
        assert!(sub.dictionary.provenance.iter().all(|&(c, _)| c == 2));
    }

    #[test]
    fn objective_trace_is_nonincreasing() {
        let rows = DMatrix::from_fn(60, 8, |r, c| (((r * 13 + c * 7) % 11) as f64 - 5.0) / 5.0);
        let params = DictParams {
            atoms: 6,
            lambda: None,
            epochs: 6,
            batch: 25,
        };
        let sub = learn_subdictionary(&rows, params, 0, 3).unwrap();
        for w in sub.objective_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(sub.dictionary.max_norm_deviation() < 1e-8);
    }
}
