//! Sparse dictionaries: per-cluster learning, concatenation into the global
//! pool, and Lasso encoding of arbitrary rows.

mod lasso;
mod learn;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub use lasso::{correlations, kkt_violation, lasso_lars, objective};
pub use learn::{alternation_step, learn_subdictionary, DictParams, SubDictionary};

/// Column-stacked unit-norm atoms with the cluster each came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    /// `dim x n_atoms`
    pub atoms: DMatrix<f64>,
    /// `(cluster, local index)` per column.
    pub provenance: Vec<(usize, usize)>,
}

impl Dictionary {
    pub fn new(atoms: DMatrix<f64>, provenance: Vec<(usize, usize)>) -> Result<Self> {
        if provenance.len() != atoms.ncols() {
            return Err(Error::Dimension {
                expected: atoms.ncols(),
                got: provenance.len(),
            });
        }
        Ok(Self { atoms, provenance })
    }

    /// Single-cluster dictionary with sequential provenance.
    pub fn from_atoms(atoms: DMatrix<f64>, cluster: usize) -> Self {
        let provenance = (0..atoms.ncols()).map(|j| (cluster, j)).collect();
        Self { atoms, provenance }
    }

    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }

    /// Keep only the listed columns, in the given order.
    pub fn select(&self, columns: &[usize]) -> Self {
        Self {
            atoms: self.atoms.select_columns(columns),
            provenance: columns.iter().map(|&c| self.provenance[c]).collect(),
        }
    }

    /// Map every atom through `basis` (e.g. sketch space to tag space).
    pub fn lift(&self, basis: &DMatrix<f64>) -> Result<Self> {
        if basis.ncols() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: basis.ncols(),
            });
        }
        Ok(Self {
            atoms: basis * &self.atoms,
            provenance: self.provenance.clone(),
        })
    }

    pub fn max_norm_deviation(&self) -> f64 {
        self.atoms
            .column_iter()
            .map(|c| (c.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// COO text with header `#rows=<M> atoms=<A>`, then one
    /// `atom<TAB>cluster<TAB>local` provenance line per atom prefixed by `@`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "#rows={} atoms={}", self.dim(), self.n_atoms()).unwrap();
        for j in 0..self.n_atoms() {
            for r in 0..self.dim() {
                let v = self.atoms[(r, j)];
                if v != 0.0 {
                    writeln!(out, "{r}\t{j}\t{v:e}").unwrap();
                }
            }
        }
        for (j, &(c, l)) in self.provenance.iter().enumerate() {
            writeln!(out, "@{j}\t{c}\t{l}").unwrap();
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Empty(path.to_path_buf()))?;
        let dims: Vec<usize> = header
            .trim_start_matches('#')
            .split_whitespace()
            .filter_map(|t| t.split_once('=').and_then(|(_, v)| v.parse().ok()))
            .collect();
        let [rows, n_atoms] = dims[..] else {
            return Err(Error::parse(path, 1, "expected `#rows=<M> atoms=<A>`"));
        };
        let mut atoms = DMatrix::zeros(rows, n_atoms);
        let mut provenance = vec![(0, 0); n_atoms];
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::parse(path, lineno + 1, "malformed dictionary line");
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad());
            }
            if let Some(j) = f[0].strip_prefix('@') {
                let j: usize = j.parse().map_err(|_| bad())?;
                let c: usize = f[1].parse().map_err(|_| bad())?;
                let l: usize = f[2].parse().map_err(|_| bad())?;
                *provenance.get_mut(j).ok_or_else(bad)? = (c, l);
            } else {
                let r: usize = f[0].parse().map_err(|_| bad())?;
                let j: usize = f[1].parse().map_err(|_| bad())?;
                let v: f64 = f[2].parse().map_err(|_| bad())?;
                if r >= rows || j >= n_atoms {
                    return Err(bad());
                }
                atoms[(r, j)] = v;
            }
        }
        Ok(Self { atoms, provenance })
    }
}

/// Stack sub-dictionaries column-wise in the given order.
pub fn concat_dictionary(parts: &[Dictionary]) -> Result<Dictionary> {
    let Some(first) = parts.first() else {
        return Err(Error::param("cannot concatenate zero dictionaries"));
    };
    let dim = first.dim();
    let total: usize = parts.iter().map(Dictionary::n_atoms).sum();
    let mut atoms = DMatrix::zeros(dim, total);
    let mut provenance = Vec::with_capacity(total);
    let mut col = 0;
    for p in parts {
        if p.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: p.dim(),
            });
        }
        atoms.columns_mut(col, p.n_atoms()).copy_from(&p.atoms);
        provenance.extend_from_slice(&p.provenance);
        col += p.n_atoms();
    }
    Ok(Dictionary { atoms, provenance })
}

/// Row-wise sparse coefficients, `(atom, value)` pairs sorted by atom.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCodes {
    pub n_atoms: usize,
    pub rows: Vec<Vec<(u32, f64)>>,
}

impl SparseCodes {
    pub fn from_dense_rows(n_atoms: usize, dense: impl IntoIterator<Item = Vec<f64>>) -> Self {
        let rows = dense
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .enumerate()
                    .filter(|&(_, v)| v != 0.0)
                    .map(|(j, v)| (j as u32, v))
                    .collect()
            })
            .collect();
        Self { n_atoms, rows }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn density(&self) -> f64 {
        if self.rows.is_empty() || self.n_atoms == 0 {
            return 0.0;
        }
        let nnz: usize = self.rows.iter().map(Vec::len).sum();
        nnz as f64 / (self.rows.len() * self.n_atoms) as f64
    }

    pub fn dense_row(&self, r: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_atoms];
        for &(j, v) in &self.rows[r] {
            out[j as usize] = v;
        }
        out
    }

    /// `n_rows x n_atoms`
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows.len(), self.n_atoms);
        for (r, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                out[(r, j as usize)] = v;
            }
        }
        out
    }
}

/// Lasso-encode each row of `rows` (`n x dim`) against `dict`.
pub fn encode(rows: &DMatrix<f64>, dict: &Dictionary, lambda: f64) -> Result<SparseCodes> {
    if rows.ncols() != dict.dim() {
        return Err(Error::Dimension {
            expected: dict.dim(),
            got: rows.ncols(),
        });
    }
    let coded: Vec<Vec<f64>> = (0..rows.nrows())
        .into_par_iter()
        .map(|r| {
            let x: Vec<f64> = rows.row(r).iter().copied().collect();
            lasso_lars(&dict.atoms, &x, lambda)
        })
        .collect();
    Ok(SparseCodes::from_dense_rows(dict.n_atoms(), coded))
}

/// Mean over all entries of `(rows − codes·atomsᵀ)²`.
pub fn reconstruction_mse(rows: &DMatrix<f64>, dict: &Dictionary, codes: &SparseCodes) -> Result<f64> {
    if rows.ncols() != dict.dim() {
        return Err(Error::Dimension {
            expected: dict.dim(),
            got: rows.ncols(),
        });
    }
    if codes.n_rows() != rows.nrows() || codes.n_atoms != dict.n_atoms() {
        return Err(Error::Dimension {
            expected: rows.nrows(),
            got: codes.n_rows(),
        });
    }
    if rows.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (r, code) in codes.rows.iter().enumerate() {
        let mut resid: Vec<f64> = rows.row(r).iter().copied().collect();
        for &(j, v) in code {
            for (x, &a) in resid.iter_mut().zip(dict.atoms.column(j as usize).iter()) {
                *x -= v * a;
            }
        }
        total += resid.iter().map(|v| v * v).sum::<f64>();
    }
    Ok(total / rows.len() as f64)
}

/// `factor · mean_i ‖Dᵀx_i‖_∞` over up to `warmup` evenly spaced rows.
pub fn auto_lambda(rows: &DMatrix<f64>, dict: &Dictionary, factor: f64, warmup: usize) -> f64 {
    let n = rows.nrows();
    if n == 0 || dict.n_atoms() == 0 {
        return 0.0;
    }
    let take = warmup.clamp(1, n);
    let total: f64 = (0..take)
        .map(|i| {
            let r = i * n / take;
            let x = rows.row(r);
            dict.atoms
                .column_iter()
                .map(|a| a.dot(&x.transpose()).abs())
                .fold(0.0, f64::max)
        })
        .sum();
    factor * total / take as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(cols: &[&[f64]]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(cols[0].len(), cols.len());
        for (j, c) in cols.iter().enumerate() {
            let n: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (r, v) in c.iter().enumerate() {
                m[(r, j)] = v / n;
            }
        }
        m
    }

    #[test]
    fn concat_sizes_and_provenance() {
        let parts: Vec<Dictionary> = (0..50)
            .map(|c| Dictionary::from_atoms(DMatrix::from_element(4, 20, 0.5), c))
            .collect();
        let d = concat_dictionary(&parts).unwrap();
        assert_eq!(d.n_atoms(), 1000);
        assert_eq!(d.provenance[37], (1, 17));
        let one = concat_dictionary(&parts[..1]).unwrap();
        assert_eq!(one, parts[0]);
    }

    #[test]
    fn concat_rejects_mismatched_dims() {
        let a = Dictionary::from_atoms(DMatrix::zeros(3, 2), 0);
        let b = Dictionary::from_atoms(DMatrix::zeros(4, 2), 1);
        assert!(concat_dictionary(&[a, b]).is_err());
    }

    #[test]
    fn mse_perfect_and_zero_codes() {
        let d = Dictionary::from_atoms(unit(&[&[1.0, 0.0], &[0.0, 1.0]]), 0);
        let rows = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 0.0]);
        let perfect = SparseCodes::from_dense_rows(2, vec![vec![1.0, 2.0], vec![-3.0, 0.0]]);
        assert_eq!(reconstruction_mse(&rows, &d, &perfect).unwrap(), 0.0);
        let zero = SparseCodes::from_dense_rows(2, vec![vec![0.0; 2]; 2]);
        assert_eq!(reconstruction_mse(&rows, &d, &zero).unwrap(), 14.0 / 4.0);
    }

    #[test]
    fn zero_row_encodes_to_zero() {
        let d = Dictionary::from_atoms(unit(&[&[1.0, 1.0], &[0.0, 1.0]]), 0);
        let rows = DMatrix::zeros(1, 2);
        let codes = encode(&rows, &d, 0.1).unwrap();
        assert!(codes.rows[0].is_empty());
    }

    #[test]
    fn dictionary_file_roundtrip() {
        let d = Dictionary::new(
            DMatrix::from_row_slice(2, 2, &[0.6, 0.0, 0.8, -1.0]),
            vec![(3, 1), (4, 0)],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.tsv");
        d.write(&p).unwrap();
        assert_eq!(Dictionary::read(&p).unwrap(), d);
    }
}
