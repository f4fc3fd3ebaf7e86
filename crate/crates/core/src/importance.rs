//! Performance-driven atom weights: the mean drop in a user's nDCG when one
//! atom is zeroed, over a bootstrap of training users.

use std::cmp::Ordering;

use rand::Rng as _;
use rayon::prelude::*;

use crate::corpus::LearningView;
use crate::dict::SparseCodes;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct AtomWeights {
    pub weights: Vec<f64>,
    pub bootstrap_fraction: f64,
    /// Sampled users, with repetition, in draw order.
    pub bootstrap_users: Vec<usize>,
    /// Draws that had validation relevance and entered the average.
    pub evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub atoms: Vec<usize>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Dot product of a dense user profile with a sparse item code, with the
/// `mask` coordinate zeroed in both.
pub fn base_score(profile: &[f64], item_code: &[(u32, f64)], mask: Option<usize>) -> f64 {
    item_code
        .iter()
        .filter(|&&(j, _)| Some(j as usize) != mask)
        .map(|&(j, v)| profile[j as usize] * v)
        .sum()
}

/// Sum of the codes of `items`.
pub fn user_profile(codes: &SparseCodes, items: &[u32]) -> Vec<f64> {
    let mut p = vec![0.0; codes.n_atoms];
    for &i in items {
        for &(j, v) in &codes.rows[i as usize] {
            p[j as usize] += v;
        }
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportanceParams {
    pub bootstrap_fraction: f64,
    pub k_cutoff: usize,
}

impl Default for ImportanceParams {
    fn default() -> Self {
        Self {
            bootstrap_fraction: 0.2,
            k_cutoff: 10,
        }
    }
}

fn by_score(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

fn ndcg_top(top: &[(f64, u32)], relevant: &[u32], idcg: f64) -> f64 {
    top.iter()
        .enumerate()
        .filter(|(_, &(_, i))| relevant.binary_search(&i).is_ok())
        .map(|(p, _)| 1.0 / ((p + 2) as f64).log2())
        .sum::<f64>()
        / idcg
}

/// Per-atom nDCG drops for one user. `relevant` must be sorted.
fn user_deltas(
    codes: &SparseCodes,
    inverted: &[Vec<(u32, f64)>],
    train: &[u32],
    relevant: &[u32],
    k: usize,
) -> Vec<f64> {
    let n_atoms = codes.n_atoms;
    let profile = user_profile(codes, train);
    let mut excluded = vec![false; codes.n_rows()];
    for &i in train {
        excluded[i as usize] = true;
    }
    let mut sorted: Vec<(f64, u32)> = (0..codes.n_rows() as u32)
        .filter(|&i| !excluded[i as usize])
        .map(|i| (base_score(&profile, &codes.rows[i as usize], None), i))
        .collect();
    sorted.sort_by(by_score);
    let idcg: f64 = (0..relevant.len().min(k)).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
    let full = ndcg_top(&sorted[..k.min(sorted.len())], relevant, idcg);

    let mut deltas = vec![0.0; n_atoms];
    let mut affected = vec![false; codes.n_rows()];
    let mut pool: Vec<(f64, u32)> = Vec::new();
    for j in 0..n_atoms {
        let pj = profile[j];
        if pj == 0.0 {
            continue;
        }
        pool.clear();
        for &(i, v) in &inverted[j] {
            if !excluded[i as usize] {
                affected[i as usize] = true;
                let s = base_score(&profile, &codes.rows[i as usize], None) - pj * v;
                pool.push((s, i));
            }
        }
        if pool.is_empty() {
            continue;
        }
        let mut kept = 0;
        for &(s, i) in &sorted {
            if kept == k {
                break;
            }
            if !affected[i as usize] {
                pool.push((s, i));
                kept += 1;
            }
        }
        pool.sort_by(by_score);
        let ablated = ndcg_top(&pool[..k.min(pool.len())], relevant, idcg);
        deltas[j] = full - ablated;
        for &(i, _) in &inverted[j] {
            affected[i as usize] = false;
        }
    }
    deltas
}

/// Weights `w_j` = mean over bootstrap users of `nDCG@k(full) − nDCG@k(atom j
/// zeroed)`, scoring every non-train item by profile · code and judging
/// against validation relevance.
pub fn delta_ndcg_weights(
    codes: &SparseCodes,
    view: LearningView<'_>,
    params: ImportanceParams,
    seed: u64,
) -> Result<AtomWeights> {
    if codes.n_rows() != view.n_items {
        return Err(Error::Dimension {
            expected: view.n_items,
            got: codes.n_rows(),
        });
    }
    if !(params.bootstrap_fraction > 0.0 && params.bootstrap_fraction <= 1.0) {
        return Err(Error::param("bootstrap fraction must lie in (0, 1]"));
    }
    if params.k_cutoff == 0 {
        return Err(Error::param("nDCG cutoff must be at least 1"));
    }
    let eligible: Vec<usize> = view
        .train
        .iter()
        .filter(|(_, items)| !items.is_empty())
        .map(|(u, _)| u)
        .collect();
    let mut weights = vec![0.0; codes.n_atoms];
    if eligible.is_empty() {
        return Ok(AtomWeights {
            weights,
            bootstrap_fraction: params.bootstrap_fraction,
            bootstrap_users: Vec::new(),
            evaluated: 0,
        });
    }
    let draws = ((params.bootstrap_fraction * eligible.len() as f64).ceil() as usize).max(1);
    let mut rng = seed::rng(seed);
    let users: Vec<usize> = (0..draws)
        .map(|_| eligible[rng.random_range(0..eligible.len())])
        .collect();

    let mut inverted: Vec<Vec<(u32, f64)>> = vec![Vec::new(); codes.n_atoms];
    for (i, row) in codes.rows.iter().enumerate() {
        for &(j, v) in row {
            inverted[j as usize].push((i as u32, v));
        }
    }
    let per_user: Vec<Option<Vec<f64>>> = users
        .par_iter()
        .map(|&u| {
            let relevant = view.valid.items(u);
            if relevant.is_empty() {
                return None;
            }
            Some(user_deltas(
                codes,
                &inverted,
                view.train.items(u),
                relevant,
                params.k_cutoff,
            ))
        })
        .collect();
    let mut evaluated = 0usize;
    for d in per_user.iter().flatten() {
        evaluated += 1;
        for (w, x) in weights.iter_mut().zip(d) {
            *w += x;
        }
    }
    if evaluated > 0 {
        weights.iter_mut().for_each(|w| *w /= evaluated as f64);
    }
    Ok(AtomWeights {
        weights,
        bootstrap_fraction: params.bootstrap_fraction,
        bootstrap_users: users,
        evaluated,
    })
}

/// Indices of the `k_top` largest weights, ties to the lower index, in
/// descending weight order.
pub fn select_candidates(weights: &[f64], k_top: usize) -> Result<CandidateSet> {
    if k_top > weights.len() {
        return Err(Error::param(format!(
            "k_top {k_top} exceeds the {} available atoms",
            weights.len()
        )));
    }
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx.truncate(k_top);
    Ok(CandidateSet { atoms: idx })
}
