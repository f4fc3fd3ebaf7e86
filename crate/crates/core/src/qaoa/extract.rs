use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::qubo::{Bitstring, QuboProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub mask: Bitstring,
    pub energy: f64,
    /// True when no sample had the requested weight.
    pub fallback: bool,
}

/// The `k` largest weights, ties to the lower index.
pub fn top_k_mask(weights: &[f64], k: usize) -> Bitstring {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Bitstring::from_indices(weights.len(), &idx)
}

/// Lowest-energy sample with exactly `k` ones; ties go to the most frequent,
/// then the lexicographically smallest. Without any such sample, the top-`k`
/// weights.
pub fn extract_mask(samples: &[Bitstring], problem: &QuboProblem, weights: &[f64], k: usize) -> Result<Extraction> {
    let n = problem.n();
    if weights.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: weights.len(),
        });
    }
    if k > n {
        return Err(Error::param(format!("budget {k} exceeds {n} candidates")));
    }
    let mut counts: BTreeMap<Bitstring, usize> = BTreeMap::new();
    for s in samples.iter().filter(|s| s.len() == n && s.count_ones() == k) {
        *counts.entry(*s).or_default() += 1;
    }
    let mut best: Option<(Bitstring, f64, usize)> = None;
    for (z, c) in counts {
        let e = problem.energy(&z)?;
        let better = match &best {
            None => true,
            Some((_, be, bc)) => e < *be || (e == *be && c > *bc),
        };
        if better {
            best = Some((z, e, c));
        }
    }
    Ok(match best {
        Some((mask, energy, _)) => Extraction {
            mask,
            energy,
            fallback: false,
        },
        None => {
            let mask = top_k_mask(weights, k);
            Extraction {
                energy: problem.energy(&mask)?,
                mask,
                fallback: true,
            }
        }
    })
}
