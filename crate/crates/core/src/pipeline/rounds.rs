use nalgebra::DMatrix;
use rayon::prelude::*;

use super::PipelineConfig;
use crate::corpus::LearningView;
use crate::dict::{alternation_step, Dictionary, SparseCodes};
use crate::error::{Error, Result, StageExt};
use crate::importance::{delta_ndcg_weights, select_candidates, ImportanceParams};
use crate::qaoa::{self, top_k_mask, QaoaConfig, SpsaGains};
use crate::qubo::{build_qubo_form, Bitstring};
use crate::seed;

/// Atom pool, item codes and sketch rows shared by every round.
#[derive(Debug, Clone, Copy)]
pub struct SelectionInput<'a> {
    pub dictionary: &'a Dictionary,
    pub codes: &'a SparseCodes,
    /// Item rows in the space the atoms live in.
    pub rows: &'a DMatrix<f64>,
    pub view: LearningView<'a>,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub round: usize,
    /// Weight of every pool atom this round.
    pub weights: Vec<f64>,
    pub candidates: Vec<usize>,
    /// Over the candidate list.
    pub mask: Bitstring,
    /// Pool indices of the chosen atoms, in candidate order.
    pub selected: Vec<usize>,
    pub fallback: bool,
    pub trace: Vec<f64>,
    /// Fine-tuned versions of `selected`, one column each.
    pub tuned_atoms: DMatrix<f64>,
}

pub(crate) fn qaoa_config(cfg: &PipelineConfig) -> QaoaConfig {
    QaoaConfig {
        depth: cfg.qaoa_depth,
        shots: cfg.qaoa_shots,
        iterations: cfg.qaoa_iters,
        final_shots: cfg.qaoa_final_shots,
        pool_samples: cfg.qaoa_pool_samples,
        gains: SpsaGains::default(),
    }
}

/// Weights → candidates → QUBO → QAOA → mask → fine-tune, for round `r`.
pub fn run_bootstrap_round(
    r: usize,
    cfg: &PipelineConfig,
    input: SelectionInput<'_>,
    seed: u64,
) -> Result<RoundOutcome> {
    let round_seed = seed::derive(seed, &[seed::stage::ROUND, r as u64]);
    let params = ImportanceParams {
        bootstrap_fraction: cfg.bootstrap_fraction,
        k_cutoff: cfg.ndcg_cutoff,
    };
    let aw = delta_ndcg_weights(input.codes, input.view, params, seed::derive(round_seed, &[0])).stage("importance")?;
    let mut candidates = select_candidates(&aw.weights, cfg.k_top).stage("importance")?.atoms;
    candidates.truncate(cfg.qaoa_qubits);
    let cw: Vec<f64> = candidates.iter().map(|&j| aw.weights[j]).collect();
    let k = cfg.budget;

    let (mask, fallback, trace) = if cw.iter().all(|&w| w == cw[0]) {
        (top_k_mask(&cw, k), true, Vec::new())
    } else {
        let q = build_qubo_form(&cw, k, cfg.penalty, cfg.qubo_form).stage("qubo")?;
        let out = qaoa::solve(&q, &cw, k, &qaoa_config(cfg), seed::derive(round_seed, &[1])).stage("qaoa")?;
        (out.mask, out.fallback, out.trace)
    };
    let selected: Vec<usize> = mask.ones().into_iter().map(|c| candidates[c]).collect();

    let sub = input.dictionary.select(&selected);
    let mut items: Vec<u32> = aw
        .bootstrap_users
        .iter()
        .flat_map(|&u| input.view.train.items(u).iter().copied())
        .collect();
    items.sort_unstable();
    items.dedup();
    let tuned_atoms = if items.is_empty() {
        sub.atoms
    } else {
        let idx: Vec<usize> = items.iter().map(|&i| i as usize).collect();
        let rows = input.rows.select_rows(&idx);
        alternation_step(&rows, &sub, input.lambda).stage("fine-tune")?.0.atoms
    };
    Ok(RoundOutcome {
        round: r,
        weights: aw.weights,
        candidates,
        mask,
        selected,
        fallback,
        trace,
        tuned_atoms,
    })
}

/// The `k` atoms chosen most often; ties by mean weight, then index.
pub fn aggregate_selections(selections: &[Vec<usize>], weights: &[Vec<f64>], k: usize) -> Result<Vec<usize>> {
    if selections.is_empty() || selections.len() != weights.len() {
        return Err(Error::param("need one weight vector per selection"));
    }
    let pool = weights[0].len();
    if weights.iter().any(|w| w.len() != pool) || k > pool {
        return Err(Error::param("weight vectors disagree or budget exceeds pool"));
    }
    let mut freq = vec![0usize; pool];
    for s in selections {
        for &j in s {
            if j >= pool {
                return Err(Error::param("selected atom outside the pool"));
            }
            freq[j] += 1;
        }
    }
    let r = weights.len() as f64;
    let mean: Vec<f64> = (0..pool)
        .map(|j| weights.iter().map(|w| w[j]).sum::<f64>() / r)
        .collect();
    let mut order: Vec<usize> = (0..pool).collect();
    order.sort_by(|&a, &b| freq[b].cmp(&freq[a]).then(mean[b].total_cmp(&mean[a])).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order)
}

/// Result of all rounds plus aggregation.
#[derive(Debug, Clone)]
pub struct Selection {
    pub rounds: Vec<RoundOutcome>,
    pub final_atoms: Vec<usize>,
    /// Unit-norm columns, one per final atom.
    pub dictionary: Dictionary,
}

/// Rounds run concurrently; results are gathered in round order.
pub fn run_selection(cfg: &PipelineConfig, input: SelectionInput<'_>, seed: u64) -> Result<Selection> {
    let rounds: Vec<RoundOutcome> = (0..cfg.rounds)
        .into_par_iter()
        .map(|r| run_bootstrap_round(r, cfg, input, seed))
        .collect::<Result<_>>()?;
    let sel: Vec<Vec<usize>> = rounds.iter().map(|o| o.selected.clone()).collect();
    let w: Vec<Vec<f64>> = rounds.iter().map(|o| o.weights.clone()).collect();
    let final_atoms = aggregate_selections(&sel, &w, cfg.budget).stage("aggregate")?;

    let base = input.dictionary.select(&final_atoms);
    let mut atoms = base.atoms.clone();
    for (c, &j) in final_atoms.iter().enumerate() {
        let mut sum = nalgebra::DVector::zeros(atoms.nrows());
        let mut hits = 0;
        for o in &rounds {
            if let Some(p) = o.selected.iter().position(|&s| s == j) {
                sum += o.tuned_atoms.column(p);
                hits += 1;
            }
        }
        let norm = sum.norm();
        if hits > 0 && norm > 0.0 {
            atoms.set_column(c, &(sum / norm));
        }
    }
    Ok(Selection {
        rounds,
        final_atoms,
        dictionary: Dictionary::new(atoms, base.provenance)?,
    })
}
