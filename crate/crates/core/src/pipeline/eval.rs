use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forest::{fit_forest, Forest, ForestParams};
use crate::metrics::{log_loss, macro_micro_ndcg, roc_auc, MetricReport, SummaryStats, UserScores};
use crate::seed;

/// Forests paired with the item codes they read; predictions average over
/// every tree of every member.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub members: Vec<(DMatrix<f64>, Forest)>,
}

/// Mean code of the listed items; zero for an empty list.
pub fn profile(codes: &DMatrix<f64>, items: &[u32]) -> Vec<f64> {
    let mut p = vec![0.0; codes.ncols()];
    for &i in items {
        for (c, v) in p.iter_mut().enumerate() {
            *v += codes[(i as usize, c)];
        }
    }
    if !items.is_empty() {
        p.iter_mut().for_each(|v| *v /= items.len() as f64);
    }
    p
}

/// Elementwise product of a user profile and an item code.
pub fn pair_feature(profile: &[f64], codes: &DMatrix<f64>, item: u32) -> Vec<f64> {
    profile
        .iter()
        .enumerate()
        .map(|(c, p)| p * codes[(item as usize, c)])
        .collect()
}

/// `count` distinct items from `0..n_items` avoiding the sorted `exclude`
/// lists; fewer when not enough remain.
fn sample_unseen(n_items: usize, exclude: &[&[u32]], count: usize, rng: &mut seed::Rng) -> Vec<u32> {
    let blocked = |i: u32| exclude.iter().any(|e| e.binary_search(&i).is_ok());
    let free = n_items - exclude.iter().map(|e| e.len()).sum::<usize>().min(n_items);
    if count >= free / 2 {
        let mut all: Vec<u32> = (0..n_items as u32).filter(|&i| !blocked(i)).collect();
        if count < all.len() {
            let keep = sample_indices(rng, all.len(), count).into_vec();
            let mut picked: Vec<u32> = keep.into_iter().map(|k| all[k]).collect();
            picked.sort_unstable();
            all = picked;
        }
        return all;
    }
    let mut out = std::collections::BTreeSet::new();
    while out.len() < count {
        let i = rng.random_range(0..n_items as u32);
        if !blocked(i) {
            out.insert(i);
        }
    }
    out.into_iter().collect()
}

/// Train positives plus per-user sampled negatives.
pub fn training_rows(
    codes: &DMatrix<f64>,
    train: &[&[u32]],
    avoid: &[&[u32]],
    negative_ratio: usize,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<bool>) {
    let n_items = codes.nrows();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (u, items) in train.iter().enumerate() {
        if items.is_empty() {
            continue;
        }
        let p = profile(codes, items);
        let mut rng = seed::child_rng(seed, &[seed::stage::NEGATIVES, u as u64]);
        let neg = sample_unseen(n_items, &[items, avoid[u]], negative_ratio * items.len(), &mut rng);
        for &i in items.iter() {
            rows.push(pair_feature(&p, codes, i));
            labels.push(true);
        }
        for i in neg {
            rows.push(pair_feature(&p, codes, i));
            labels.push(false);
        }
    }
    (rows, labels)
}

pub fn fit_ensemble(
    member_codes: Vec<DMatrix<f64>>,
    train: &[&[u32]],
    avoid: &[&[u32]],
    params: ForestParams,
    negative_ratio: usize,
    seed: u64,
) -> Result<Ensemble> {
    let m = member_codes.len();
    if m == 0 || params.trees < m {
        return Err(Error::param("ensemble needs at least one tree per member"));
    }
    let mut members = Vec::with_capacity(m);
    for (k, codes) in member_codes.into_iter().enumerate() {
        let trees = params.trees / m + usize::from(k < params.trees % m);
        let (rows, labels) = training_rows(&codes, train, avoid, negative_ratio, seed);
        if rows.is_empty() {
            return Err(Error::param("no training interactions"));
        }
        let forest = fit_forest(
            &rows,
            &labels,
            ForestParams { trees, ..params },
            seed::derive(seed, &[seed::stage::FOREST, k as u64]),
        )?;
        members.push((codes, forest));
    }
    Ok(Ensemble { members })
}

impl Ensemble {
    pub fn n_trees(&self) -> usize {
        self.members.iter().map(|(_, f)| f.len()).sum()
    }

    /// Mean tree output for `item` given per-member user profiles.
    pub fn score(&self, profiles: &[Vec<f64>], item: u32) -> f64 {
        let mut sum = 0.0;
        for ((codes, forest), p) in self.members.iter().zip(profiles) {
            let x = pair_feature(p, codes, item);
            sum += forest.predict_proba(&x).unwrap_or(0.0) * forest.len() as f64;
        }
        sum / self.n_trees() as f64
    }

    pub fn profiles(&self, items: &[u32]) -> Vec<Vec<f64>> {
        self.members.iter().map(|(c, _)| profile(c, items)).collect()
    }
}

/// Ranking and classification metrics against one held-out partition.
///
/// Profiles use `known[u]`; candidates exclude `known[u]`; `relevant[u]`
/// are the positives.
pub fn evaluate(
    model: &Ensemble,
    known: &[Vec<u32>],
    relevant: &[&[u32]],
    n_items: usize,
    cutoff: usize,
    eval_negatives: usize,
    negative_ratio: usize,
    seed: u64,
) -> Result<MetricReport> {
    let per_user: Vec<Option<(UserScores, Vec<(f64, bool)>)>> = (0..relevant.len())
        .into_par_iter()
        .map(|u| {
            let rel = relevant[u];
            if rel.is_empty() {
                return None;
            }
            let seen = &known[u];
            let prof = model.profiles(seen);
            let mut rng = seed::child_rng(seed, &[seed::stage::EVAL, u as u64]);
            let pool: Vec<u32> = if eval_negatives == 0 {
                (0..n_items as u32).filter(|i| seen.binary_search(i).is_err()).collect()
            } else {
                let mut p = sample_unseen(n_items, &[seen, rel], eval_negatives, &mut rng);
                p.extend_from_slice(rel);
                p.sort_unstable();
                p
            };
            let scored: Vec<(u32, f64, bool)> = pool
                .iter()
                .map(|&i| (i, model.score(&prof, i), rel.binary_search(&i).is_ok()))
                .collect();
            let mut cls: Vec<(f64, bool)> = rel.iter().map(|&i| (model.score(&prof, i), true)).collect();
            let negs = sample_unseen(n_items, &[seen, rel], negative_ratio * rel.len(), &mut rng);
            cls.extend(negs.into_iter().map(|i| (model.score(&prof, i), false)));
            Some((UserScores { user: u as u32, scored }, cls))
        })
        .collect();
    let mut users = Vec::new();
    let mut probs = Vec::new();
    let mut labels = Vec::new();
    for (us, cls) in per_user.into_iter().flatten() {
        users.push(us);
        for (p, l) in cls {
            probs.push(p);
            labels.push(l);
        }
    }
    if users.is_empty() {
        return Err(Error::Undefined("no user has held-out interactions"));
    }
    let (macro_ndcg, micro) = macro_micro_ndcg(&users, cutoff);
    Ok(MetricReport {
        macro_ndcg_at_10: macro_ndcg,
        micro_ndcg_at_10: micro,
        roc_auc: roc_auc(&probs, &labels)?,
        log_loss: log_loss(&probs, &labels)?,
        wall_clock_seconds: Default::default(),
    })
}

/// Mean and standard error over repeats.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let s = SummaryStats::of(values);
    let n = values.len() as f64;
    let se = if values.len() > 1 {
        s.std * (n / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    (s.mean, se)
}
