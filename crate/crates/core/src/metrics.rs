//! Ranking and click-prediction metrics.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Items in descending score order (ties by ascending item id) with binary
/// relevance.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub items: Vec<u32>,
    pub relevant: Vec<bool>,
}

fn score_order(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

impl RankedList {
    /// Rank `(item, score)` pairs; `is_relevant` labels each item.
    pub fn from_scores(mut scored: Vec<(u32, f64)>, is_relevant: impl Fn(u32) -> bool) -> Self {
        scored.sort_by(score_order);
        let relevant = scored.iter().map(|&(i, _)| is_relevant(i)).collect();
        Self {
            items: scored.into_iter().map(|(i, _)| i).collect(),
            relevant,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn n_relevant(&self) -> usize {
        self.relevant.iter().filter(|&&r| r).count()
    }
}

fn discount(pos: usize) -> f64 {
    // pos is 0-based
    1.0 / ((pos + 2) as f64).log2()
}

fn ndcg_from_flags(flags: impl Iterator<Item = bool>, n_relevant: usize, k: usize) -> f64 {
    if n_relevant == 0 {
        return 0.0;
    }
    let dcg: f64 = flags
        .take(k)
        .enumerate()
        .filter(|&(_, r)| r)
        .map(|(p, _)| discount(p))
        .fold(0.0, |a, d| a + d);
    let idcg: f64 = (0..n_relevant.min(k)).map(discount).sum();
    dcg / idcg
}

/// DCG@k / IDCG@k with unit gains and `1/log2(pos+1)` discounts.
pub fn ndcg_at_k(ranking: &RankedList, k: usize) -> f64 {
    assert!(k >= 1, "cutoff must be at least 1");
    if ranking.is_empty() {
        warn!("nDCG of an empty ranking");
        return 0.0;
    }
    ndcg_from_flags(ranking.relevant.iter().copied(), ranking.n_relevant(), k)
}

/// One user's scored candidates and relevance labels.
#[derive(Debug, Clone, PartialEq)]
pub struct UserScores {
    pub user: u32,
    /// `(item, score, relevant)`
    pub scored: Vec<(u32, f64, bool)>,
}

impl UserScores {
    pub fn ranking(&self) -> RankedList {
        let mut s: Vec<(u32, f64, bool)> = self.scored.clone();
        s.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        RankedList {
            items: s.iter().map(|x| x.0).collect(),
            relevant: s.iter().map(|x| x.2).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub users: usize,
}

impl SummaryStats {
    /// Population statistics; all zeros for an empty slice.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: 0.0,
                median: 0.0,
                std: 0.0,
                users: 0,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 0 {
            0.5 * (sorted[mid - 1] + sorted[mid])
        } else {
            sorted[mid]
        };
        Self {
            mean,
            median,
            std: var.sqrt(),
            users: values.len(),
        }
    }
}

/// Macro statistics over users with at least one relevant candidate, and
/// micro nDCG@k of the single pooled list of every `(user, item)` score.
pub fn macro_micro_ndcg(per_user: &[UserScores], k: usize) -> (SummaryStats, f64) {
    let per: Vec<f64> = per_user
        .iter()
        .filter(|u| u.scored.iter().any(|s| s.2))
        .map(|u| ndcg_at_k(&u.ranking(), k))
        .collect();
    let mut pooled: Vec<(f64, u32, u32, bool)> = per_user
        .iter()
        .flat_map(|u| u.scored.iter().map(move |&(i, s, r)| (s, i, u.user, r)))
        .collect();
    let n_rel = pooled.iter().filter(|p| p.3).count();
    // partial selection of the top k is enough for the cutoff
    let k_eff = k.min(pooled.len());
    let cmp = |a: &(f64, u32, u32, bool), b: &(f64, u32, u32, bool)| {
        b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    };
    if k_eff > 0 && k_eff < pooled.len() {
        pooled.select_nth_unstable_by(k_eff - 1, cmp);
        pooled.truncate(k_eff);
    }
    pooled.sort_by(cmp);
    let micro = ndcg_from_flags(pooled.iter().map(|p| p.3), n_rel, k);
    (SummaryStats::of(&per), micro)
}

/// Probability that a random positive outscores a random negative, counting
/// ties as one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined("ROC-AUC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks for tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += mid * order[i..=j].iter().filter(|&&o| labels[o]).count() as f64;
        i = j + 1;
    }
    let p = pos as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

pub const LOG_LOSS_EPS: f64 = 1e-12;

/// Mean binary cross-entropy with probabilities clipped to `[ε, 1−ε]`.
pub fn log_loss(probs: &[f64], labels: &[bool]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Dimension {
            expected: probs.len(),
            got: labels.len(),
        });
    }
    if probs.is_empty() {
        return Err(Error::Undefined("log-loss of no samples"));
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(LOG_LOSS_EPS, 1.0 - LOG_LOSS_EPS);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / probs.len() as f64)
}

/// Evaluation summary for one run. Timings are kept out of the JSON form so
/// the serialised report depends only on config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub macro_ndcg_at_10: SummaryStats,
    pub micro_ndcg_at_10: f64,
    pub roc_auc: f64,
    pub log_loss: f64,
    #[serde(skip)]
    pub wall_clock_seconds: BTreeMap<String, f64>,
}

impl MetricReport {
    pub fn in_range(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        unit(self.macro_ndcg_at_10.mean)
            && unit(self.macro_ndcg_at_10.median)
            && unit(self.micro_ndcg_at_10)
            && unit(self.roc_auc)
            && self.log_loss >= 0.0
            && self.log_loss.is_finite()
    }
}
