//! Synthetic corpora for smoke runs, benchmarks and recovery checks.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{InteractionLog, TagMatrix};
use crate::dict::{Dictionary, SparseCodes};
use crate::error::{Error, Result};
use crate::seed;

/// Shape of a topic-structured click log with tag profiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusShape {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub tags: usize,
    /// Fraction of zero entries in the item × tag matrix.
    pub sparsity: f64,
    pub topics: usize,
}

impl CorpusShape {
    pub const ICM150: Self = Self {
        users: 1881,
        items: 5000,
        interactions: 64890,
        tags: 150,
        sparsity: 0.886,
        topics: 30,
    };

    pub const ICM500: Self = Self {
        users: 1889,
        items: 7000,
        interactions: 68062,
        tags: 500,
        sparsity: 0.934,
        topics: 40,
    };

    pub const SMALL: Self = Self {
        users: 300,
        items: 800,
        interactions: 6000,
        tags: 60,
        sparsity: 0.85,
        topics: 12,
    };

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "icm150" => Some(Self::ICM150),
            "icm500" => Some(Self::ICM500),
            "small" => Some(Self::SMALL),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub log: InteractionLog,
    pub tags: TagMatrix,
    pub item_topic: Vec<usize>,
}

fn check_shape(s: &CorpusShape) -> Result<()> {
    if s.users == 0 || s.items == 0 || s.tags == 0 || s.topics == 0 {
        return Err(Error::param("corpus dimensions must be positive"));
    }
    if !(0.0..1.0).contains(&s.sparsity) {
        return Err(Error::param("sparsity must lie in [0, 1)"));
    }
    if s.interactions > s.users * s.items {
        return Err(Error::param("more interactions than user-item pairs"));
    }
    Ok(())
}

/// Items belong to one topic and draw most tags from that topic's tag
/// block; users favour two topics and a popularity-skewed item subset.
pub fn generate_corpus(shape: CorpusShape, seed: u64) -> Result<SyntheticCorpus> {
    check_shape(&shape)?;
    let mut rng = seed::child_rng(seed, &[seed::stage::SYNTHETIC, 0]);
    let topics = shape.topics.min(shape.tags);
    let per_item = (((1.0 - shape.sparsity) * shape.tags as f64).round() as usize).clamp(1, shape.tags);
    let block = shape.tags.div_ceil(topics);

    let item_topic: Vec<usize> = (0..shape.items).map(|_| rng.random_range(0..topics)).collect();
    let mut trip = Vec::with_capacity(shape.items * per_item);
    for (i, &t) in item_topic.iter().enumerate() {
        let lo = t * block;
        let hi = ((t + 1) * block).min(shape.tags);
        let mut chosen = BTreeSet::new();
        while chosen.len() < per_item {
            let tag = if rng.random::<f64>() < 0.7 && hi > lo {
                rng.random_range(lo..hi)
            } else {
                rng.random_range(0..shape.tags)
            };
            chosen.insert(tag);
        }
        for tag in chosen {
            let count = 1.0 + rng.random_range(0..3) as f64;
            trip.push((i, tag, count));
        }
    }
    let tags = TagMatrix::from_triplets(shape.items, shape.tags, &trip)?;

    let mut by_topic = vec![Vec::new(); topics];
    for (i, &t) in item_topic.iter().enumerate() {
        by_topic[t].push(i as u32);
    }
    // Zipf-like popularity within each topic
    let popularity: Vec<f64> = (0..shape.items).map(|i| 1.0 / (1.0 + (i % 97) as f64).sqrt()).collect();
    let base = shape.interactions / shape.users;
    let extra = shape.interactions % shape.users;
    let mut entries = Vec::with_capacity(shape.interactions);
    for u in 0..shape.users {
        let want = (base + usize::from(u < extra)).min(shape.items);
        let favs = [rng.random_range(0..topics), rng.random_range(0..topics)];
        let mut got = BTreeSet::new();
        let mut attempts = 0;
        while got.len() < want {
            attempts += 1;
            let pool = if attempts > 50 * want {
                None
            } else if rng.random::<f64>() < 0.8 {
                Some(&by_topic[favs[rng.random_range(0..2)]])
            } else {
                None
            };
            let item = match pool {
                Some(p) if !p.is_empty() => {
                    let i = p[rng.random_range(0..p.len())];
                    if rng.random::<f64>() > popularity[i as usize] {
                        continue;
                    }
                    i
                }
                _ => rng.random_range(0..shape.items) as u32,
            };
            got.insert(item);
        }
        entries.extend(got.into_iter().map(|i| (u as u32, i)));
    }
    let log = InteractionLog::new(entries, shape.users, shape.items)?;
    Ok(SyntheticCorpus { log, tags, item_topic })
}

/// Setup where a handful of atoms in a large pool decide every click.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedShape {
    pub dim: usize,
    pub pool: usize,
    pub planted: usize,
    pub items: usize,
    pub users: usize,
    /// Background atoms per item.
    pub noise_atoms: usize,
    /// Probability that an item carries one planted atom.
    pub planted_rate: f64,
    pub clicks_per_user: usize,
    /// Fraction of clicks on arbitrary items.
    pub click_noise: f64,
}

impl Default for PlantedShape {
    fn default() -> Self {
        Self {
            dim: 32,
            pool: 1000,
            planted: 5,
            items: 2000,
            users: 600,
            noise_atoms: 3,
            planted_rate: 0.5,
            clicks_per_user: 20,
            click_noise: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub dictionary: Dictionary,
    pub codes: SparseCodes,
    /// `codes · atomsᵀ`, one row per item.
    pub rows: DMatrix<f64>,
    pub log: InteractionLog,
    pub planted: Vec<usize>,
}

pub fn generate_planted(shape: PlantedShape, seed: u64) -> Result<PlantedCorpus> {
    let PlantedShape {
        dim,
        pool,
        planted,
        items,
        users,
        noise_atoms,
        planted_rate,
        clicks_per_user,
        click_noise,
    } = shape;
    if dim == 0 || planted == 0 || planted + noise_atoms > pool || items == 0 || users == 0 {
        return Err(Error::param("invalid planted shape"));
    }
    let mut rng = seed::child_rng(seed, &[seed::stage::SYNTHETIC, 1]);
    let mut atoms = DMatrix::zeros(dim, pool);
    for j in 0..pool {
        let v = DMatrix::<f64>::from_fn(dim, 1, |_, _| StandardNormal.sample(&mut rng));
        let n = v.norm();
        atoms.set_column(j, &(v.column(0) / n));
    }
    let mut planted_ids = sample_indices(&mut rng, pool, planted).into_vec();
    planted_ids.sort_unstable();
    let is_planted = |j: usize| planted_ids.binary_search(&j).is_ok();
    let background: Vec<usize> = (0..pool).filter(|&j| !is_planted(j)).collect();

    let mut code_rows = Vec::with_capacity(items);
    let mut carriers = vec![Vec::new(); planted];
    for i in 0..items {
        let mut row = vec![0.0; pool];
        for k in sample_indices(&mut rng, background.len(), noise_atoms) {
            row[background[k]] = rng.random_range(0.2..1.0);
        }
        if rng.random::<f64>() < planted_rate {
            let p = rng.random_range(0..planted);
            row[planted_ids[p]] = rng.random_range(0.5..1.0);
            carriers[p].push(i as u32);
        }
        code_rows.push(row);
    }
    let codes = SparseCodes::from_dense_rows(pool, code_rows);
    let rows = codes.to_dense() * atoms.transpose();

    let mut entries = Vec::with_capacity(users * clicks_per_user);
    for u in 0..users {
        let fav = rng.random_range(0..planted);
        let own = &carriers[fav];
        let mut got = BTreeSet::new();
        let want = clicks_per_user.min(items);
        let mut attempts = 0;
        while got.len() < want && attempts < 100 * want {
            attempts += 1;
            let item = if own.is_empty() || rng.random::<f64>() < click_noise {
                rng.random_range(0..items) as u32
            } else {
                own[rng.random_range(0..own.len())]
            };
            got.insert(item);
        }
        entries.extend(got.into_iter().map(|i| (u as u32, i)));
    }
    let log = InteractionLog::new(entries, users, items)?;
    let dictionary = Dictionary::new(atoms, (0..pool).map(|j| (j / 20, j % 20)).collect())?;
    Ok(PlantedCorpus {
        dictionary,
        codes,
        rows,
        log,
        planted: planted_ids,
    })
}

/// `n` weights drawn i.i.d. from `U(0, 1)`.
pub fn uniform_weights(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seed::child_rng(seed, &[seed::stage::SYNTHETIC, 3]);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// `rank`-dimensional signal plus relative Gaussian noise.
pub fn low_rank_matrix(rows: usize, cols: usize, rank: usize, noise: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = seed::child_rng(seed, &[seed::stage::SYNTHETIC, 2]);
    let mut g = |r, c| DMatrix::<f64>::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
    let u = g(rows, rank);
    let v = g(rank, cols);
    let signal = u * v;
    let scale = noise * signal.norm() / ((rows * cols) as f64).sqrt();
    let e = g(rows, cols);
    signal + e * scale
}
