//! Mini-batch k-means over sketch rows.

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansParams {
    pub clusters: usize,
    pub batch: usize,
    pub iters: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            clusters: 50,
            batch: 2048,
            iters: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// `K x d`
    pub centroids: DMatrix<f64>,
    pub assignment: Vec<usize>,
    pub sizes: Vec<usize>,
    pub inertia: f64,
    /// Full-set inertia at each checkpoint, starting with the seeded centroids.
    pub inertia_trace: Vec<f64>,
}

impl Clustering {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Row-major copy of a dense matrix for cache-friendly row access.
pub(crate) struct Rows {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Rows {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let dim = m.ncols();
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            data.extend(m.row(r).iter());
        }
        Self { dim, data }
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.data)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &Rows) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.len() {
        let d = sq_dist(point, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Nearest centroid for every point; ties go to the lowest index.
pub fn assign(points: &DMatrix<f64>, centroids: &DMatrix<f64>) -> Result<Vec<usize>> {
    if points.ncols() != centroids.ncols() {
        return Err(Error::Dimension {
            expected: centroids.ncols(),
            got: points.ncols(),
        });
    }
    let p = Rows::from_matrix(points);
    let c = Rows::from_matrix(centroids);
    Ok(assign_rows(&p, &c).into_iter().map(|(k, _)| k).collect())
}

fn assign_rows(points: &Rows, centroids: &Rows) -> Vec<(usize, f64)> {
    (0..points.len())
        .into_par_iter()
        .map(|i| nearest(points.row(i), centroids))
        .collect()
}

fn inertia(points: &Rows, centroids: &Rows) -> f64 {
    assign_rows(points, centroids).iter().map(|&(_, d)| d).sum()
}

/// `count` distinct indices from `0..n` by partial Fisher-Yates.
fn sample_distinct(n: usize, count: usize, rng: &mut Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let count = count.min(n);
    for i in 0..count {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(count);
    idx
}

fn kmeans_pp(points: &Rows, candidates: &[usize], k: usize, rng: &mut Rng) -> Rows {
    let dim = points.dim;
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut dist = vec![f64::INFINITY; candidates.len()];
    let first = rng.random_range(0..candidates.len());
    chosen.push(first);
    while chosen.len() < k {
        let last = points.row(candidates[*chosen.last().unwrap()]);
        for (i, &p) in candidates.iter().enumerate() {
            dist[i] = dist[i].min(sq_dist(points.row(p), last));
        }
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total implies a positive entry")
        } else {
            // only duplicates left: take any unchosen candidate
            let free: Vec<usize> = (0..candidates.len()).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
    }
    let mut out = Rows {
        dim,
        data: Vec::with_capacity(k * dim),
    };
    for c in chosen {
        out.data.extend_from_slice(points.row(candidates[c]));
    }
    out
}

pub fn minibatch_kmeans(points: &DMatrix<f64>, params: KMeansParams, seed: u64) -> Result<Clustering> {
    let n = points.nrows();
    let k = params.clusters;
    if k == 0 || k > n {
        return Err(Error::param(format!("cluster count {k} must lie in [1, {n}]")));
    }
    if params.batch == 0 {
        return Err(Error::param("k-means batch size must be positive"));
    }
    let rows = Rows::from_matrix(points);
    let mut rng = seed::child_rng(seed, &[seed::stage::CLUSTER]);

    let sub = sample_distinct(n, (10 * k).max(k), &mut rng);
    let mut centroids = kmeans_pp(&rows, &sub, k, &mut rng);
    let mut best = (centroids.data.clone(), inertia(&rows, &centroids));
    let mut trace = vec![best.1];

    let batch = params.batch.min(n);
    let steps_per_epoch = n.div_ceil(batch);
    let mut counts = vec![0usize; k];
    for it in 0..params.iters {
        let idx = sample_distinct(n, batch, &mut rng);
        let labels: Vec<usize> = idx.iter().map(|&i| nearest(rows.row(i), &centroids).0).collect();
        for (&i, &c) in idx.iter().zip(&labels) {
            counts[c] += 1;
            let eta = 1.0 / counts[c] as f64;
            let x = rows.row(i);
            for (cv, &xv) in centroids.row_mut(c).iter_mut().zip(x) {
                *cv += eta * (xv - *cv);
            }
        }
        if (it + 1) % steps_per_epoch == 0 || it + 1 == params.iters {
            let cur = inertia(&rows, &centroids);
            if cur < best.1 {
                best = (centroids.data.clone(), cur);
            } else {
                centroids.data.copy_from_slice(&best.0);
            }
            trace.push(best.1);
        }
    }

    centroids.data = best.0;
    let assigned = assign_rows(&rows, &centroids);
    let mut assignment: Vec<usize> = assigned.iter().map(|&(c, _)| c).collect();
    let mut dist: Vec<f64> = assigned.iter().map(|&(_, d)| d).collect();
    let mut sizes = vec![0usize; k];
    for &c in &assignment {
        sizes[c] += 1;
    }
    // empty clusters take over the point farthest from its own centroid
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let donor = (0..n)
            .filter(|&i| sizes[assignment[i]] > 1)
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
            .expect("k <= n leaves a cluster with at least two members");
        sizes[assignment[donor]] -= 1;
        assignment[donor] = c;
        sizes[c] = 1;
        dist[donor] = 0.0;
        centroids.row_mut(c).copy_from_slice(rows.row(donor));
    }
    let total: f64 = dist.iter().sum();
    if let Some(last) = trace.last_mut() {
        if total < *last {
            trace.push(total);
        }
    }
    Ok(Clustering {
        centroids: centroids.to_matrix(),
        assignment,
        sizes,
        inertia: total,
        inertia_trace: trace,
    })
}
