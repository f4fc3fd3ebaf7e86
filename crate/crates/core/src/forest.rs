//! Bagged Gini decision trees over low-dimensional code vectors.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        probability: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 8,
            min_leaf: 5,
        }
    }
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left as usize).max(go(nodes, right as usize)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: row.len(),
            });
        }
        Ok(self.predict_unchecked(row))
    }

    fn predict_unchecked(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { probability } => return probability,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }
}

fn check_rows(rows: &[Vec<f64>], labels: &[bool]) -> Result<usize> {
    if rows.is_empty() {
        return Err(Error::param("no training rows"));
    }
    if rows.len() != labels.len() {
        return Err(Error::Dimension {
            expected: rows.len(),
            got: labels.len(),
        });
    }
    let dim = rows[0].len();
    for r in rows {
        if r.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("non-finite feature value"));
        }
    }
    Ok(dim)
}

struct Builder<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [bool],
    features: &'a [usize],
    params: TreeParams,
    nodes: Vec<Node>,
    /// Scratch flags indexed by row.
    goes_left: Vec<bool>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

fn gini_mass(pos: usize, n: usize) -> f64 {
    // n · gini
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * n as f64 * p * (1.0 - p)
}

impl Builder<'_> {
    /// `sorted[f]` holds the node's sample indices (with bootstrap
    /// repeats) ordered by feature `features[f]`.
    fn grow(&mut self, sorted: Vec<Vec<usize>>, depth: usize) -> u32 {
        let samples = &sorted[0];
        let n = samples.len();
        let pos = samples.iter().filter(|&&i| self.labels[i]).count();
        let id = self.nodes.len() as u32;
        let leaf = Node::Leaf {
            probability: pos as f64 / n as f64,
        };
        self.nodes.push(leaf);
        if pos == 0 || pos == n || depth >= self.params.max_depth || n < 2 * self.params.min_leaf {
            return id;
        }
        let Some(best) = self.best_split(&sorted, pos) else {
            return id;
        };
        let col = best.feature;
        for &i in &sorted[0] {
            self.goes_left[i] = self.rows[i][col] <= best.threshold;
        }
        let mut left_sets = Vec::with_capacity(sorted.len());
        let mut right_sets = Vec::with_capacity(sorted.len());
        for list in sorted {
            let (l, r): (Vec<usize>, Vec<usize>) = list.iter().partition(|&&i| self.goes_left[i]);
            left_sets.push(l);
            right_sets.push(r);
        }
        let left = self.grow(left_sets, depth + 1);
        let right = self.grow(right_sets, depth + 1);
        self.nodes[id as usize] = Node::Split {
            feature: col as u32,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&self, sorted: &[Vec<usize>], pos: usize) -> Option<BestSplit> {
        let n = sorted[0].len();
        let min_leaf = self.params.min_leaf.max(1);
        let parent = gini_mass(pos, n);
        let mut best: Option<BestSplit> = None;
        for (slot, &col) in self.features.iter().enumerate() {
            let list = &sorted[slot];
            let mut left_pos = 0;
            for k in 0..n - 1 {
                let i = list[k];
                if self.labels[i] {
                    left_pos += 1;
                }
                let nl = k + 1;
                let (a, b) = (self.rows[i][col], self.rows[list[k + 1]][col]);
                if a == b || nl < min_leaf || n - nl < min_leaf {
                    continue;
                }
                let score = gini_mass(left_pos, nl) + gini_mass(pos - left_pos, n - nl);
                if score < parent - 1e-12 && best.as_ref().is_none_or(|bs| score < bs.score - 1e-12) {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some(BestSplit {
                        feature: col,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}

/// Greedy Gini tree on the rows listed in `sample` (repeats allowed),
/// splitting only on `features`.
pub fn fit_tree_on(
    rows: &[Vec<f64>],
    labels: &[bool],
    sample: &[usize],
    features: &[usize],
    params: TreeParams,
) -> Result<DecisionTree> {
    let dim = check_rows(rows, labels)?;
    if sample.is_empty() {
        return Err(Error::param("empty sample"));
    }
    if features.is_empty() || features.iter().any(|&f| f >= dim) {
        return Err(Error::param("feature subset empty or out of range"));
    }
    let sorted: Vec<Vec<usize>> = features
        .iter()
        .map(|&f| {
            let mut s = sample.to_vec();
            s.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]));
            s
        })
        .collect();
    let mut b = Builder {
        rows,
        labels,
        features,
        params,
        nodes: Vec::new(),
        goes_left: vec![false; rows.len()],
    };
    b.grow(sorted, 0);
    Ok(DecisionTree { nodes: b.nodes, dim })
}

/// Tree over every row and every feature.
pub fn fit_tree(rows: &[Vec<f64>], labels: &[bool], params: TreeParams) -> Result<DecisionTree> {
    let dim = check_rows(rows, labels)?;
    let sample: Vec<usize> = (0..rows.len()).collect();
    let features: Vec<usize> = (0..dim).collect();
    fit_tree_on(rows, labels, &sample, &features, params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub trees: usize,
    pub tree: TreeParams,
    /// Features per tree; `None` means `⌈√dim⌉`.
    pub features_per_tree: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 100,
            tree: TreeParams::default(),
            features_per_tree: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
    pub tree_seeds: Vec<u64>,
    pub tree_features: Vec<Vec<usize>>,
    dim: usize,
}

pub fn fit_forest(rows: &[Vec<f64>], labels: &[bool], params: ForestParams, seed: u64) -> Result<Forest> {
    let dim = check_rows(rows, labels)?;
    if params.trees == 0 {
        return Err(Error::param("forest needs at least one tree"));
    }
    let per_tree = params
        .features_per_tree
        .unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize)
        .clamp(1, dim);
    let n = rows.len();
    let seeds: Vec<u64> = (0..params.trees as u64).map(|t| seed::derive(seed, &[t])).collect();
    let fitted: Vec<(DecisionTree, Vec<usize>)> = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = seed::rng(s);
            let mut features = sample_indices(&mut rng, dim, per_tree).into_vec();
            features.sort_unstable();
            let sample: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_tree_on(rows, labels, &sample, &features, params.tree).map(|t| (t, features))
        })
        .collect::<Result<_>>()?;
    let (trees, tree_features) = fitted.into_iter().unzip();
    Ok(Forest {
        trees,
        tree_seeds: seeds,
        tree_features,
        dim,
    })
}

impl Forest {
    pub fn from_trees(trees: Vec<DecisionTree>) -> Result<Self> {
        let dim = trees.first().ok_or(Error::param("no trees"))?.dim;
        if trees.iter().any(|t| t.dim != dim) {
            return Err(Error::param("trees disagree on dimensionality"));
        }
        let t = trees.len();
        Ok(Self {
            trees,
            tree_seeds: vec![0; t],
            tree_features: vec![(0..dim).collect(); t],
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    /// Arithmetic mean of the tree outputs.
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: row.len(),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict_unchecked(row)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    pub fn predict_many(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.par_iter().map(|r| self.predict_proba(r)).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = format!("#forest\tdim={}\ttrees={}\n", self.dim, self.trees.len());
        for (t, tree) in self.trees.iter().enumerate() {
            let feats: Vec<String> = self.tree_features[t].iter().map(|f| f.to_string()).collect();
            let _ = writeln!(s, "{t}\t-\tmeta\t{} {}", self.tree_seeds[t], feats.join(","));
            for (i, node) in tree.nodes.iter().enumerate() {
                let _ = match node {
                    Node::Leaf { probability } => writeln!(s, "{t}\t{i}\tleaf\t{probability:?}"),
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => writeln!(s, "{t}\t{i}\tsplit\t{feature} {threshold:?} {left} {right}"),
                };
            }
        }
        fs::write(path, s)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let bad = |line: usize, msg: &str| Error::parse(path, line, msg);
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Empty(path.to_path_buf()))?;
        let dim: usize = header
            .split('\t')
            .find_map(|f| f.strip_prefix("dim="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(1, "missing dim in header"))?;
        let mut trees: Vec<DecisionTree> = Vec::new();
        let mut seeds = Vec::new();
        let mut feats = Vec::new();
        for (ln, line) in lines {
            let ln = ln + 1;
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad(ln, "expected four fields"));
            }
            let t: usize = f[0].parse().map_err(|_| bad(ln, "bad tree index"))?;
            let payload: Vec<&str> = f[3].split(' ').collect();
            match f[2] {
                "meta" => {
                    if t != trees.len() || payload.len() != 2 {
                        return Err(bad(ln, "bad tree meta"));
                    }
                    seeds.push(payload[0].parse().map_err(|_| bad(ln, "bad seed"))?);
                    let fs: std::result::Result<Vec<usize>, _> = payload[1].split(',').map(str::parse).collect();
                    feats.push(fs.map_err(|_| bad(ln, "bad feature list"))?);
                    trees.push(DecisionTree { nodes: Vec::new(), dim });
                }
                kind => {
                    let tree = trees
                        .get_mut(t)
                        .filter(|_| t + 1 == seeds.len())
                        .ok_or_else(|| bad(ln, "node before tree meta"))?;
                    let node = match (kind, payload.as_slice()) {
                        ("leaf", [p]) => Node::Leaf {
                            probability: p.parse().map_err(|_| bad(ln, "bad probability"))?,
                        },
                        ("split", [fe, th, l, r]) => Node::Split {
                            feature: fe.parse().map_err(|_| bad(ln, "bad feature"))?,
                            threshold: th.parse().map_err(|_| bad(ln, "bad threshold"))?,
                            left: l.parse().map_err(|_| bad(ln, "bad child"))?,
                            right: r.parse().map_err(|_| bad(ln, "bad child"))?,
                        },
                        _ => return Err(bad(ln, "unknown node kind")),
                    };
                    tree.nodes.push(node);
                }
            }
        }
        for tree in &trees {
            let n = tree.nodes.len() as u32;
            let ok = n > 0
                && tree.nodes.iter().all(|node| match *node {
                    Node::Leaf { probability } => (0.0..=1.0).contains(&probability),
                    Node::Split {
                        feature, left, right, ..
                    } => (feature as usize) < dim && left < n && right < n,
                });
            if !ok {
                return Err(bad(0, "inconsistent tree"));
            }
        }
        if trees.is_empty() {
            return Err(Error::Empty(path.to_path_buf()));
        }
        Ok(Self {
            trees,
            tree_seeds: seeds,
            tree_features: feats,
            dim,
        })
    }
}
