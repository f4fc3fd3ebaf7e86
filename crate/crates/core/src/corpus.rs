//! Interaction logs, item-tag matrices, TF-IDF weighting and the per-user
//! train/validation/test partition.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::marker::PhantomData;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;
use crate::sparse::CsrMatrix;

/// Binary implicit-feedback log: each entry is one click.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionLog {
    entries: Vec<(u32, u32)>,
    n_users: usize,
    n_items: usize,
}

impl InteractionLog {
    /// Entries are deduplicated and sorted by `(user, item)`.
    pub fn new(entries: Vec<(u32, u32)>, n_users: usize, n_items: usize) -> Result<Self> {
        let set: BTreeSet<(u32, u32)> = entries.into_iter().collect();
        for &(u, i) in &set {
            if u as usize >= n_users || i as usize >= n_items {
                return Err(Error::param(format!(
                    "interaction ({u}, {i}) outside {n_users} users x {n_items} items"
                )));
            }
        }
        Ok(Self {
            entries: set.into_iter().collect(),
            n_users,
            n_items,
        })
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Items clicked by each user, ascending.
    pub fn per_user(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.n_users];
        for &(u, i) in &self.entries {
            out[u as usize].push(i);
        }
        out
    }
}

fn parse_header(line: &str, keys: [&str; 2]) -> Option<(usize, usize)> {
    let body = line.strip_prefix('#')?;
    let mut a = None;
    let mut b = None;
    for tok in body.split_whitespace() {
        let (k, v) = tok.split_once('=')?;
        let v: usize = v.parse().ok()?;
        if k == keys[0] {
            a = Some(v);
        } else if k == keys[1] {
            b = Some(v);
        }
    }
    Some((a?, b?))
}

/// Read a `user<TAB>item` file. An optional `#users=<n> items=<m>` header
/// fixes the dimensions; otherwise they are `max id + 1`.
pub fn load_interactions(path: &Path) -> Result<InteractionLog> {
    let text = fs::read_to_string(path)?;
    let mut header = None;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(dims) = parse_header(line, ["users", "items"]) {
                header = Some(dims);
            }
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(u), Some(i), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(path, lineno + 1, "expected `user<TAB>item`"));
        };
        let u: u32 = u
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno + 1, format!("bad user id `{u}`")))?;
        let i: u32 = i
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno + 1, format!("bad item id `{i}`")))?;
        entries.push((u, i));
    }
    if entries.is_empty() {
        return Err(Error::Empty(path.to_path_buf()));
    }
    let (n_users, n_items) = header.unwrap_or_else(|| {
        let mu = entries.iter().map(|e| e.0).max().unwrap_or(0) as usize;
        let mi = entries.iter().map(|e| e.1).max().unwrap_or(0) as usize;
        (mu + 1, mi + 1)
    });
    InteractionLog::new(entries, n_users, n_items)
}

pub fn write_interactions(log: &InteractionLog, path: &Path) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "#users={} items={}", log.n_users, log.n_items).unwrap();
    for &(u, i) in &log.entries {
        writeln!(out, "{u}\t{i}").unwrap();
    }
    fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

/// Nonnegative item x tag matrix: binary on load, real after [`tfidf`].
#[derive(Debug, Clone, PartialEq)]
pub struct TagMatrix(CsrMatrix);

impl TagMatrix {
    pub fn new(inner: CsrMatrix) -> Result<Self> {
        if inner.triplets().any(|(_, _, v)| v < 0.0) {
            return Err(Error::param("tag matrix entries must be nonnegative"));
        }
        Ok(Self(inner))
    }

    pub fn from_triplets(n_items: usize, n_tags: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        Self::new(CsrMatrix::from_triplets(n_items, n_tags, triplets)?)
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.0
    }

    pub fn n_items(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_tags(&self) -> usize {
        self.0.ncols()
    }

    pub fn select_rows(&self, order: &[usize]) -> Self {
        Self(self.0.select_rows(order))
    }
}

/// Read COO text `item<TAB>tag<TAB>value` with header `#items=<n> tags=<m>`.
pub fn load_tag_matrix(path: &Path) -> Result<TagMatrix> {
    let text = fs::read_to_string(path)?;
    let mut dims = None;
    let mut triplets = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(d) = parse_header(line, ["items", "tags"]) {
                dims = Some(d);
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, lineno + 1, "expected `item<TAB>tag<TAB>value`"));
        }
        let bad = |what: &str, s: &str| Error::parse(path, lineno + 1, format!("bad {what} `{s}`"));
        let r: usize = fields[0].trim().parse().map_err(|_| bad("item", fields[0]))?;
        let c: usize = fields[1].trim().parse().map_err(|_| bad("tag", fields[1]))?;
        let v: f64 = fields[2].trim().parse().map_err(|_| bad("value", fields[2]))?;
        if v < 0.0 || !v.is_finite() {
            return Err(bad("value", fields[2]));
        }
        triplets.push((r, c, v));
    }
    let Some((n_items, n_tags)) = dims else {
        return Err(Error::parse(path, 1, "missing `#items=<n> tags=<m>` header"));
    };
    if triplets.is_empty() {
        return Err(Error::Empty(path.to_path_buf()));
    }
    TagMatrix::from_triplets(n_items, n_tags, &triplets)
}

pub fn write_tag_matrix(tags: &TagMatrix, path: &Path) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "#items={} tags={}", tags.n_items(), tags.n_tags()).unwrap();
    for (r, c, v) in tags.0.triplets() {
        writeln!(out, "{r}\t{c}\t{v}").unwrap();
    }
    fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

/// Items-as-documents TF-IDF with smoothed idf `ln((1+n)/(1+df)) + 1`,
/// followed by L2 normalisation of every nonzero row.
pub fn tfidf(tags: &TagMatrix) -> TagMatrix {
    let m = &tags.0;
    let n = m.nrows() as f64;
    let mut df = vec![0usize; m.ncols()];
    for (idx, _) in m.rows() {
        for &c in idx {
            df[c as usize] += 1;
        }
    }
    let idf: Vec<f64> = df.iter().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
    let mut out = m.clone();
    for r in 0..out.nrows() {
        let idx: Vec<u32> = out.row(r).0.to_vec();
        let vals = out.row_values_mut(r);
        for (v, &c) in vals.iter_mut().zip(&idx) {
            *v *= idf[c as usize];
        }
        let norm = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            vals.iter_mut().for_each(|v| *v /= norm);
        }
    }
    debug_assert!(out.values_mut().iter().all(|v| v.is_finite()));
    TagMatrix(out)
}

/// Marker for the learning portion of a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Train;
/// Marker for the validation portion of a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Valid;
/// Marker for the held-out test portion of a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Test;

/// Per-user item lists belonging to one partition `P`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserItems<P> {
    per_user: Vec<Vec<u32>>,
    _part: PhantomData<P>,
}

impl<P> UserItems<P> {
    pub fn new(mut per_user: Vec<Vec<u32>>) -> Self {
        per_user.iter_mut().for_each(|v| v.sort_unstable());
        Self {
            per_user,
            _part: PhantomData,
        }
    }

    pub fn n_users(&self) -> usize {
        self.per_user.len()
    }

    pub fn items(&self, user: usize) -> &[u32] {
        &self.per_user[user]
    }

    pub fn total(&self) -> usize {
        self.per_user.iter().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[u32])> {
        self.per_user.iter().enumerate().map(|(u, v)| (u, v.as_slice()))
    }
}

/// User-stratified 64:16:20 partition of an interaction log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: UserItems<Train>,
    pub valid: UserItems<Valid>,
    test: UserItems<Test>,
    n_items: usize,
}

impl Split {
    pub const RATIO: (f64, f64, f64) = (0.64, 0.16, 0.20);

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_users(&self) -> usize {
        self.train.n_users()
    }

    /// The held-out interactions. Only final evaluation should call this.
    pub fn test(&self) -> &UserItems<Test> {
        &self.test
    }

    /// Everything except the test partition.
    pub fn learning(&self) -> LearningView<'_> {
        LearningView {
            train: &self.train,
            valid: &self.valid,
            n_items: self.n_items,
        }
    }
}

/// Read-only view over the train and validation partitions.
#[derive(Debug, Clone, Copy)]
pub struct LearningView<'a> {
    pub train: &'a UserItems<Train>,
    pub valid: &'a UserItems<Valid>,
    pub n_items: usize,
}

/// Partition sizes for a user with `n` interactions: 80/20 into learning and
/// test, then 80/20 of the learning part into train and validation, each with
/// floor rounding. A user with any interactions keeps at least one in train.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    if n <= 1 {
        return (n, 0, 0);
    }
    let learning = n * 4 / 5;
    let mut train = learning * 4 / 5;
    let mut valid = learning - train;
    let mut test = n - learning;
    if train == 0 {
        if valid > 0 {
            valid -= 1;
        } else {
            test -= 1;
        }
        train = 1;
    }
    (train, valid, test)
}

/// Shuffle each user's items with a per-user stream, then cut by
/// [`split_counts`].
pub fn stratified_split(log: &InteractionLog, seed: u64) -> Split {
    let mut train = Vec::with_capacity(log.n_users());
    let mut valid = Vec::with_capacity(log.n_users());
    let mut test = Vec::with_capacity(log.n_users());
    let mut singles = 0usize;
    for (u, mut items) in log.per_user().into_iter().enumerate() {
        let mut rng = seed::child_rng(seed, &[seed::stage::SPLIT, u as u64]);
        items.shuffle(&mut rng);
        let (a, b, _) = split_counts(items.len());
        if items.len() == 1 {
            singles += 1;
        }
        test.push(items.split_off(a + b));
        valid.push(items.split_off(a));
        train.push(items);
    }
    if singles > 0 {
        warn!("{singles} users with a single interaction were placed entirely in train");
    }
    Split {
        train: UserItems::new(train),
        valid: UserItems::new(valid),
        test: UserItems::new(test),
        n_items: log.n_items(),
    }
}
