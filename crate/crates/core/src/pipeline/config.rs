use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::qubo::QuboForm;
use crate::synthetic::CorpusShape;

/// Every stage hyperparameter plus data locations.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub interactions: Option<PathBuf>,
    pub icm: Option<PathBuf>,
    /// `small`, `icm150` or `icm500`; used when no data paths are set.
    pub synthetic: String,
    pub synthetic_seed: u64,

    pub svd_rank: usize,
    pub svd_oversample: usize,
    pub svd_power_iters: usize,

    pub clusters: usize,
    pub kmeans_batch: usize,
    pub kmeans_iters: usize,

    pub atoms: usize,
    /// `None` picks λ from the data.
    pub lambda: Option<f64>,
    pub dict_epochs: usize,
    pub dict_batch: usize,

    pub rounds: usize,
    pub bootstrap_fraction: f64,
    pub ndcg_cutoff: usize,
    pub k_top: usize,
    pub budget: usize,
    pub penalty: f64,
    pub qubo_form: QuboForm,

    pub qaoa_depth: usize,
    pub qaoa_shots: usize,
    pub qaoa_iters: usize,
    pub qaoa_final_shots: usize,
    pub qaoa_pool_samples: bool,
    /// Qubits per round; below `k_top` the candidate list is cut.
    pub qaoa_qubits: usize,

    pub trees: usize,
    pub tree_depth: usize,
    pub min_leaf: usize,
    pub per_run_forest: bool,
    pub negative_ratio: usize,
    /// Sampled non-relevant items per user in ranking; 0 ranks every
    /// unseen item.
    pub eval_negatives: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            interactions: None,
            icm: None,
            synthetic: "small".into(),
            synthetic_seed: 0,
            svd_rank: 32,
            svd_oversample: 10,
            svd_power_iters: 2,
            clusters: 50,
            kmeans_batch: 2048,
            kmeans_iters: 100,
            atoms: 20,
            lambda: None,
            dict_epochs: 10,
            dict_batch: 2048,
            rounds: 10,
            bootstrap_fraction: 0.2,
            ndcg_cutoff: 10,
            k_top: 20,
            budget: 5,
            penalty: 1e3,
            qubo_form: QuboForm::Exact,
            qaoa_depth: 3,
            qaoa_shots: 128,
            qaoa_iters: 150,
            qaoa_final_shots: 1024,
            qaoa_pool_samples: true,
            qaoa_qubits: 20,
            trees: 100,
            tree_depth: 8,
            min_leaf: 5,
            per_run_forest: false,
            negative_ratio: 1,
            eval_negatives: 0,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::param(format!("{key}: cannot parse `{v}`")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::param(format!("{key}: expected a boolean, got `{v}`"))),
    }
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = num(key, v)?,
            "interactions" => self.interactions = Some(PathBuf::from(v)),
            "icm" => self.icm = Some(PathBuf::from(v)),
            "synthetic" => self.synthetic = v.to_string(),
            "synthetic_seed" => self.synthetic_seed = num(key, v)?,
            "svd_rank" => self.svd_rank = num(key, v)?,
            "svd_oversample" => self.svd_oversample = num(key, v)?,
            "svd_power_iters" => self.svd_power_iters = num(key, v)?,
            "clusters" => self.clusters = num(key, v)?,
            "kmeans_batch" => self.kmeans_batch = num(key, v)?,
            "kmeans_iters" => self.kmeans_iters = num(key, v)?,
            "atoms" => self.atoms = num(key, v)?,
            "lambda" => self.lambda = if v == "auto" { None } else { Some(num(key, v)?) },
            "dict_epochs" => self.dict_epochs = num(key, v)?,
            "dict_batch" => self.dict_batch = num(key, v)?,
            "rounds" => self.rounds = num(key, v)?,
            "bootstrap_fraction" => self.bootstrap_fraction = num(key, v)?,
            "ndcg_cutoff" => self.ndcg_cutoff = num(key, v)?,
            "k_top" => self.k_top = num(key, v)?,
            "budget" => self.budget = num(key, v)?,
            "penalty" => self.penalty = num(key, v)?,
            "qubo_form" => {
                self.qubo_form = QuboForm::parse(v).ok_or_else(|| Error::param(format!("unknown qubo_form `{v}`")))?
            }
            "qaoa_depth" => self.qaoa_depth = num(key, v)?,
            "qaoa_shots" => self.qaoa_shots = num(key, v)?,
            "qaoa_iters" => self.qaoa_iters = num(key, v)?,
            "qaoa_final_shots" => self.qaoa_final_shots = num(key, v)?,
            "qaoa_pool_samples" => self.qaoa_pool_samples = flag(key, v)?,
            "qaoa_qubits" => self.qaoa_qubits = num(key, v)?,
            "trees" => self.trees = num(key, v)?,
            "tree_depth" => self.tree_depth = num(key, v)?,
            "min_leaf" => self.min_leaf = num(key, v)?,
            "per_run_forest" => self.per_run_forest = flag(key, v)?,
            "negative_ratio" => self.negative_ratio = num(key, v)?,
            "eval_negatives" => self.eval_negatives = num(key, v)?,
            _ => return Err(Error::param(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// `key = value` lines; `#` starts a comment. Relative data paths
    /// resolve against the file's directory.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let base = origin.parent().unwrap_or(Path::new(""));
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, n + 1, "expected key = value"))?;
            let (k, v) = (k.trim(), v.trim());
            cfg.set(k, v).map_err(|e| Error::parse(origin, n + 1, e.to_string()))?;
            if k == "interactions" || k == "icm" {
                let p = PathBuf::from(v);
                let p = if p.is_relative() { base.join(p) } else { p };
                if k == "icm" {
                    cfg.icm = Some(p);
                } else {
                    cfg.interactions = Some(p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, path)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::param(m.to_string()));
        if self.interactions.is_some() != self.icm.is_some() {
            return bad("interactions and icm must be given together");
        }
        if self.interactions.is_none() && CorpusShape::by_name(&self.synthetic).is_none() {
            return bad("synthetic must be small, icm150 or icm500");
        }
        if self.svd_rank == 0 || self.clusters == 0 || self.atoms == 0 {
            return bad("svd_rank, clusters and atoms must be positive");
        }
        if self.kmeans_batch == 0 || self.dict_batch == 0 || self.kmeans_iters == 0 {
            return bad("batch sizes and kmeans_iters must be positive");
        }
        if self.lambda.is_some_and(|l| !(l > 0.0 && l.is_finite())) {
            return bad("lambda must be positive");
        }
        if self.rounds == 0 {
            return bad("rounds must be at least 1");
        }
        if !(self.bootstrap_fraction > 0.0 && self.bootstrap_fraction <= 1.0) {
            return bad("bootstrap_fraction must lie in (0, 1]");
        }
        if self.ndcg_cutoff == 0 || self.budget == 0 {
            return bad("ndcg_cutoff and budget must be positive");
        }
        let qubits = self.qaoa_qubits.min(self.k_top);
        if self.budget > qubits {
            return bad("budget exceeds the candidate count");
        }
        if qubits > crate::qubo::MAX_EXHAUSTIVE {
            return bad("too many qubits to simulate");
        }
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return bad("penalty must be positive");
        }
        if self.qaoa_depth == 0 || self.qaoa_shots == 0 || self.qaoa_final_shots == 0 {
            return bad("qaoa depth and shot counts must be positive");
        }
        if self.trees == 0 || self.negative_ratio == 0 {
            return bad("trees and negative_ratio must be positive");
        }
        if self.per_run_forest && self.trees < self.rounds {
            return bad("per_run_forest needs at least one tree per round");
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        if let (Some(i), Some(t)) = (&self.interactions, &self.icm) {
            kv("interactions", i.display().to_string());
            kv("icm", t.display().to_string());
        }
        kv("synthetic", self.synthetic.clone());
        kv("synthetic_seed", self.synthetic_seed.to_string());
        kv("svd_rank", self.svd_rank.to_string());
        kv("svd_oversample", self.svd_oversample.to_string());
        kv("svd_power_iters", self.svd_power_iters.to_string());
        kv("clusters", self.clusters.to_string());
        kv("kmeans_batch", self.kmeans_batch.to_string());
        kv("kmeans_iters", self.kmeans_iters.to_string());
        kv("atoms", self.atoms.to_string());
        kv("lambda", self.lambda.map_or("auto".to_string(), |l| format!("{l:?}")));
        kv("dict_epochs", self.dict_epochs.to_string());
        kv("dict_batch", self.dict_batch.to_string());
        kv("rounds", self.rounds.to_string());
        kv("bootstrap_fraction", format!("{:?}", self.bootstrap_fraction));
        kv("ndcg_cutoff", self.ndcg_cutoff.to_string());
        kv("k_top", self.k_top.to_string());
        kv("budget", self.budget.to_string());
        kv("penalty", format!("{:?}", self.penalty));
        kv("qubo_form", self.qubo_form.name().to_string());
        kv("qaoa_depth", self.qaoa_depth.to_string());
        kv("qaoa_shots", self.qaoa_shots.to_string());
        kv("qaoa_iters", self.qaoa_iters.to_string());
        kv("qaoa_final_shots", self.qaoa_final_shots.to_string());
        kv("qaoa_pool_samples", self.qaoa_pool_samples.to_string());
        kv("qaoa_qubits", self.qaoa_qubits.to_string());
        kv("trees", self.trees.to_string());
        kv("tree_depth", self.tree_depth.to_string());
        kv("min_leaf", self.min_leaf.to_string());
        kv("per_run_forest", self.per_run_forest.to_string());
        kv("negative_ratio", self.negative_ratio.to_string());
        kv("eval_negatives", self.eval_negatives.to_string());
        s
    }
}
