//! End-to-end driver: sketch, cluster, learn the atom pool, run the
//! selection rounds, fit the forest and score the held-out splits.

mod config;
mod eval;
mod rounds;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use log::info;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::cluster::{minibatch_kmeans, KMeansParams};
use crate::corpus::{load_interactions, load_tag_matrix, stratified_split, tfidf, InteractionLog, TagMatrix};
use crate::dict::{concat_dictionary, learn_subdictionary, DictParams, Dictionary, SparseCodes};
use crate::error::{Error, Result, StageExt};
use crate::forest::{ForestParams, TreeParams};
use crate::metrics::{MetricReport, SummaryStats};
use crate::seed;
use crate::sketch::{energy_captured, randomized_svd, SvdParams};
use crate::synthetic::{generate_corpus, CorpusShape};

pub use config::PipelineConfig;
pub use eval::{evaluate, fit_ensemble, mean_stderr, pair_feature, profile, training_rows, Ensemble};
pub use rounds::{aggregate_selections, run_bootstrap_round, run_selection, RoundOutcome, Selection, SelectionInput};

/// Everything one seeded run produces.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub seed: u64,
    pub energy_captured: f64,
    /// Per-cluster reconstruction error of the atom pool.
    pub cluster_mse: Vec<f64>,
    pub pool_size: usize,
    pub selection: Selection,
    /// Item codes over the final atoms, one row per item.
    pub final_codes: DMatrix<f64>,
    pub valid: MetricReport,
    pub test: MetricReport,
    /// Stage name and seconds, in execution order.
    pub timings: Vec<(String, f64)>,
}

/// Serialised per-repeat record; holds nothing time-dependent.
#[derive(Debug, Serialize)]
struct MetricsRecord<'a> {
    repeat: usize,
    seed: u64,
    test: &'a MetricReport,
    valid: &'a MetricReport,
    final_atoms: &'a [usize],
    energy_captured: f64,
    cluster_mse: SummaryStats,
}

struct Clock {
    last: Instant,
    laps: Vec<(String, f64)>,
}

impl Clock {
    fn new() -> Self {
        Self {
            last: Instant::now(),
            laps: Vec::new(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        let secs = (now - self.last).as_secs_f64();
        info!("{stage}: {secs:.2}s");
        self.laps.push((stage.to_string(), secs));
        self.last = now;
    }
}

pub fn load_data(cfg: &PipelineConfig) -> Result<(InteractionLog, TagMatrix)> {
    match (&cfg.interactions, &cfg.icm) {
        (Some(i), Some(t)) => {
            let log = load_interactions(i)?;
            let tags = load_tag_matrix(t)?;
            if tags.n_items() != log.n_items() {
                return Err(Error::Dimension {
                    expected: log.n_items(),
                    got: tags.n_items(),
                });
            }
            Ok((log, tags))
        }
        _ => {
            let shape = CorpusShape::by_name(&cfg.synthetic)
                .ok_or_else(|| Error::param(format!("unknown synthetic corpus `{}`", cfg.synthetic)))?;
            let c = generate_corpus(shape, cfg.synthetic_seed)?;
            Ok((c.log, c.tags))
        }
    }
}

/// Atom pool over sketch space with every item coded by its own cluster's
/// sub-dictionary.
pub struct AtomPool {
    pub dictionary: Dictionary,
    pub codes: SparseCodes,
    pub lambda: f64,
    pub cluster_mse: Vec<f64>,
}

pub fn learn_pool(sketch: &DMatrix<f64>, cfg: &PipelineConfig, seed: u64) -> Result<AtomPool> {
    let kp = KMeansParams {
        clusters: cfg.clusters,
        batch: cfg.kmeans_batch,
        iters: cfg.kmeans_iters,
    };
    let clustering = minibatch_kmeans(sketch, kp, seed::derive(seed, &[seed::stage::CLUSTER])).stage("cluster")?;
    let dp = DictParams {
        atoms: cfg.atoms,
        lambda: cfg.lambda,
        epochs: cfg.dict_epochs,
        batch: cfg.dict_batch,
    };
    let members: Vec<Vec<usize>> = (0..cfg.clusters).map(|c| clustering.members(c)).collect();
    let subs = members
        .par_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(c, m)| learn_subdictionary(&sketch.select_rows(m), dp, c, seed).map(|s| (c, s)))
        .collect::<Result<Vec<_>>>()
        .stage("dictionary")?;
    let dictionary = concat_dictionary(&subs.iter().map(|(_, s)| s.dictionary.clone()).collect::<Vec<_>>())?;
    let mut rows = vec![Vec::new(); sketch.nrows()];
    let mut offset = 0;
    for (c, s) in &subs {
        for (k, &item) in members[*c].iter().enumerate() {
            rows[item] = s.codes.rows[k].iter().map(|&(j, v)| (j + offset as u32, v)).collect();
        }
        offset += s.dictionary.n_atoms();
    }
    let lambda = subs.iter().map(|(_, s)| s.lambda).sum::<f64>() / subs.len() as f64;
    Ok(AtomPool {
        codes: SparseCodes {
            n_atoms: dictionary.n_atoms(),
            rows,
        },
        dictionary,
        lambda,
        cluster_mse: subs.iter().map(|(_, s)| s.mse).collect(),
    })
}

/// One seeded end-to-end run.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let seed = cfg.seed;
    let mut clock = Clock::new();
    let (log, tags) = load_data(cfg).stage("load")?;
    let split = stratified_split(&log, seed::derive(seed, &[seed::stage::SPLIT]));
    clock.lap("load");

    let x = tfidf(&tags);
    let svd = SvdParams {
        rank: cfg.svd_rank,
        oversample: cfg.svd_oversample,
        power_iters: cfg.svd_power_iters,
    };
    let sk = randomized_svd(x.matrix(), svd, seed::derive(seed, &[seed::stage::SKETCH])).stage("sketch")?;
    let captured = energy_captured(&sk, x.matrix()).unwrap_or(0.0);
    clock.lap("sketch");

    let pool = learn_pool(&sk.sketch, cfg, seed)?;
    clock.lap("dictionary");

    let view = split.learning();
    let input = SelectionInput {
        dictionary: &pool.dictionary,
        codes: &pool.codes,
        rows: &sk.sketch,
        view,
        lambda: pool.lambda,
    };
    let selection = run_selection(cfg, input, seed)?;
    clock.lap("selection");

    let final_codes = &sk.sketch * &selection.dictionary.atoms;
    let member_codes = if cfg.per_run_forest {
        selection.rounds.iter().map(|r| &sk.sketch * &r.tuned_atoms).collect()
    } else {
        vec![final_codes.clone()]
    };
    let n_users = split.n_users();
    let train: Vec<&[u32]> = (0..n_users).map(|u| view.train.items(u)).collect();
    let valid: Vec<&[u32]> = (0..n_users).map(|u| view.valid.items(u)).collect();
    let fp = ForestParams {
        trees: cfg.trees,
        tree: TreeParams {
            max_depth: cfg.tree_depth,
            min_leaf: cfg.min_leaf,
        },
        features_per_tree: None,
        bootstrap: true,
    };
    let model = fit_ensemble(member_codes, &train, &valid, fp, cfg.negative_ratio, seed).stage("forest")?;
    clock.lap("forest");

    let n_items = split.n_items();
    let known_valid: Vec<Vec<u32>> = train.iter().map(|t| t.to_vec()).collect();
    let eval_seed = seed::derive(seed, &[seed::stage::EVAL]);
    let valid_report = evaluate(
        &model,
        &known_valid,
        &valid,
        n_items,
        cfg.ndcg_cutoff,
        cfg.eval_negatives,
        cfg.negative_ratio,
        seed::derive(eval_seed, &[0]),
    )
    .stage("validate")?;
    let known_test: Vec<Vec<u32>> = (0..n_users)
        .map(|u| {
            let mut k = [train[u], valid[u]].concat();
            k.sort_unstable();
            k
        })
        .collect();
    let test_sets: Vec<&[u32]> = (0..n_users).map(|u| split.test().items(u)).collect();
    let mut test_report = evaluate(
        &model,
        &known_test,
        &test_sets,
        n_items,
        cfg.ndcg_cutoff,
        cfg.eval_negatives,
        cfg.negative_ratio,
        seed::derive(eval_seed, &[1]),
    )
    .stage("evaluate")?;
    clock.lap("evaluate");
    test_report.wall_clock_seconds = clock.laps.iter().cloned().collect::<BTreeMap<_, _>>();

    Ok(RunArtifacts {
        seed,
        energy_captured: captured,
        cluster_mse: pool.cluster_mse,
        pool_size: pool.dictionary.n_atoms(),
        selection,
        final_codes,
        valid: valid_report,
        test: test_report,
        timings: clock.laps,
    })
}

/// Seed of repeat `m`; repeat 0 uses the master seed itself.
pub fn repeat_seed(master: u64, m: usize) -> u64 {
    if m == 0 {
        master
    } else {
        seed::derive(master, &[seed::stage::REPEAT, m as u64])
    }
}

fn append(path: &Path, text: &str, header: &str) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        f.write_all(header.as_bytes())?;
    }
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Append one repeat's records to the files in `out`.
pub fn write_artifacts(out: &Path, repeat: usize, cfg: &PipelineConfig, art: &RunArtifacts) -> Result<()> {
    fs::create_dir_all(out)?;
    if repeat == 0 {
        fs::write(out.join("config.txt"), cfg.to_text())?;
        for f in ["metrics.json", "energy_trace.tsv", "selected_atoms.tsv", "timings.tsv"] {
            let p = out.join(f);
            if p.exists() {
                fs::remove_file(p)?;
            }
        }
    }
    let rec = MetricsRecord {
        repeat,
        seed: art.seed,
        test: &art.test,
        valid: &art.valid,
        final_atoms: &art.selection.final_atoms,
        energy_captured: art.energy_captured,
        cluster_mse: SummaryStats::of(&art.cluster_mse),
    };
    append(&out.join("metrics.json"), &(serde_json::to_string(&rec)? + "\n"), "")?;

    let rounds = cfg.rounds;
    let mut trace = String::new();
    let mut sel = String::new();
    for o in &art.selection.rounds {
        let run = repeat * rounds + o.round;
        for (t, e) in o.trace.iter().enumerate() {
            let _ = writeln!(trace, "{run}\t{t}\t{e:?}");
        }
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let _ = writeln!(
            sel,
            "{run}\t{}\t{}\t{}\t{}",
            join(&o.candidates),
            o.mask,
            join(&o.selected),
            o.fallback
        );
    }
    let finals: Vec<String> = art.selection.final_atoms.iter().map(|x| x.to_string()).collect();
    let _ = writeln!(sel, "final:{repeat}\t-\t-\t{}\t-", finals.join(","));
    append(&out.join("energy_trace.tsv"), &trace, "run\titer\texpectation\n")?;
    append(
        &out.join("selected_atoms.tsv"),
        &sel,
        "run\tcandidates\tmask\tselected\tfallback\n",
    )?;

    let mut tm = String::new();
    for (stage, s) in &art.timings {
        let _ = writeln!(tm, "{repeat}\t{stage}\t{s:.3}");
    }
    append(&out.join("timings.tsv"), &tm, "repeat\tstage\tseconds\n")?;
    Ok(())
}
