use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;

use qsrf::corpus::{write_interactions, write_tag_matrix};
use qsrf::pipeline::{mean_stderr, repeat_seed, run_pipeline, write_artifacts, PipelineConfig};
use qsrf::qaoa::{self, QaoaConfig};
use qsrf::qubo::{brute_force_minimum, build_qubo_form, QuboForm};
use qsrf::synthetic::{generate_corpus, uniform_weights, CorpusShape};

#[derive(Parser)]
#[command(
    name = "qsrf",
    version,
    about = "Budgeted atom selection and bagged-tree recommendation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full pipeline.
    Run(RunArgs),
    /// Compare QAOA extraction with exhaustive search on random weights.
    OracleQubo(OracleArgs),
    /// Time one QAOA solve.
    BenchQaoa(BenchArgs),
    /// Write a synthetic corpus and a config pointing at it.
    GenSynthetic(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, default_value = "qsrf-out")]
    out: PathBuf,
    #[arg(long)]
    interactions: Option<PathBuf>,
    #[arg(long)]
    icm: Option<PathBuf>,
    #[arg(long)]
    svd_rank: Option<usize>,
    #[arg(long)]
    svd_power_iters: Option<usize>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    kmeans_batch: Option<usize>,
    #[arg(long)]
    kmeans_iters: Option<usize>,
    #[arg(long)]
    bootstrap_fraction: Option<f64>,
    #[arg(long)]
    k_top: Option<usize>,
    #[arg(long)]
    qaoa_depth: Option<usize>,
    #[arg(long)]
    qaoa_shots: Option<usize>,
    #[arg(long)]
    qaoa_iters: Option<usize>,
    #[arg(long)]
    qaoa_qubits: Option<usize>,
    /// Any config key, as `key=value`; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 1e3)]
    penalty: f64,
    #[arg(long, default_value = "exact")]
    form: String,
    #[arg(long, default_value_t = 10)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 20)]
    qubits: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 128)]
    shots: usize,
    #[arg(long, default_value_t = 150)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenArgs {
    /// `small`, `icm150` or `icm500`.
    #[arg(long, default_value = "small")]
    shape: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn run(a: RunArgs) -> qsrf::Result<()> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let overrides: [(&str, Option<String>); 14] = [
        ("seed", a.seed.map(|v| v.to_string())),
        ("interactions", a.interactions.map(|v| v.display().to_string())),
        ("icm", a.icm.map(|v| v.display().to_string())),
        ("svd_rank", a.svd_rank.map(|v| v.to_string())),
        ("svd_power_iters", a.svd_power_iters.map(|v| v.to_string())),
        ("clusters", a.clusters.map(|v| v.to_string())),
        ("kmeans_batch", a.kmeans_batch.map(|v| v.to_string())),
        ("kmeans_iters", a.kmeans_iters.map(|v| v.to_string())),
        ("bootstrap_fraction", a.bootstrap_fraction.map(|v| v.to_string())),
        ("k_top", a.k_top.map(|v| v.to_string())),
        ("qaoa_depth", a.qaoa_depth.map(|v| v.to_string())),
        ("qaoa_shots", a.qaoa_shots.map(|v| v.to_string())),
        ("qaoa_iters", a.qaoa_iters.map(|v| v.to_string())),
        ("qaoa_qubits", a.qaoa_qubits.map(|v| v.to_string())),
    ];
    for (k, v) in overrides {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    for kv in &a.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| qsrf::Error::Param(format!("--set expects key=value, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;

    let master = cfg.seed;
    let mut rows: Vec<[f64; 4]> = Vec::new();
    for m in 0..a.repeats.max(1) {
        let mut c = cfg.clone();
        c.seed = repeat_seed(master, m);
        let t = Instant::now();
        let art = run_pipeline(&c)?;
        write_artifacts(&a.out, m, &cfg, &art)?;
        let r = &art.test;
        println!(
            "repeat {m} seed {}: nDCG@10 macro {:.4} micro {:.4}  AUC {:.4}  log-loss {:.4}  atoms {:?}  ({:.1}s)",
            c.seed,
            r.macro_ndcg_at_10.mean,
            r.micro_ndcg_at_10,
            r.roc_auc,
            r.log_loss,
            art.selection.final_atoms,
            t.elapsed().as_secs_f64()
        );
        rows.push([r.macro_ndcg_at_10.mean, r.micro_ndcg_at_10, r.roc_auc, r.log_loss]);
    }
    if rows.len() > 1 {
        for (i, name) in ["nDCG@10 macro", "nDCG@10 micro", "AUC", "log-loss"].iter().enumerate() {
            let col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            let (mean, se) = mean_stderr(&col);
            println!("{name}: {mean:.4} ± {se:.4}");
        }
    }
    info!("artifacts in {}", a.out.display());
    Ok(())
}

fn oracle(a: OracleArgs) -> qsrf::Result<()> {
    let form = QuboForm::parse(&a.form).ok_or_else(|| qsrf::Error::Param(format!("unknown form `{}`", a.form)))?;
    let cfg = QaoaConfig::default();
    let mut close = 0;
    for t in 0..a.instances {
        let w = uniform_weights(a.n, a.seed + t as u64);
        let q = build_qubo_form(&w, a.k, a.penalty, form)?;
        let (best, e_min) = brute_force_minimum(&q)?;
        let out = qaoa::solve(&q, &w, a.k, &cfg, a.seed + t as u64)?;
        let gap = (out.mask_energy - e_min).abs() / e_min.abs().max(f64::MIN_POSITIVE);
        if gap <= 0.01 {
            close += 1;
        }
        println!(
            "{t}\toptimum {best} {e_min:.6}\tqaoa {} {:.6}\tgap {gap:.4}\tfallback {}",
            out.mask, out.mask_energy, out.fallback
        );
    }
    println!("within 1%: {close}/{}", a.instances);
    Ok(())
}

fn bench(a: BenchArgs) -> qsrf::Result<()> {
    let w = uniform_weights(a.qubits, a.seed);
    let q = build_qubo_form(&w, a.k, 1e3, QuboForm::Exact)?;
    let cfg = QaoaConfig {
        depth: a.depth,
        shots: a.shots,
        iterations: a.iters,
        ..QaoaConfig::default()
    };
    let t = Instant::now();
    let out = qaoa::solve(&q, &w, a.k, &cfg, a.seed)?;
    println!(
        "{} qubits, depth {}, {} iterations: {:.2}s; best expectation {:.4}; mask {} energy {:.6}",
        a.qubits,
        a.depth,
        a.iters,
        t.elapsed().as_secs_f64(),
        out.best_expectation,
        out.mask,
        out.mask_energy
    );
    Ok(())
}

fn generate(a: GenArgs) -> qsrf::Result<()> {
    let shape =
        CorpusShape::by_name(&a.shape).ok_or_else(|| qsrf::Error::Param(format!("unknown shape `{}`", a.shape)))?;
    let c = generate_corpus(shape, a.seed)?;
    std::fs::create_dir_all(&a.out)?;
    write_interactions(&c.log, &a.out.join("interactions.tsv"))?;
    write_tag_matrix(&c.tags, &a.out.join("icm.tsv"))?;
    let cfg = PipelineConfig {
        interactions: Some("interactions.tsv".into()),
        icm: Some("icm.tsv".into()),
        ..PipelineConfig::default()
    };
    std::fs::write(a.out.join("config.txt"), cfg.to_text())?;
    println!(
        "{} users, {} items, {} interactions, {} tags -> {}",
        c.log.n_users(),
        c.log.n_items(),
        c.log.len(),
        c.tags.n_tags(),
        a.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => run(a),
        Cmd::OracleQubo(a) => oracle(a),
        Cmd::BenchQaoa(a) => bench(a),
        Cmd::GenSynthetic(a) => generate(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
