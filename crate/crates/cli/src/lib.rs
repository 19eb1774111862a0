//! `entailrank` command line: ingest, score, rank, evaluate, grid search,
//! ablation and analysis over HotpotQA-style data.

pub mod manifest;

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use entailrank::config::{BackendKind, EngineConfig};
use entailrank::corpus::{self, Dataset, IngestOptions, TextVariant};
use entailrank::engine::{Engine, QuestionOutcome, RunSummary};
use entailrank::entities::{EntityIndex, EntityMention};
use entailrank::eval::{self, MetricsReport, StrategyMetrics};
use entailrank::fusion::{FusionConfig, PairOrder};
use entailrank::ranking::{Ranking, Strategy};
use entailrank::scorer::ScorerKind;
use entailrank::synth::{self, SynthConfig};

use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "entailrank", version, about = "Ensemble evidence retrieval for multi-hop QA")]
pub struct Cli {
    /// Engine configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for question-level parallelism.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Backend {
    Proxy,
    Remote,
    Cache,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SetB {
    Is,
    Sts,
}

#[derive(Debug, Clone, Args, Default)]
pub struct ScorerArgs {
    /// Dense scorer backend.
    #[arg(long, value_enum)]
    pub backend: Option<Backend>,
    /// Scoring service URL for the remote backend.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Score cache (JSONL), read and written through.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct FusionArgs {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Concatenate the inference-set sentence first.
    #[arg(long)]
    pub b_first: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize a HotpotQA distractor file into JSONL.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        bridge_only: bool,
        /// Label the text as coreference-resolved upstream.
        #[arg(long)]
        resolved: bool,
    },
    /// Write a seeded synthetic bridge-question dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        questions: usize,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        trap_rate: f64,
    },
    /// Score every candidate with both dense scorers into the cache.
    Score {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        scorer: ScorerArgs,
    },
    /// Rank every question's pool with one strategy.
    Rank {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        method: Strategy,
        #[arg(long)]
        out: PathBuf,
        /// Signal whose top-K forms the inference set.
        #[arg(long, value_enum)]
        set_b: Option<SetB>,
        #[command(flatten)]
        scorer: ScorerArgs,
        #[command(flatten)]
        fusion: FusionArgs,
    },
    /// Compute P@k, MAP and R@k for one or more rankings files.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        rankings: Vec<PathBuf>,
        /// Put several rankings files side by side in one table.
        #[arg(long)]
        compare: bool,
        /// Output prefix; writes .txt, .json and .csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid search SimCom's alpha and beta on a deterministic subsample.
    GridSearch {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        fraction: f64,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0, 3.0, 4.0, 5.0])]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0, 3.0])]
        betas: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        scorer: ScorerArgs,
    },
    /// EARnest against EARnest with the inference set built from STS.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        /// Output prefix; writes .txt, .json and .csv.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        scorer: ScorerArgs,
        #[command(flatten)]
        fusion: FusionArgs,
    },
    /// Dump the entity mentions used for the NEST term.
    Entities {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Complementarity of the base rankers and pair-set sizes per K.
    Analyze {
        #[arg(long)]
        data: PathBuf,
        /// Output prefix; writes .txt and .json.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![3, 5])]
        ks: Vec<usize>,
        #[command(flatten)]
        scorer: ScorerArgs,
    },
}

/// A required input path does not exist.
#[derive(Debug)]
pub struct MissingInput(pub PathBuf);

impl fmt::Display for MissingInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "input file not found: {}", self.0.display())
    }
}

impl std::error::Error for MissingInput {}

/// Exit status for a failed run: 2 for missing inputs, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.downcast_ref::<MissingInput>().is_some()) {
        2
    } else {
        1
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(MissingInput(path.to_path_buf()).into());
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .context("building worker pool")?;
    let config = cli.config.clone();
    pool.install(|| dispatch(cli.command, config.as_deref()))
}

fn dispatch(command: Command, config: Option<&Path>) -> Result<()> {
    match command {
        Command::Ingest { input, out, bridge_only, resolved } => cmd_ingest(&input, &out, bridge_only, resolved),
        Command::Synth { out, questions, seed, trap_rate } => cmd_synth(&out, questions, seed, trap_rate),
        Command::Score { data, scorer } => cmd_score(&data, config, &scorer),
        Command::Rank { data, method, out, set_b, scorer, fusion } => {
            cmd_rank(&data, method, &out, set_b, config, &scorer, &fusion)
        }
        Command::Evaluate { data, rankings, compare, out } => cmd_evaluate(&data, &rankings, compare, &out),
        Command::GridSearch { data, fraction, seed, alphas, betas, out, scorer } => {
            cmd_grid_search(&data, fraction, seed, &alphas, &betas, &out, config, &scorer)
        }
        Command::Ablate { data, out, scorer, fusion } => cmd_ablate(&data, &out, config, &scorer, &fusion),
        Command::Entities { data, out } => cmd_entities(&data, &out, config),
        Command::Analyze { data, out, ks, scorer } => cmd_analyze(&data, &out, &ks, config, &scorer),
    }
}

/// Config file (or defaults), then the endpoint env var, then flags.
pub fn resolve_config(path: Option<&Path>, scorer: &ScorerArgs, fusion: &FusionArgs) -> Result<EngineConfig> {
    let mut cfg = match path {
        Some(p) => {
            require(p)?;
            EngineConfig::load(p)?
        }
        None => EngineConfig::default(),
    }
    .with_env();
    if let Some(b) = scorer.backend {
        cfg.scorer.backend = match b {
            Backend::Proxy => BackendKind::Proxy,
            Backend::Remote => BackendKind::Remote,
            Backend::Cache => BackendKind::Cache,
        };
    }
    if let Some(ep) = &scorer.endpoint {
        cfg.scorer.endpoint = Some(ep.clone());
    }
    if let Some(c) = &scorer.cache {
        cfg.scorer.cache = Some(c.clone());
    }
    if let Some(k) = fusion.k {
        cfg.fusion.k = k;
    }
    if let Some(a) = fusion.alpha {
        cfg.fusion.alpha = a;
    }
    if let Some(b) = fusion.beta {
        cfg.fusion.beta = b;
    }
    if fusion.b_first {
        cfg.fusion.pair_order = PairOrder::BThenA;
    }
    if cfg.scorer.backend == BackendKind::Cache {
        if let Some(c) = &cfg.scorer.cache {
            require(c)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn build_engine(cfg: &EngineConfig) -> Result<Engine> {
    Ok(Engine::new(
        cfg.build_scorer()?,
        cfg.bm25,
        cfg.build_ner(),
        cfg.entities.fuzzy_threshold,
    ))
}

fn load_data(path: &Path) -> Result<Dataset> {
    require(path)?;
    Ok(corpus::load_dataset(path)?)
}

/// Persists the write-through cache and records scorer facts.
fn finish_scoring(engine: &Engine, cfg: &EngineConfig, m: &mut RunManifest, dense: bool) -> Result<()> {
    if dense {
        let prov = engine.provenance().to_string();
        m.provenance.insert("sts".into(), prov.clone());
        m.provenance.insert("is".into(), prov);
        m.checkpoints = engine.scorer().checkpoints();
        m.note("backend_calls", engine.scorer().backend_calls());
    }
    m.provenance.insert("bm25".into(), "computed".into());
    if let (Some(cache), Some(path)) = (engine.scorer().cache(), &cfg.scorer.cache) {
        if cfg.scorer.backend != BackendKind::Cache {
            cache.save(path)?;
            m.output(path);
        }
    }
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_rankings(path: &Path, rankings: &[Ranking]) -> Result<()> {
    write_jsonl(path, rankings)
}

pub fn read_rankings(path: &Path) -> Result<Vec<Ranking>> {
    require(path)?;
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), n + 1))?);
    }
    Ok(out)
}

fn cmd_ingest(input: &Path, out: &Path, bridge_only: bool, resolved: bool) -> Result<()> {
    require(input)?;
    let mut m = RunManifest::start("ingest");
    m.input(input);
    let opts = IngestOptions {
        text_variant: if resolved { TextVariant::Resolved } else { TextVariant::Raw },
    };
    let raw = corpus::ingest_hotpot_with(input, opts)?;
    let total = raw.len();
    let ds = if bridge_only { corpus::filter_bridge(raw) } else { raw };
    ds.write_jsonl(out)?;
    m.output(out);
    let rej_path = PathBuf::from(format!("{}.rejections.jsonl", out.display()));
    write_jsonl(&rej_path, &ds.rejections)?;
    m.output(&rej_path);
    m.config = serde_json::json!({ "bridge_only": bridge_only, "text_variant": ds.text_variant });
    m.note("records_accepted", total);
    m.note("records_written", ds.len());
    m.note("records_rejected", ds.rejections.len());
    m.note("blank_sentences_dropped", ds.blank_sentences_dropped);
    m.note("filter_applied", ds.filter_applied);
    m.finish(out)?;
    println!(
        "wrote {} records to {} ({} rejected, {} after filtering)",
        ds.len(),
        out.display(),
        ds.rejections.len(),
        if bridge_only { "bridge only" } else { "no filter" }
    );
    Ok(())
}

fn cmd_synth(out: &Path, questions: usize, seed: u64, trap_rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&trap_rate) {
        bail!("--trap-rate must be in [0, 1], got {trap_rate}");
    }
    let mut m = RunManifest::start("synth");
    let cfg = SynthConfig { questions, seed, trap_rate };
    let ds = synth::generate(&cfg);
    ds.write_jsonl(out)?;
    m.output(out);
    m.config = serde_json::json!({ "questions": questions, "seed": seed, "trap_rate": trap_rate });
    m.finish(out)?;
    println!("wrote {} synthetic questions to {}", ds.len(), out.display());
    Ok(())
}

fn cmd_score(data: &Path, config: Option<&Path>, scorer: &ScorerArgs) -> Result<()> {
    let cfg = resolve_config(config, scorer, &FusionArgs::default())?;
    let Some(cache_path) = cfg.scorer.cache.clone() else {
        bail!("score needs a cache path (--cache or scorer.cache)");
    };
    if cfg.scorer.backend == BackendKind::Cache {
        bail!("score needs a live backend (proxy or remote), not the cache backend");
    }
    let ds = load_data(data)?;
    let mut m = RunManifest::start("score");
    m.input(data);
    m.config = serde_json::to_value(&cfg)?;
    let engine = build_engine(&cfg)?;
    let n = engine.warm(&ds)?;
    finish_scoring(&engine, &cfg, &mut m, true)?;
    m.note("scores", n);
    m.finish(&cache_path)?;
    println!("scored {n} (candidate, scorer) cells into {}", cache_path.display());
    Ok(())
}

fn fusion_for(method: Strategy, cfg: &FusionConfig) -> FusionConfig {
    FusionConfig {
        nest_enabled: method == Strategy::Earnest,
        ..cfg.clone()
    }
}

fn uses_dense(method: Strategy) -> bool {
    method != Strategy::Bm25
}

fn summary_notes(m: &mut RunManifest, ds: &Dataset, outcomes: &[QuestionOutcome]) {
    let s = RunSummary::of(outcomes);
    m.note("questions", s.questions);
    m.note("ear_fallbacks", s.fallbacks);
    m.note("mean_pairs_scored", s.mean_pairs_scored);
    m.note("entity_sharing_best_pairs", s.entity_sharing_best_pairs);
    m.note("text_variant", ds.text_variant);
}

#[allow(clippy::too_many_arguments)]
fn cmd_rank(
    data: &Path,
    method: Strategy,
    out: &Path,
    set_b: Option<SetB>,
    config: Option<&Path>,
    scorer: &ScorerArgs,
    fusion: &FusionArgs,
) -> Result<()> {
    let mut cfg = resolve_config(config, scorer, fusion)?;
    if let Some(b) = set_b {
        cfg.fusion.set_b_ranker = match b {
            SetB::Is => ScorerKind::Is,
            SetB::Sts => ScorerKind::Sts,
        };
    }
    cfg.fusion = fusion_for(method, &cfg.fusion);
    let ds = load_data(data)?;
    let mut m = RunManifest::start("rank");
    m.input(data);
    let engine = build_engine(&cfg)?;
    let outcomes = engine.rank_dataset(method, &ds, &cfg.fusion)?;
    let rankings: Vec<Ranking> = outcomes.iter().map(|o| o.ranking.clone()).collect();
    write_rankings(out, &rankings)?;
    m.output(out);
    m.config = serde_json::json!({ "method": method, "engine": cfg });
    finish_scoring(&engine, &cfg, &mut m, uses_dense(method))?;
    summary_notes(&mut m, &ds, &outcomes);
    m.finish(out)?;
    println!("wrote {} {method} rankings to {}", rankings.len(), out.display());
    Ok(())
}

fn report_paths(prefix: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let p = prefix.display();
    (
        PathBuf::from(format!("{p}.txt")),
        PathBuf::from(format!("{p}.json")),
        PathBuf::from(format!("{p}.csv")),
    )
}

fn write_report(report: &MetricsReport, prefix: &Path, m: &mut RunManifest) -> Result<PathBuf> {
    let (txt, json, csv) = report_paths(prefix);
    std::fs::write(&txt, report.render_table())?;
    std::fs::write(&json, serde_json::to_string_pretty(report)? + "\n")?;
    std::fs::write(&csv, report.to_csv())?;
    for p in [&txt, &json, &csv] {
        m.output(p);
    }
    Ok(json)
}

/// Row label for a rankings file: its strategy tag, disambiguated by file
/// stem when two files share a tag.
fn labels(files: &[(PathBuf, Vec<Ranking>)]) -> Vec<String> {
    let tags: Vec<String> = files
        .iter()
        .map(|(p, r)| {
            r.first()
                .map(|x| x.strategy.clone())
                .unwrap_or_else(|| p.file_stem().unwrap_or_default().to_string_lossy().into_owned())
        })
        .collect();
    tags.iter()
        .zip(files)
        .map(|(t, (p, _))| {
            if tags.iter().filter(|x| *x == t).count() > 1 {
                format!("{t}[{}]", p.file_stem().unwrap_or_default().to_string_lossy())
            } else {
                t.clone()
            }
        })
        .collect()
}

fn cmd_evaluate(data: &Path, rankings: &[PathBuf], compare: bool, out: &Path) -> Result<()> {
    if rankings.len() > 1 && !compare {
        bail!("several rankings files given; pass --compare to put them in one table");
    }
    let ds = load_data(data)?;
    let mut m = RunManifest::start("evaluate");
    m.input(data);
    let mut files = Vec::new();
    for p in rankings {
        files.push((p.clone(), read_rankings(p)?));
        m.input(p);
    }
    let names = labels(&files);
    let mut rows = Vec::new();
    let mut config = BTreeMap::new();
    let mut provenance = BTreeMap::new();
    for (name, (path, r)) in names.iter().zip(&files) {
        rows.push(eval::evaluate_strategy(&ds, name, r).with_context(|| format!("evaluating {}", path.display()))?);
        if let Some(rm) = RunManifest::beside(path)? {
            config.insert(name.clone(), rm.config);
            provenance.insert(name.clone(), rm.provenance);
        }
    }
    let mut report = MetricsReport::new(&ds, rows);
    report.config = config;
    report.provenance = provenance;
    print!("{}", report.render_table());
    let json = write_report(&report, out, &mut m)?;
    m.note("question_count", report.question_count);
    m.finish(&json)?;
    Ok(())
}

/// Sorted question ids, every `step`-th from `seed % step`, with
/// `step = ceil(1 / fraction)`.
pub fn grid_sample(ids: &[String], fraction: f64, seed: u64) -> Result<(usize, usize, Vec<String>)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        bail!("--fraction must be in (0, 1], got {fraction}");
    }
    let step = ((1.0 / fraction) - 1e-9).ceil().max(1.0) as usize;
    let offset = (seed % step as u64) as usize;
    let mut sorted = ids.to_vec();
    sorted.sort();
    let picked: Vec<String> = sorted.into_iter().skip(offset).step_by(step).collect();
    Ok((step, offset, picked))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub alpha: f64,
    pub beta: f64,
    pub map: f64,
}

/// MAP of SimCom per (alpha, beta); the first maximal cell in grid order
/// (alphas outer, betas inner) wins.
pub fn grid_search(
    engine: &Engine,
    ds: &Dataset,
    base: &FusionConfig,
    alphas: &[f64],
    betas: &[f64],
) -> Result<(Vec<GridCell>, GridCell)> {
    if alphas.is_empty() || betas.is_empty() {
        bail!("grid needs at least one alpha and one beta");
    }
    let mut surface = Vec::new();
    for &alpha in alphas {
        for &beta in betas {
            let cfg = FusionConfig { alpha, beta, ..base.clone() };
            let outcomes = engine.rank_dataset(Strategy::Simcom, ds, &cfg)?;
            let r: Vec<Ranking> = outcomes.into_iter().map(|o| o.ranking).collect();
            let map = eval::evaluate_strategy(ds, "simcom", &r)?.map;
            surface.push(GridCell { alpha, beta, map });
        }
    }
    let best = surface
        .iter()
        .fold(None::<&GridCell>, |best, c| match best {
            Some(b) if b.map >= c.map => Some(b),
            _ => Some(c),
        })
        .expect("non-empty grid")
        .clone();
    Ok((surface, best))
}

#[allow(clippy::too_many_arguments)]
fn cmd_grid_search(
    data: &Path,
    fraction: f64,
    seed: u64,
    alphas: &[f64],
    betas: &[f64],
    out: &Path,
    config: Option<&Path>,
    scorer: &ScorerArgs,
) -> Result<()> {
    let cfg = resolve_config(config, scorer, &FusionArgs::default())?;
    let ds = load_data(data)?;
    let ids: Vec<String> = ds.questions.iter().map(|q| q.question_id.clone()).collect();
    let (step, offset, picked) = grid_sample(&ids, fraction, seed)?;
    let keep: std::collections::HashSet<&str> = picked.iter().map(String::as_str).collect();
    let sample = Dataset {
        questions: ds.questions.iter().filter(|q| keep.contains(q.question_id.as_str())).cloned().collect(),
        ..ds.clone()
    };
    if sample.is_empty() {
        bail!("sample is empty for fraction {fraction} over {} questions", ds.len());
    }
    let mut m = RunManifest::start("grid-search");
    m.input(data);
    let engine = build_engine(&cfg)?;
    let (surface, best) = grid_search(&engine, &sample, &cfg.fusion, alphas, betas)?;
    let result = serde_json::json!({
        "sample": {
            "procedure": "sort question ids, take every step-th id starting at seed % step",
            "fraction": fraction,
            "seed": seed,
            "step": step,
            "offset": offset,
            "size": sample.len(),
            "question_ids": picked,
        },
        "surface": surface,
        "best": best,
    });
    std::fs::write(out, serde_json::to_string_pretty(&result)? + "\n")?;
    m.output(out);
    m.config = serde_json::to_value(&cfg)?;
    finish_scoring(&engine, &cfg, &mut m, true)?;
    m.finish(out)?;
    println!(
        "best alpha={} beta={} MAP={:.4} on {} sampled questions",
        best.alpha,
        best.beta,
        best.map,
        sample.len()
    );
    Ok(())
}

/// Full EARnest and the variant whose inference set comes from STS.
pub fn ablation(engine: &Engine, ds: &Dataset, fusion: &FusionConfig) -> Result<(StrategyMetrics, StrategyMetrics)> {
    let full = FusionConfig {
        set_b_ranker: ScorerKind::Is,
        ..fusion_for(Strategy::Earnest, fusion)
    };
    let ablated = FusionConfig {
        set_b_ranker: ScorerKind::Sts,
        ..full.clone()
    };
    let run = |cfg: &FusionConfig, name: &str| -> Result<StrategyMetrics> {
        let outcomes = engine.rank_dataset(Strategy::Earnest, ds, cfg)?;
        let r: Vec<Ranking> = outcomes.into_iter().map(|o| o.ranking).collect();
        Ok(eval::evaluate_strategy(ds, name, &r)?)
    };
    Ok((run(&full, "earnest")?, run(&ablated, "earnest[b=sts]")?))
}

fn cmd_ablate(data: &Path, out: &Path, config: Option<&Path>, scorer: &ScorerArgs, fusion: &FusionArgs) -> Result<()> {
    let cfg = resolve_config(config, scorer, fusion)?;
    let ds = load_data(data)?;
    let mut m = RunManifest::start("ablate");
    m.input(data);
    let engine = build_engine(&cfg)?;
    let (full, ablated) = ablation(&engine, &ds, &cfg.fusion)?;
    let mut report = MetricsReport::new(&ds, vec![full, ablated]);
    let mut full_cfg = fusion_for(Strategy::Earnest, &cfg.fusion);
    full_cfg.set_b_ranker = ScorerKind::Is;
    let abl_cfg = FusionConfig { set_b_ranker: ScorerKind::Sts, ..full_cfg.clone() };
    report.config.insert("earnest".into(), serde_json::to_value(&full_cfg)?);
    report.config.insert("earnest[b=sts]".into(), serde_json::to_value(&abl_cfg)?);
    let prov: BTreeMap<String, String> =
        [("sts".to_string(), engine.provenance().to_string()), ("is".to_string(), engine.provenance().to_string())].into();
    report.provenance.insert("earnest".into(), prov.clone());
    report.provenance.insert("earnest[b=sts]".into(), prov);
    print!("{}", report.render_table());
    let json = write_report(&report, out, &mut m)?;
    m.config = serde_json::to_value(&cfg)?;
    finish_scoring(&engine, &cfg, &mut m, true)?;
    m.finish(&json)?;
    Ok(())
}

#[derive(Serialize)]
struct MentionRow<'a> {
    question_id: &'a str,
    candidate_id: &'a str,
    mentions: &'a [EntityMention],
}

fn cmd_entities(data: &Path, out: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = resolve_config(config, &ScorerArgs::default(), &FusionArgs::default())?;
    let ds = load_data(data)?;
    let mut m = RunManifest::start("entities");
    m.input(data);
    let ner = cfg.build_ner();
    let mut indexes = Vec::with_capacity(ds.len());
    for q in &ds.questions {
        indexes.push(EntityIndex::build(&q.candidates, ner.as_ref(), cfg.entities.fuzzy_threshold)?);
    }
    let rows = ds.questions.iter().zip(&indexes).flat_map(|(q, idx)| {
        q.candidates.iter().map(move |c| MentionRow {
            question_id: &q.question_id,
            candidate_id: c.candidate_id.as_str(),
            mentions: idx.mentions(&c.candidate_id),
        })
    });
    write_jsonl(out, rows)?;
    m.output(out);
    m.config = serde_json::to_value(&cfg.entities)?;
    m.note("ner", ner.name());
    m.finish(out)?;
    println!("wrote entity mentions for {} questions to {}", ds.len(), out.display());
    Ok(())
}

fn cmd_analyze(data: &Path, out: &Path, ks: &[usize], config: Option<&Path>, scorer: &ScorerArgs) -> Result<()> {
    if ks.contains(&0) {
        bail!("--ks values must be >= 1");
    }
    let cfg = resolve_config(config, scorer, &FusionArgs::default())?;
    let ds = load_data(data)?;
    let mut m = RunManifest::start("analyze");
    m.input(data);
    let engine = build_engine(&cfg)?;
    let base: HashMap<_, _> = engine.base_rankings_dataset(&ds)?.into_iter().collect();
    let comp = eval::complementarity(&ds, &base, ks)?;
    let pairs = eval::pair_count_stats(&ds, &base, ks)?;
    let mut text = comp.render_table();
    text.push_str("\n    K  mean pairs  mean |A|  mean |B|\n");
    for r in &pairs {
        text.push_str(&format!("{:>5}  {:>10.2}  {:>8.2}  {:>8.2}\n", r.k, r.mean_pairs, r.mean_a, r.mean_b));
    }
    print!("{text}");
    let (txt, json, _) = report_paths(out);
    std::fs::write(&txt, &text)?;
    std::fs::write(
        &json,
        serde_json::to_string_pretty(&serde_json::json!({ "complementarity": comp, "pair_counts": pairs }))? + "\n",
    )?;
    m.output(&txt);
    m.output(&json);
    m.config = serde_json::to_value(&cfg)?;
    finish_scoring(&engine, &cfg, &mut m, true)?;
    m.finish(&json)?;
    Ok(())
}
