//! Subcommands of the `nsm` tool. Every output is a pure function of the
//! flags and input files.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nsm_core::ann::{default_nlist, neighbor_table, IvfIndex, DEFAULT_NPROBE};
use nsm_core::corpusfreq::{count_corpus, freq_scores};
use nsm_core::evalstats::{
    auc_sweep, default_k_grid, evaluate, format_auc_table, tune_radius, EvalReport,
    RatingsTable, SplitSpec, DEFAULT_OMEGAS,
};
use nsm_core::nsm::{format_scores, load_scores, score_queries, NeighborTable};
use nsm_core::synthgen::{generate, Background, GeometricMixture, MixtureSpec};
use nsm_core::vecstore::{
    detect_format, load_collection, load_queries, normalize, save_collection, save_queries,
    CollectionFormat, LabeledQuerySet, Metric, VectorCollection,
};

pub const INDEX_FILE: &str = "index.ivf";
pub const TABLE_FILE: &str = "neighbors.nnt";
pub const REPORT_FILE: &str = "report.tsv";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, Parser)]
#[command(name = "nsm", version, about = "Neighborhood stability scoring and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an IVF index and precompute the nearest-neighbor table.
    Build(BuildArgs),
    /// Score labeled queries at a fixed radius.
    Score(ScoreArgs),
    /// Correlate scores with ratings over seeded validation/test trials.
    Eval(EvalArgs),
    /// ROC-AUC over rating thresholds, one table per margin.
    Auc(AucArgs),
    /// Evaluate the corpus word-frequency baseline.
    Freq(FreqArgs),
    /// Generate a synthetic mixture with rated cluster-center queries.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub collection: PathBuf,
    #[arg(long, default_value_t = Metric::Cosine)]
    pub metric: Metric,
    /// Default: 8 * ceil(sqrt(count)), capped at count.
    #[arg(long)]
    pub nlist: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_NPROBE)]
    pub nprobe: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Collection, index and table used to score queries.
#[derive(Debug, Args)]
pub struct Pipeline {
    #[arg(long)]
    pub collection: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long, default_value_t = Metric::Cosine)]
    pub metric: Metric,
    #[arg(long, default_value_t = DEFAULT_NPROBE)]
    pub nprobe: usize,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub pipeline: Pipeline,
    #[arg(long)]
    pub k: usize,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long = "val-frac", default_value_t = 0.2)]
    pub val_frac: f64,
}

impl SplitArgs {
    pub fn spec(&self) -> SplitSpec {
        SplitSpec {
            seed: self.seed,
            validation_fraction: self.val_frac,
            trials: self.trials,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    /// Precomputed score TSV. Without it, scores come from the pipeline flags.
    #[arg(long, conflicts_with_all = ["collection", "index", "table", "queries"])]
    pub scores: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: Pipeline,
    /// Fixed radius; skips tuning.
    #[arg(long, conflicts_with = "k_grid")]
    pub k: Option<usize>,
    /// Radius grid as `start:end:step` or a comma list. Default 64:4096:64.
    #[arg(long = "k-grid", value_parser = parse_k_grid)]
    pub k_grid: Option<KGrid>,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Output directory; summary goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AucArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub ratings: PathBuf,
    /// Comma-separated thresholds. Default: every distinct rating.
    #[arg(long, value_parser = parse_f64_list)]
    pub thetas: Option<FloatList>,
    /// Comma-separated margins.
    #[arg(long, value_parser = parse_f64_list)]
    pub omega: Option<FloatList>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FreqArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub ratings: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Output directory; summary goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 40)]
    pub clusters: usize,
    #[arg(long = "cluster-size", default_value_t = 1000)]
    pub cluster_size: usize,
    #[arg(long = "sigma-min", default_value_t = 0.01)]
    pub sigma_min: f64,
    #[arg(long = "sigma-max", default_value_t = 0.7)]
    pub sigma_max: f64,
    #[arg(long, default_value_t = 10_000)]
    pub background: usize,
    #[arg(long, default_value_t = 1.0)]
    pub extent: f64,
    #[arg(long = "center-radius", default_value_t = nsm_core::synthgen::DEFAULT_CENTER_RADIUS)]
    pub center_radius: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = Metric::Cosine)]
    pub metric: Metric,
    /// `fvecs` or `raw`.
    #[arg(long, default_value = "fvecs")]
    pub format: CollectionFormat,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Comma-separated floats.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatList(pub Vec<f64>);

/// Radius grid flag value.
#[derive(Debug, Clone, PartialEq)]
pub struct KGrid(pub Vec<usize>);

pub fn parse_f64_list(s: &str) -> std::result::Result<FloatList, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number {t:?}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err("values must be finite".into());
    }
    Ok(FloatList(v))
}

pub fn parse_k_grid(s: &str) -> std::result::Result<KGrid, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad radius {t:?}"));
    let grid: Vec<usize> = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, step] = parts[..] else {
            return Err(format!("expected start:end:step, got {s:?}"));
        };
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if step == 0 || a > b {
            return Err(format!("empty or invalid range {s:?}"));
        }
        (a..=b).step_by(step).collect()
    } else {
        s.split(',').map(num).collect::<std::result::Result<_, _>>()?
    };
    if grid.is_empty() || grid.contains(&0) {
        return Err("radius grid must be non-empty and positive".into());
    }
    Ok(KGrid(grid))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Build(a) => cmd_build(&a),
        Command::Score(a) => cmd_score(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Auc(a) => cmd_auc(&a),
        Command::Freq(a) => cmd_freq(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

/// Reads a collection in either format, normalizing it for cosine.
pub fn load_vectors(path: &Path, metric: Metric) -> Result<Arc<VectorCollection>> {
    let format = detect_format(path)?;
    let c = load_collection(path, format)?.with_metric(metric);
    let c = if metric == Metric::Cosine {
        normalize(&c).with_context(|| format!("normalizing {}", path.display()))?
    } else {
        c
    };
    Ok(Arc::new(c))
}

fn load_query_set(path: &Path, metric: Metric) -> Result<LabeledQuerySet> {
    let q = load_queries(path)?;
    Ok(if metric == Metric::Cosine {
        q.normalized()
            .with_context(|| format!("normalizing {}", path.display()))?
    } else {
        q
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_build(a: &BuildArgs) -> Result<()> {
    let c = load_vectors(&a.collection, a.metric)?;
    let nlist = a.nlist.unwrap_or_else(|| default_nlist(c.len()));
    let index = IvfIndex::build(c, nlist, a.seed)
        .with_context(|| format!("indexing {}", a.collection.display()))?;
    let table = neighbor_table(&index.probe(a.nprobe))
        .with_context(|| format!("neighbor table for {}", a.collection.display()))?;
    create_dir(&a.out)?;
    index.save(&a.out.join(INDEX_FILE))?;
    table.save(&a.out.join(TABLE_FILE))?;
    Ok(())
}

struct Loaded {
    index: IvfIndex,
    table: NeighborTable,
    queries: LabeledQuerySet,
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    match p {
        Some(p) => Ok(p),
        None => bail!("--{flag} is required"),
    }
}

impl Pipeline {
    fn load(&self) -> Result<Loaded> {
        let cpath = require(&self.collection, "collection")?;
        let ipath = require(&self.index, "index")?;
        let tpath = require(&self.table, "table")?;
        let qpath = require(&self.queries, "queries")?;
        let c = load_vectors(cpath, self.metric)?;
        let index = IvfIndex::load(ipath, c)?;
        let table = NeighborTable::load(tpath)?;
        let queries = load_query_set(qpath, self.metric)?;
        Ok(Loaded {
            index,
            table,
            queries,
        })
    }
}

pub fn cmd_score(a: &ScoreArgs) -> Result<()> {
    let l = a.pipeline.load()?;
    let scores = score_queries(&l.queries, &l.index, &l.table, a.k, a.pipeline.nprobe)?;
    let text = format_scores(&scores);
    match &a.out {
        Some(p) => write(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_report(report: &EvalReport, extra: &str, out: &Option<PathBuf>) -> Result<()> {
    let summary = format!("{}{extra}", report.summary());
    match out {
        Some(dir) => {
            create_dir(dir)?;
            write(&dir.join(REPORT_FILE), &report.to_tsv())?;
            write(&dir.join(SUMMARY_FILE), &summary)
        }
        None => {
            print!("{summary}");
            Ok(())
        }
    }
}

pub fn eval_report(a: &EvalArgs) -> Result<EvalReport> {
    let ratings = RatingsTable::load(&a.ratings)?;
    let split = a.split.spec();
    if let Some(path) = &a.scores {
        let preds: Vec<(String, f64)> = load_scores(path)?
            .into_iter()
            .map(|s| {
                let alpha = s.alpha();
                (s.label, alpha)
            })
            .collect();
        return Ok(evaluate(&preds, &ratings, &split)?);
    }
    let l = a.pipeline.load()?;
    if let Some(k) = a.k {
        let scores = score_queries(&l.queries, &l.index, &l.table, k, a.pipeline.nprobe)?;
        let preds: Vec<(String, f64)> = scores
            .iter()
            .map(|s| (s.label.clone(), s.alpha()))
            .collect();
        return Ok(evaluate(&preds, &ratings, &split)?);
    }
    let grid = a.k_grid.clone().map_or_else(default_k_grid, |g| g.0);
    let search = l.index.probe(a.pipeline.nprobe);
    Ok(tune_radius(
        &l.queries, &ratings, &search, &l.table, &grid, &split,
    )?)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let report = eval_report(a)?;
    emit_report(&report, "", &a.out)
}

/// File name of the AUC table for margin `omega`.
pub fn auc_file_name(omega: f64) -> String {
    format!("auc_omega_{omega}.tsv")
}

pub fn cmd_auc(a: &AucArgs) -> Result<()> {
    let scores = load_scores(&a.scores)?;
    let ratings = RatingsTable::load(&a.ratings)?;
    let thetas = match &a.thetas {
        Some(t) => t.0.clone(),
        None => {
            let mut v = ratings.values();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        }
    };
    let omegas = a.omega.clone().map_or_else(|| DEFAULT_OMEGAS.to_vec(), |o| o.0);
    create_dir(&a.out)?;
    for omega in omegas {
        let rows = auc_sweep(&scores, &ratings, &thetas, omega)
            .with_context(|| format!("margin {omega}"))?;
        write(&a.out.join(auc_file_name(omega)), &format_auc_table(&rows))?;
    }
    Ok(())
}

pub const COUNTS_FILE: &str = "counts.tsv";

pub fn cmd_freq(a: &FreqArgs) -> Result<()> {
    let table = count_corpus(&a.corpus)?;
    let ratings = RatingsTable::load(&a.ratings)?;
    let labels: Vec<String> = ratings.entries().iter().map(|e| e.0.clone()).collect();
    let counts = freq_scores(&table, &labels);
    // labels the corpus never mentions cannot be scored
    let preds: Vec<(String, f64)> = labels
        .into_iter()
        .zip(counts)
        .filter(|(_, n)| *n > 0.0)
        .collect();
    let report = evaluate(&preds, &ratings, &a.split.spec())
        .with_context(|| format!("frequency baseline from {}", a.corpus.display()))?;
    let extra = format!("corpus tokens {}\n", table.total_tokens());
    emit_report(&report, &extra, &a.out)?;
    if let Some(dir) = &a.out {
        table.save(&dir.join(COUNTS_FILE))?;
    }
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let spec = MixtureSpec::geometric(&GeometricMixture {
        dim: a.dim,
        clusters: a.clusters,
        cluster_size: a.cluster_size,
        sigma_min: a.sigma_min,
        sigma_max: a.sigma_max,
        background: Background {
            count: a.background,
            extent: a.extent,
        },
        center_radius: a.center_radius,
        seed: a.seed,
        metric: a.metric,
    })?;
    let data = generate(&spec)?;
    create_dir(&a.out)?;
    let name = match a.format {
        CollectionFormat::Fvecs => "collection.fvecs",
        CollectionFormat::Raw => "collection.bin",
    };
    save_collection(&data.collection, &a.out.join(name), a.format)?;
    save_queries(&data.queries, &a.out.join("queries.tsv"))?;
    data.ratings.save(&a.out.join("ratings.tsv"))?;
    Ok(())
}
