//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a gating criterion fails.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p nsm-cli --test acceptance -- 3 4`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nsm_core::ann::{
    default_nlist, neighbor_table, FlatSearch, IvfIndex, NeighborSearch, DEFAULT_NPROBE,
};
use nsm_core::evalstats::{auc, auc_sweep, spearman, RatingsTable, SplitSpec};
use nsm_core::nsm::{nsm_fast, nsm_naive, stability_fast, NeighborTable, NsmScore};
use nsm_core::synthgen::{generate, GeometricMixture, MixtureSpec, SyntheticData};
use nsm_core::vecstore::{normalize, Metric, VectorCollection};

// Pinned tolerances and budgets.
const C1_QUERIES: usize = 200;
const C1_BUDGET: Duration = Duration::from_secs(60);
const C2_PAIRS: usize = 1000;
const C4_QUERIES: usize = 100;
const C5_MIN_RECALL: f64 = 0.95;
const C5_QUERIES: usize = 200;
const C5_BUDGET: Duration = Duration::from_secs(300);
const C6_DATASETS: usize = 100;
const C6_TOL: f64 = 1e-12;
const C7_MIN_RHO: f64 = 0.8;
const C7_SEEDS: u64 = 10;
const C7_K: usize = 256;
const C7_BUDGET: Duration = Duration::from_secs(600);
const C8_THETA: f64 = 20.5;
const C8_MIN_SEEDS: usize = 8;
const C10_RHO: (f64, f64) = (0.45, 0.65);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gauss(r: &mut ChaCha8Rng) -> f32 {
    let u1: f64 = 1.0 - r.random::<f64>();
    let u2: f64 = r.random();
    ((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()) as f32
}

fn unit_rows(n: usize, d: usize, seed: u64) -> Arc<VectorCollection> {
    let mut r = rng(seed);
    let rows: Vec<Vec<f32>> = (0..n).map(|_| (0..d).map(|_| gauss(&mut r)).collect()).collect();
    Arc::new(normalize(&VectorCollection::from_rows(&rows, Metric::Cosine).unwrap()).unwrap())
}

fn cosine64(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// 1. Table-lookup and direct stability agree under exhaustive search.
fn c1_fast_equals_naive() -> Outcome {
    let start = Instant::now();
    let c = unit_rows(10_000, 32, 101);
    let idx = IvfIndex::build(c.clone(), default_nlist(c.len()), 0).unwrap();
    let nprobe = idx.nlist();
    let table = neighbor_table(&idx.probe(nprobe)).unwrap();
    let queries = unit_rows(C1_QUERIES, 32, 102);
    let mut mismatches = 0;
    for (i, q) in queries.rows().enumerate() {
        let k = [16, 64, 128, 256][i % 4];
        let fast = nsm_fast(q, &idx, &table, k, nprobe).unwrap();
        let naive = nsm_naive(q, &idx, k, nprobe).unwrap();
        if fast != naive {
            mismatches += 1;
        }
    }
    let took = start.elapsed();
    outcome(
        mismatches == 0 && took < C1_BUDGET,
        format!("{mismatches} mismatches over {C1_QUERIES} queries in {took:.1?}"),
    )
}

/// 2. Every α is hits/k with integer hits in [0, k].
fn c2_quantization() -> Outcome {
    let c = unit_rows(10_000, 32, 201);
    let idx = IvfIndex::build(c.clone(), default_nlist(c.len()), 0).unwrap();
    let table = neighbor_table(&idx.probe(DEFAULT_NPROBE)).unwrap();
    let queries = unit_rows(C2_PAIRS, 32, 202);
    let mut r = rng(203);
    let mut bad = 0;
    for (i, q) in queries.rows().enumerate() {
        let k = r.random_range(1..=2000);
        let s = nsm_fast(q, &idx, &table, k, DEFAULT_NPROBE).unwrap();
        let score = NsmScore::new(format!("q{i}"), s);
        let a = score.alpha();
        let on_grid = score.k == k
            && score.hits <= k
            && a == score.hits as f64 / k as f64
            && (a * k as f64 - score.hits as f64).abs() < 1e-9
            && (0.0..=1.0).contains(&a);
        if !on_grid {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{bad} of {C2_PAIRS} scores off the 1/k grid"))
}

const LIFT: f32 = 100.0;

fn lift(x: f32, y: f32) -> Vec<f32> {
    let n = (x * x + y * y + LIFT * LIFT).sqrt();
    vec![x / n, y / n, LIFT / n]
}

/// 3. Ring of ten where only four members keep their nearest neighbor
/// inside, plus an isolated five-point cluster.
fn c3_ring_fixture() -> Outcome {
    let mut pts = Vec::new();
    for j in 0..10 {
        let a = (36.0f32 * j as f32).to_radians();
        let r = 1.0 + 0.01 * j as f32;
        pts.push((r * a.cos(), r * a.sin()));
    }
    for j in 0..6 {
        let a = (36.0f32 * j as f32).to_radians();
        pts.push((1.3 * a.cos(), 1.3 * a.sin()));
    }
    for j in 0..5 {
        let a = (72.0f32 * j as f32).to_radians();
        let r = 0.1 + 0.005 * j as f32;
        pts.push((20.0 + r * a.cos(), r * a.sin()));
    }
    let rows: Vec<Vec<f32>> = pts.iter().map(|&(x, y)| lift(x, y)).collect();
    let c = normalize(&VectorCollection::from_rows(&rows, Metric::Cosine).unwrap()).unwrap();
    let flat = FlatSearch::new(&c);
    let table = neighbor_table(&flat).unwrap();

    // brute-force nearest neighbors as an independent check of the geometry
    let brute: Vec<usize> = (0..c.len())
        .map(|u| {
            (0..c.len())
                .filter(|&v| v != u)
                .max_by(|&a, &b| {
                    cosine64(c.row(u), c.row(a))
                        .partial_cmp(&cosine64(c.row(u), c.row(b)))
                        .unwrap()
                        .then(b.cmp(&a))
                })
                .unwrap()
        })
        .collect();
    let ring = stability_fast(&flat, &table, &lift(0.0, 0.0), 10).unwrap().value();
    let cluster = stability_fast(&flat, &table, &lift(20.0, 0.0), 5).unwrap().value();
    let in_ring = (0..10).filter(|&u| brute[u] < 10).count();
    outcome(
        ring == 0.4 && cluster == 1.0 && in_ring == 4 && table.as_slice() == brute.as_slice(),
        format!("ring alpha {ring}, cluster alpha {cluster}, {in_ring}/10 in-ring neighbors"),
    )
}

/// 4. Probing every list reproduces the flat scan.
fn c4_full_probe_exact() -> Outcome {
    let c = unit_rows(10_000, 32, 401);
    let idx = IvfIndex::build(c.clone(), default_nlist(c.len()), 0).unwrap();
    let flat = FlatSearch::new(&c);
    let queries = unit_rows(C4_QUERIES, 32, 402);
    let mut diffs = 0;
    for q in queries.rows() {
        for k in [1, 10, 100] {
            if idx.search(q, k, idx.nlist()).unwrap().ids != flat.search(q, k).unwrap().ids {
                diffs += 1;
            }
        }
    }
    outcome(
        diffs == 0,
        format!("{diffs} differing id lists over {} searches", C4_QUERIES * 3),
    )
}

/// 5. Recall@10 with default nlist and nprobe on 100,000 random d=64 points.
fn c5_recall() -> Outcome {
    let start = Instant::now();
    let c = unit_rows(100_000, 64, 501);
    let nlist = default_nlist(c.len());
    let idx = IvfIndex::build(c.clone(), nlist, 0).unwrap();
    let flat = FlatSearch::new(&c);
    let queries = unit_rows(C5_QUERIES, 64, 502);
    let mut total = 0.0;
    for q in queries.rows() {
        let truth: HashSet<usize> = flat.search(q, 10).unwrap().ids.into_iter().collect();
        let got = idx.search(q, 10, DEFAULT_NPROBE).unwrap().ids;
        total += got.iter().filter(|id| truth.contains(id)).count() as f64 / 10.0;
    }
    let recall = total / C5_QUERIES as f64;
    let took = start.elapsed();
    outcome(
        recall >= C5_MIN_RECALL && took < C5_BUDGET,
        format!("recall@10 {recall:.4} (need {C5_MIN_RECALL}), nlist {nlist}, nprobe {DEFAULT_NPROBE}, {took:.1?}"),
    )
}

fn counting_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&a| {
            let below = x.iter().filter(|&&b| b < a).count() as f64;
            let equal = x.iter().filter(|&&b| b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx.sqrt() * vy.sqrt())
}

fn pairwise_auc(s: &[f64], l: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in (0..s.len()).filter(|&i| l[i]) {
        for j in (0..s.len()).filter(|&j| !l[j]) {
            den += 1.0;
            num += if s[i] > s[j] {
                1.0
            } else if s[i] == s[j] {
                0.5
            } else {
                0.0
            };
        }
    }
    num / den
}

/// 6. Spearman and AUC against second implementations.
fn c6_statistics() -> Outcome {
    let mut r = rng(601);
    let mut worst_rho: f64 = 0.0;
    let mut worst_auc: f64 = 0.0;
    for _ in 0..C6_DATASETS {
        let n = r.random_range(10..250);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(0..15) as f64).collect();
        let y: Vec<f64> = x.iter().map(|a| a + r.random_range(0..10) as f64).collect();
        let want = pearson(&counting_ranks(&x), &counting_ranks(&y));
        worst_rho = worst_rho.max((spearman(&x, &y).unwrap() - want).abs());

        let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        worst_auc = worst_auc.max((auc(&x, &labels).unwrap() - pairwise_auc(&x, &labels)).abs());
    }
    outcome(
        worst_rho <= C6_TOL && worst_auc <= C6_TOL,
        format!("max |diff| spearman {worst_rho:.1e}, auc {worst_auc:.1e} over {C6_DATASETS} datasets"),
    )
}

struct SeedRun {
    rho: f64,
    scores: Vec<NsmScore>,
    ratings: RatingsTable,
}

fn synthetic_runs() -> Vec<SeedRun> {
    (0..C7_SEEDS)
        .map(|seed| {
            let SyntheticData {
                collection,
                queries,
                ratings,
            } = generate(&MixtureSpec::geometric(&GeometricMixture::standard(seed)).unwrap())
                .unwrap();
            let flat = FlatSearch::new(&collection);
            let table: NeighborTable = neighbor_table(&flat).unwrap();
            let scores: Vec<NsmScore> = queries
                .iter()
                .map(|(l, q)| NsmScore::new(l, stability_fast(&flat, &table, q, C7_K).unwrap()))
                .collect();
            let alphas: Vec<f64> = scores.iter().map(|s| s.alpha()).collect();
            let rho = spearman(&alphas, &ratings.values()).unwrap();
            SeedRun {
                rho,
                scores,
                ratings,
            }
        })
        .collect()
}

/// 7. Stability tracks cluster sharpness on the 40-cluster mixture.
fn c7_sharpness(runs: &[SeedRun], took: Duration) -> Outcome {
    let mean = runs.iter().map(|r| r.rho).sum::<f64>() / runs.len() as f64;
    let per: Vec<String> = runs.iter().map(|r| format!("{:.3}", r.rho)).collect();
    outcome(
        mean >= C7_MIN_RHO && took < C7_BUDGET,
        format!("mean rho {mean:.4} over {C7_SEEDS} seeds [{}], {took:.1?}", per.join(" ")),
    )
}

/// 8. Keeping only extreme scores does not lower AUC at a mid-range threshold.
fn c8_margin(runs: &[SeedRun]) -> Outcome {
    let mut ok = 0;
    let mut cells = Vec::new();
    for r in runs {
        let at = |omega| auc_sweep(&r.scores, &r.ratings, &[C8_THETA], omega).unwrap()[0].1;
        let (narrow, full) = (at(0.35), at(0.5));
        if let (Some(a), Some(b)) = (narrow, full) {
            if a >= b {
                ok += 1;
            }
        }
        let fmt = |v: Option<f64>| v.map_or("NA".into(), |x| format!("{x:.3}"));
        cells.push(format!("{}/{}", fmt(narrow), fmt(full)));
    }
    outcome(
        ok >= C8_MIN_SEEDS,
        format!("AUC(0.35) >= AUC(0.5) on {ok}/{C7_SEEDS} seeds [{}]", cells.join(" ")),
    )
}

fn nsm(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_nsm")).args(args).output().unwrap()
}

fn read(p: PathBuf) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

/// 9. Identical flags give identical bytes; splits partition the ratings.
fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let data = d.join("data");
    let idx = d.join("idx");
    let steps = [
        nsm(&["synth", "--clusters", "30", "--cluster-size", "120", "--background", "1500", "--seed", "9", "--out", &s(&data)]),
        nsm(&["build", "--collection", &s(&data.join("collection.fvecs")), "--out", &s(&idx)]),
    ];
    if let Some(bad) = steps.iter().find(|o| !o.status.success()) {
        return outcome(false, String::from_utf8_lossy(&bad.stderr).into_owned());
    }
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = d.join(run);
        let o = nsm(&[
            "eval",
            "--ratings", &s(&data.join("ratings.tsv")),
            "--collection", &s(&data.join("collection.fvecs")),
            "--index", &s(&idx.join("index.ivf")),
            "--table", &s(&idx.join("neighbors.nnt")),
            "--queries", &s(&data.join("queries.tsv")),
            "--k-grid", "64:512:64",
            "--seed", "5",
            "--out", &s(&out),
        ]);
        if !o.status.success() {
            return outcome(false, String::from_utf8_lossy(&o.stderr).into_owned());
        }
        reports.push((read(out.join("report.tsv")), read(out.join("summary.txt"))));
    }
    let same = reports[0] == reports[1];

    let ratings = RatingsTable::load(&data.join("ratings.tsv")).unwrap();
    let spec = SplitSpec { seed: 5, ..Default::default() };
    let mut partitions = true;
    for t in 0..spec.trials {
        let (v, te) = spec.split(ratings.len(), t).unwrap();
        let mut all: Vec<usize> = v.iter().chain(&te).copied().collect();
        all.sort_unstable();
        let disjoint = v.iter().all(|i| !te.contains(i));
        partitions &= disjoint && all == (0..ratings.len()).collect::<Vec<_>>();
    }
    outcome(
        same && partitions,
        format!("reports identical: {same}; splits disjoint and exhaustive: {partitions}"),
    )
}

/// 10. Optional: real caption embeddings with imageability ratings, read from
/// `$NSM_STRETCH_DIR/{collection.fvecs,queries.tsv,ratings.tsv}`.
fn c10_stretch() -> Option<Outcome> {
    let dir = PathBuf::from(std::env::var_os("NSM_STRETCH_DIR")?);
    let tmp = tempfile::tempdir().unwrap();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let b = nsm(&["build", "--collection", &s(&dir.join("collection.fvecs")), "--out", &s(tmp.path())]);
    if !b.status.success() {
        return Some(outcome(false, String::from_utf8_lossy(&b.stderr).into_owned()));
    }
    let out = tmp.path().join("eval");
    let e = nsm(&[
        "eval",
        "--ratings", &s(&dir.join("ratings.tsv")),
        "--collection", &s(&dir.join("collection.fvecs")),
        "--index", &s(&tmp.path().join("index.ivf")),
        "--table", &s(&tmp.path().join("neighbors.nnt")),
        "--queries", &s(&dir.join("queries.tsv")),
        "--out", &s(&out),
    ]);
    if !e.status.success() {
        return Some(outcome(false, String::from_utf8_lossy(&e.stderr).into_owned()));
    }
    let summary = String::from_utf8(read(out.join("summary.txt"))).unwrap();
    let rho: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("mean test rho"))
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(f64::NAN);
    Some(outcome(
        (C10_RHO.0..=C10_RHO.1).contains(&rho),
        format!("mean test rho {rho:.4}, target [{}, {}]", C10_RHO.0, C10_RHO.1),
    ))
}

fn main() -> ExitCode {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: u32| only.is_empty() || only.contains(&n);
    let mut failed = Vec::new();
    let mut report = |n: u32, name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {tag}  {name}: {}", o.detail);
        if !o.pass {
            failed.push(n);
        }
    };

    let simple: [(u32, &str, fn() -> Outcome); 6] = [
        (1, "fast equals naive (exact mode)", c1_fast_equals_naive),
        (2, "alpha on the 1/k grid", c2_quantization),
        (3, "ring/cluster fixture", c3_ring_fixture),
        (4, "full probe equals flat scan", c4_full_probe_exact),
        (5, "IVF recall@10 at defaults", c5_recall),
        (6, "statistics oracles", c6_statistics),
    ];
    for (n, name, f) in simple {
        if wanted(n) {
            report(n, name, f());
        }
    }
    if wanted(7) || wanted(8) {
        let start = Instant::now();
        let runs = synthetic_runs();
        let took = start.elapsed();
        if wanted(7) {
            report(7, "sharpness vs stability (synthetic)", c7_sharpness(&runs, took));
        }
        if wanted(8) {
            report(8, "margin filter trend", c8_margin(&runs));
        }
    }
    if wanted(9) {
        report(9, "protocol determinism", c9_determinism());
    }
    if wanted(10) {
        match c10_stretch() {
            Some(o) => {
                let tag = if o.pass { "PASS" } else { "FAIL" };
                println!("criterion 10 {tag}  real-data stretch (not gating): {}", o.detail);
            }
            None => println!("criterion 10 SKIP  real-data stretch (not gating): NSM_STRETCH_DIR not set"),
        }
    }

    if failed.is_empty() {
        println!("acceptance: all gating criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
