//! Rank statistics and the split/trial evaluation protocol.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ann::NeighborSearch;
use crate::error::{Error, Result};
use crate::nsm::{stability_profile, NeighborTable, NsmScore};
use crate::vecstore::{fold_label, LabeledQuerySet};

/// Radius grid swept during tuning: 64, 128, ..., 4096.
pub fn default_k_grid() -> Vec<usize> {
    (64..=4096).step_by(64).collect()
}

/// Margins for the confidence analysis.
pub const DEFAULT_OMEGAS: [f64; 4] = [0.35, 0.4, 0.45, 0.5];

/// Ground-truth ratings keyed by label.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsTable {
    entries: Vec<(String, f64)>,
}

impl RatingsTable {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = HashMap::with_capacity(entries.len());
        for (label, rating) in &entries {
            if !rating.is_finite() {
                return Err(Error::data(format!("rating for {label:?} is not finite")));
            }
            if seen.insert(fold_label(label), ()).is_some() {
                return Err(Error::data(format!("duplicate rated label {label:?}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.1).collect()
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        let folded = fold_label(label);
        self.entries
            .iter()
            .find(|(l, _)| fold_label(l) == folded)
            .map(|e| e.1)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("label\trating\n");
        for (l, r) in &self.entries {
            writeln!(out, "{l}\t{r}").unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next().map(|l| l.trim_end_matches('\r')) {
            Some("label\trating") => {}
            other => return Err(Error::format(format!("unexpected ratings header {other:?}"))),
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let (label, rating) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(format!("ratings line {}: missing tab", i + 2)))?;
            let rating: f64 = rating.trim().parse().map_err(|_| {
                Error::format(format!("ratings line {}: bad rating {rating:?}", i + 2))
            })?;
            entries.push((label.to_string(), rating));
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Validation/test split protocol: trial `t` shuffles with seed `seed + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub seed: u64,
    pub validation_fraction: f64,
    pub trials: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            validation_fraction: 0.20,
            trials: 10,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::param(format!(
                "validation fraction {} is outside (0, 1)",
                self.validation_fraction
            )));
        }
        if self.trials == 0 {
            return Err(Error::param("at least one trial is required"));
        }
        Ok(())
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }

    /// Splits `0..n` into sorted (validation, test) index sets.
    pub fn split(&self, n: usize, trial: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        self.validate()?;
        if n < 2 {
            return Err(Error::param(format!("cannot split {n} item(s)")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.trial_seed(trial));
        idx.shuffle(&mut rng);
        let n_val = ((self.validation_fraction * n as f64).round() as usize).clamp(1, n - 1);
        let mut val = idx[..n_val].to_vec();
        let mut test = idx[n_val..].to_vec();
        val.sort_unstable();
        test.sort_unstable();
        Ok((val, test))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    /// Radius chosen on the validation split, when tuning took place.
    pub k: Option<usize>,
    pub validation_rho: Option<f64>,
    pub test_rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub trials: Vec<TrialResult>,
    pub mean_rho: f64,
    pub coverage: f64,
    pub rated: usize,
    pub covered: usize,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl EvalReport {
    pub fn tuned_k(&self) -> Vec<Option<usize>> {
        self.trials.iter().map(|t| t.k).collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("trial\tseed\tk\tvalidation_rho\ttest_rho\n");
        for t in &self.trials {
            let k = t.k.map_or_else(|| "NA".to_string(), |k| k.to_string());
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.6}",
                t.trial,
                t.seed,
                k,
                fmt_opt(t.validation_rho),
                t.test_rho
            )
            .unwrap();
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        writeln!(out, "trials        {}", self.trials.len()).unwrap();
        writeln!(out, "mean test rho {:.6}", self.mean_rho).unwrap();
        writeln!(
            out,
            "coverage      {:.6} ({} of {} rated labels)",
            self.coverage, self.covered, self.rated
        )
        .unwrap();
        if self.trials.iter().any(|t| t.k.is_some()) {
            let ks: Vec<String> = self
                .trials
                .iter()
                .map(|t| t.k.map_or_else(|| "NA".into(), |k| k.to_string()))
                .collect();
            writeln!(out, "tuned k       {}", ks.join(" ")).unwrap();
        }
        out
    }
}

/// Fractional ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        // positions i+1 ..= j share their mean
        let r = (i + 1 + j) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = r;
        }
        i = j;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman's rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::param(format!(
            "spearman inputs differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "{} paired value(s)",
            x.len()
        )));
    }
    for (name, v) in [("first", x), ("second", y)] {
        if v.iter().any(|a| !a.is_finite()) {
            return Err(Error::param(format!("{name} input has a non-finite value")));
        }
        if v.iter().all(|&a| a == v[0]) {
            return Err(Error::UndefinedCorrelation(format!("{name} input is constant")));
        }
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// Area under the ROC curve: P(random positive outscores random negative),
/// ties counted as one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::param("scores and labels differ in length"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Positive iff the rating is strictly above `theta`.
pub fn threshold_values(ratings: &[f64], theta: f64) -> Vec<bool> {
    ratings.iter().map(|&r| r > theta).collect()
}

pub fn threshold_labels(ratings: &RatingsTable, theta: f64) -> Vec<bool> {
    threshold_values(&ratings.values(), theta)
}

/// Keeps scores with α ≤ ω or α ≥ 1 − ω.
pub fn margin_filter(scores: &[NsmScore], omega: f64) -> Result<Vec<NsmScore>> {
    if !(omega > 0.0 && omega <= 0.5) {
        return Err(Error::param(format!("margin {omega} is outside (0, 0.5]")));
    }
    Ok(scores
        .iter()
        // α ≥ 1 − ω is tested as (k − hits)/k ≤ ω so both ends round alike
        .filter(|s| s.alpha() <= omega || s.miss_fraction() <= omega)
        .cloned()
        .collect())
}

/// Prediction/rating pairs joined on case-folded labels, in ratings order.
struct Joined {
    /// index into the ratings table for each covered entry
    rated_index: Vec<usize>,
    ratings: Vec<f64>,
    predictions: Vec<f64>,
    rated: usize,
}

fn join(predictions: &[(String, f64)], ratings: &RatingsTable) -> Result<Joined> {
    let mut by_label = HashMap::with_capacity(predictions.len());
    for (l, v) in predictions {
        if by_label.insert(fold_label(l), *v).is_some() {
            return Err(Error::data(format!("duplicate predicted label {l:?}")));
        }
    }
    let mut j = Joined {
        rated_index: Vec::new(),
        ratings: Vec::new(),
        predictions: Vec::new(),
        rated: ratings.len(),
    };
    for (i, (l, r)) in ratings.entries().iter().enumerate() {
        if let Some(&v) = by_label.get(&fold_label(l)) {
            j.rated_index.push(i);
            j.ratings.push(*r);
            j.predictions.push(v);
        }
    }
    if j.rated_index.is_empty() {
        return Err(Error::NoCoverage);
    }
    Ok(j)
}

fn rho_on(subset: &[usize], member_of: &[Option<usize>], x: &[f64], y: &[f64]) -> Result<f64> {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for &i in subset {
        if let Some(p) = member_of[i] {
            a.push(x[p]);
            b.push(y[p]);
        }
    }
    spearman(&a, &b)
}

fn positions(rated: usize, rated_index: &[usize]) -> Vec<Option<usize>> {
    let mut pos = vec![None; rated];
    for (p, &i) in rated_index.iter().enumerate() {
        pos[i] = Some(p);
    }
    pos
}

/// Test-split Spearman correlation per trial for fixed predictions.
///
/// Rated labels without a prediction lower coverage and are left out of ρ.
pub fn evaluate(
    predictions: &[(String, f64)],
    ratings: &RatingsTable,
    split: &SplitSpec,
) -> Result<EvalReport> {
    split.validate()?;
    let j = join(predictions, ratings)?;
    let pos = positions(j.rated, &j.rated_index);
    let mut trials = Vec::with_capacity(split.trials);
    for t in 0..split.trials {
        let (_, test) = split.split(j.rated, t)?;
        let rho = rho_on(&test, &pos, &j.predictions, &j.ratings)?;
        trials.push(TrialResult {
            trial: t,
            seed: split.trial_seed(t),
            k: None,
            validation_rho: None,
            test_rho: rho,
        });
    }
    Ok(finish(trials, j.rated_index.len(), j.rated))
}

fn finish(trials: Vec<TrialResult>, covered: usize, rated: usize) -> EvalReport {
    let mean_rho = trials.iter().map(|t| t.test_rho).sum::<f64>() / trials.len() as f64;
    EvalReport {
        trials,
        mean_rho,
        coverage: covered as f64 / rated as f64,
        rated,
        covered,
    }
}

/// Picks the radius with the best validation ρ in each trial (smallest k on
/// ties) and reports test ρ at that radius.
pub fn tune_radius<S: NeighborSearch>(
    queries: &LabeledQuerySet,
    ratings: &RatingsTable,
    search: &S,
    table: &NeighborTable,
    grid: &[usize],
    split: &SplitSpec,
) -> Result<EvalReport> {
    split.validate()?;
    let mut grid = grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() {
        return Err(Error::param("radius grid is empty"));
    }
    let count = search.collection().len();
    if let Some(&bad) = grid.iter().find(|&&k| k == 0 || k >= count) {
        return Err(Error::param(format!(
            "radius {bad} is invalid for a collection of {count} points"
        )));
    }

    let query_of: HashMap<String, usize> = queries
        .labels()
        .iter()
        .enumerate()
        .map(|(i, l)| (fold_label(l), i))
        .collect();
    let covered: Vec<(usize, usize)> = ratings
        .entries()
        .iter()
        .enumerate()
        .filter_map(|(ri, (l, _))| query_of.get(&fold_label(l)).map(|&qi| (ri, qi)))
        .collect();
    if covered.is_empty() {
        return Err(Error::NoCoverage);
    }

    // alphas[p][g] = stability of covered query p at radius grid[g]
    let alphas: Vec<Vec<f64>> = covered
        .par_iter()
        .map(|&(_, qi)| {
            let label = &queries.labels()[qi];
            stability_profile(search, table, queries.vectors().row(qi), &grid)
                .map(|prof| prof.iter().map(|s| s.value()).collect())
                .map_err(|e| Error::Query {
                    label: label.clone(),
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let rated_index: Vec<usize> = covered.iter().map(|c| c.0).collect();
    let pos = positions(ratings.len(), &rated_index);
    let y: Vec<f64> = covered.iter().map(|&(ri, _)| ratings.entries()[ri].1).collect();
    let column = |g: usize| -> Vec<f64> { alphas.iter().map(|a| a[g]).collect() };
    let columns: Vec<Vec<f64>> = (0..grid.len()).map(column).collect();

    let mut trials = Vec::with_capacity(split.trials);
    for t in 0..split.trials {
        let (val, test) = split.split(ratings.len(), t)?;
        let mut best: Option<(usize, f64)> = None;
        let mut last_err = None;
        for (g, col) in columns.iter().enumerate() {
            match rho_on(&val, &pos, col, &y) {
                Ok(rho) => {
                    if best.is_none_or(|(_, b)| rho > b) {
                        best = Some((g, rho));
                    }
                }
                Err(e @ Error::UndefinedCorrelation(_)) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        let Some((g, val_rho)) = best else {
            return Err(last_err.unwrap_or(Error::UndefinedCorrelation(
                "validation split has no usable radius".into(),
            )));
        };
        let test_rho = rho_on(&test, &pos, &columns[g], &y)?;
        trials.push(TrialResult {
            trial: t,
            seed: split.trial_seed(t),
            k: Some(grid[g]),
            validation_rho: Some(val_rho),
            test_rho,
        });
    }
    Ok(finish(trials, covered.len(), ratings.len()))
}

/// `(theta, auc)` rows for one margin. `None` marks thresholds where the
/// retained words fall into a single class.
pub fn auc_sweep(
    scores: &[NsmScore],
    ratings: &RatingsTable,
    thetas: &[f64],
    omega: f64,
) -> Result<Vec<(f64, Option<f64>)>> {
    if thetas.is_empty() || thetas.iter().any(|t| !t.is_finite()) {
        return Err(Error::param("threshold grid must be non-empty and finite"));
    }
    let kept = margin_filter(scores, omega)?;
    let preds: Vec<(String, f64)> = kept.iter().map(|s| (s.label.clone(), s.alpha())).collect();
    let joined = match join(&preds, ratings) {
        Ok(j) => Some(j),
        Err(Error::NoCoverage) => None,
        Err(e) => return Err(e),
    };
    Ok(thetas
        .iter()
        .map(|&theta| {
            let value = joined.as_ref().and_then(|j| {
                auc(&j.predictions, &threshold_values(&j.ratings, theta)).ok()
            });
            (theta, value)
        })
        .collect())
}

pub fn format_auc_table(rows: &[(f64, Option<f64>)]) -> String {
    let mut out = String::from("theta\tauc\n");
    for (theta, v) in rows {
        writeln!(out, "{theta}\t{}", fmt_opt(*v)).unwrap();
    }
    out
}
