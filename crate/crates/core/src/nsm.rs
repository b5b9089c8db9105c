//! Neighborhood stability.
//!
//! A point set is α-stable when a fraction α of its members have their
//! nearest neighbor (over the whole collection, self excluded) inside the set.
//! The stability measure of a query with radius `k` is the α of its k-NN set.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::ann::{IvfIndex, NeighborSearch};
use crate::error::{Error, Result};
use crate::vecstore::LabeledQuerySet;

pub const TABLE_MAGIC: &[u8; 8] = b"NSMNNT01";

/// Nearest other point of every collection point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborTable {
    nn1: Vec<usize>,
}

impl NeighborTable {
    pub fn new(nn1: Vec<usize>) -> Result<Self> {
        let n = nn1.len();
        for (u, &v) in nn1.iter().enumerate() {
            if v >= n {
                return Err(Error::data(format!("neighbor of {u} is {v}, out of range")));
            }
            if v == u {
                return Err(Error::data(format!("point {u} is listed as its own neighbor")));
            }
        }
        Ok(Self { nn1 })
    }

    #[inline]
    pub fn get(&self, u: usize) -> usize {
        self.nn1[u]
    }

    pub fn len(&self) -> usize {
        self.nn1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nn1.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.nn1
    }

    /// `[b"NSMNNT01"][u64 count][count x u64 neighbor id]`, little-endian.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.nn1.len());
        out.extend_from_slice(TABLE_MAGIC);
        out.extend_from_slice(&(self.nn1.len() as u64).to_le_bytes());
        for &v in &self.nn1 {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != TABLE_MAGIC {
            return Err(Error::format("missing NSMNNT01 header"));
        }
        let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let body = &bytes[16..];
        if (body.len() as u64) != count.saturating_mul(8) {
            return Err(Error::format(format!(
                "table declares {count} entries but holds {} bytes",
                body.len()
            )));
        }
        let nn1 = body
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        Self::new(nn1).map_err(|e| match e {
            Error::Data(m) => Error::Format(m),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Exact stability ratio `hits / size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stability {
    pub hits: usize,
    pub size: usize,
}

impl Stability {
    pub fn value(&self) -> f64 {
        self.hits as f64 / self.size as f64
    }
}

/// Stability score of one labeled query at radius `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NsmScore {
    pub label: String,
    pub hits: usize,
    pub k: usize,
}

impl NsmScore {
    pub fn new(label: impl Into<String>, s: Stability) -> Self {
        Self {
            label: label.into(),
            hits: s.hits,
            k: s.size,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.hits as f64 / self.k as f64
    }

    /// Fraction of members whose nearest neighbor escapes the set.
    pub fn miss_fraction(&self) -> f64 {
        (self.k - self.hits) as f64 / self.k as f64
    }
}

/// α of an arbitrary member set under `table`.
pub fn alpha_stability(members: &[usize], table: &NeighborTable) -> Result<Stability> {
    let set: HashSet<usize> = members.iter().copied().collect();
    if set.is_empty() {
        return Err(Error::param("member set is empty"));
    }
    if let Some(&bad) = set.iter().find(|&&u| u >= table.len()) {
        return Err(Error::param(format!(
            "member {bad} is outside a table of {} points",
            table.len()
        )));
    }
    let hits = set.iter().filter(|&&u| set.contains(&table.get(u))).count();
    Ok(Stability {
        hits,
        size: set.len(),
    })
}

fn check_radius(k: usize, count: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::param("radius k must be at least 1"));
    }
    if k >= count {
        return Err(Error::param(format!(
            "radius k = {k} needs at least {} points, collection has {count}",
            k + 1
        )));
    }
    Ok(())
}

/// Direct form: one k-NN search for `q`, then a fresh 1-NN search for every
/// member, adding `1/k` for each member whose neighbor is also a member.
pub fn stability_naive<S: NeighborSearch>(search: &S, q: &[f32], k: usize) -> Result<Stability> {
    check_radius(k, search.collection().len())?;
    let members = search.search(q, k)?.ids;
    let set: HashSet<usize> = members.iter().copied().collect();
    let mut hits = 0;
    for &u in &members {
        if set.contains(&search.nearest_other(u)?) {
            hits += 1;
        }
    }
    Ok(Stability { hits, size: k })
}

/// Table form: one k-NN search, neighbor membership read from `table`.
pub fn stability_fast<S: NeighborSearch>(
    search: &S,
    table: &NeighborTable,
    q: &[f32],
    k: usize,
) -> Result<Stability> {
    let count = search.collection().len();
    check_radius(k, count)?;
    if table.len() != count {
        return Err(Error::param(format!(
            "neighbor table has {} entries but the collection has {count}",
            table.len()
        )));
    }
    let members = search.search(q, k)?.ids;
    alpha_stability(&members, table)
}

pub fn nsm_naive(q: &[f32], index: &IvfIndex, k: usize, nprobe: usize) -> Result<Stability> {
    stability_naive(&index.probe(nprobe), q, k)
}

pub fn nsm_fast(
    q: &[f32],
    index: &IvfIndex,
    table: &NeighborTable,
    k: usize,
    nprobe: usize,
) -> Result<Stability> {
    stability_fast(&index.probe(nprobe), table, q, k)
}

/// Stability at every radius in `radii` from a single search at the largest.
///
/// The k-NN list at a smaller radius is a prefix of the list at the largest
/// one whenever the candidate pool does not depend on `k`: always for
/// exhaustive search, and for IVF probing when the probed lists already hold
/// `max(radii)` points. Otherwise each radius is searched on its own.
pub fn stability_profile<S: NeighborSearch>(
    search: &S,
    table: &NeighborTable,
    q: &[f32],
    radii: &[usize],
) -> Result<Vec<Stability>> {
    let count = search.collection().len();
    if table.len() != count {
        return Err(Error::param(format!(
            "neighbor table has {} entries but the collection has {count}",
            table.len()
        )));
    }
    let Some(&kmax) = radii.iter().max() else {
        return Ok(Vec::new());
    };
    for &k in radii {
        check_radius(k, count)?;
    }
    if search.candidate_pool(q)? < kmax {
        return radii
            .iter()
            .map(|&k| stability_fast(search, table, q, k))
            .collect();
    }
    let ranked = search.search(q, kmax)?.ids;
    let rank: HashMap<usize, usize> = ranked.iter().enumerate().map(|(r, &u)| (u, r)).collect();
    // a member at rank r is a hit for every radius > max(r, rank of its neighbor)
    let mut hits_below = vec![0usize; kmax + 1];
    for (r, &u) in ranked.iter().enumerate() {
        if let Some(&rn) = rank.get(&table.get(u)) {
            hits_below[r.max(rn) + 1] += 1;
        }
    }
    for k in 1..=kmax {
        hits_below[k] += hits_below[k - 1];
    }
    Ok(radii
        .iter()
        .map(|&k| Stability {
            hits: hits_below[k],
            size: k,
        })
        .collect())
}

/// One score per query, in input order.
pub fn score_queries_with<S: NeighborSearch>(
    search: &S,
    table: &NeighborTable,
    queries: &LabeledQuerySet,
    k: usize,
) -> Result<Vec<NsmScore>> {
    if !queries.is_empty() && queries.dim() != search.collection().dim() {
        return Err(Error::param(format!(
            "queries have dimension {} but the collection has {}",
            queries.dim(),
            search.collection().dim()
        )));
    }
    let items: Vec<(&str, &[f32])> = queries.iter().collect();
    items
        .par_iter()
        .map(|&(label, v)| {
            stability_fast(search, table, v, k)
                .map(|s| NsmScore::new(label, s))
                .map_err(|e| Error::Query {
                    label: label.to_string(),
                    source: Box::new(e),
                })
        })
        .collect()
}

pub fn score_queries(
    queries: &LabeledQuerySet,
    index: &IvfIndex,
    table: &NeighborTable,
    k: usize,
    nprobe: usize,
) -> Result<Vec<NsmScore>> {
    score_queries_with(&index.probe(nprobe), table, queries, k)
}

/// `label<TAB>alpha<TAB>hits<TAB>k`, alpha with six decimals.
pub fn format_scores(scores: &[NsmScore]) -> String {
    let mut out = String::from("label\talpha\thits\tk\n");
    for s in scores {
        writeln!(out, "{}\t{:.6}\t{}\t{}", s.label, s.alpha(), s.hits, s.k).unwrap();
    }
    out
}

pub fn parse_scores(text: &str) -> Result<Vec<NsmScore>> {
    let mut lines = text.lines();
    match lines.next().map(|l| l.trim_end_matches('\r')) {
        Some("label\talpha\thits\tk") => {}
        other => return Err(Error::format(format!("unexpected score header {other:?}"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = || Error::format(format!("score line {}: {line:?}", i + 2));
        if fields.len() != 4 {
            return Err(bad());
        }
        let hits: usize = fields[2].parse().map_err(|_| bad())?;
        let k: usize = fields[3].parse().map_err(|_| bad())?;
        if k == 0 || hits > k {
            return Err(bad());
        }
        out.push(NsmScore {
            label: fields[0].to_string(),
            hits,
            k,
        });
    }
    Ok(out)
}

pub fn save_scores(scores: &[NsmScore], path: &Path) -> Result<()> {
    fs::write(path, format_scores(scores)).map_err(|e| Error::io(path, e))
}

pub fn load_scores(path: &Path) -> Result<Vec<NsmScore>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scores(&text).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}
