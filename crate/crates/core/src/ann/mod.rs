//! k-NN search: an inverted-file index, an exhaustive scan, and the batch
//! nearest-neighbor pass that fills a [`NeighborTable`].

pub mod kernel;
pub mod kmeans;
mod ivf;
mod topk;

use rayon::prelude::*;

pub use ivf::{
    default_nlist, exact_search, FlatSearch, IvfIndex, IvfSearch, DEFAULT_NPROBE,
    SNAPSHOT_MAGIC,
};
pub use topk::{Candidate, KnnResult};

use crate::error::{Error, Result};
use crate::nsm::NeighborTable;
use crate::vecstore::VectorCollection;
use kernel::{dot_f64, widen};

/// A k-NN backend over a fixed collection.
pub trait NeighborSearch: Sync {
    fn collection(&self) -> &VectorCollection;

    /// Top-`k` neighbors of `q`, never returning the id `exclude`.
    fn search_excluding(&self, q: &[f32], k: usize, exclude: Option<usize>) -> Result<KnnResult>;

    /// True when results are guaranteed to equal an exhaustive scan.
    fn is_exhaustive(&self) -> bool;

    /// Number of points examined for `q` whatever `k` is, provided `k` does
    /// not exceed it.
    fn candidate_pool(&self, q: &[f32]) -> Result<usize>;

    fn search(&self, q: &[f32], k: usize) -> Result<KnnResult> {
        self.search_excluding(q, k, None)
    }

    /// Nearest neighbor of collection point `u`, other than `u` itself.
    fn nearest_other(&self, u: usize) -> Result<usize> {
        let r = self.search_excluding(self.collection().row(u), 1, Some(u))?;
        r.ids
            .first()
            .copied()
            .ok_or(Error::CollectionTooSmall {
                count: self.collection().len(),
            })
    }
}

/// Nearest other point for every collection point, via `index` at `nprobe`.
pub fn batch_nn1(index: &IvfIndex, nprobe: usize) -> Result<NeighborTable> {
    neighbor_table(&index.probe(nprobe))
}

/// Builds the table with any backend. Exhaustive backends take a symmetric
/// pass that visits each pair once; the tie rule makes it agree with the
/// per-point scan exactly.
pub fn neighbor_table<S: NeighborSearch>(search: &S) -> Result<NeighborTable> {
    let c = search.collection();
    if c.len() < 2 {
        return Err(Error::CollectionTooSmall { count: c.len() });
    }
    let nn1 = if search.is_exhaustive() {
        exact_nn1(c)
    } else {
        (0..c.len())
            .into_par_iter()
            .map(|u| search.nearest_other(u))
            .collect::<Result<Vec<_>>>()?
    };
    NeighborTable::new(nn1)
}

fn exact_nn1(c: &VectorCollection) -> Vec<usize> {
    const BLOCK: usize = 96;
    let n = c.len();
    let dim = c.dim();
    let wide = widen(c.as_slice());
    let row = |i: usize| &wide[i * dim..(i + 1) * dim];
    let mut best = vec![
        Candidate {
            score: f64::NEG_INFINITY,
            id: usize::MAX,
        };
        n
    ];
    for ib in (0..n).step_by(BLOCK) {
        let iend = (ib + BLOCK).min(n);
        for jb in (ib..n).step_by(BLOCK) {
            let jend = (jb + BLOCK).min(n);
            for i in ib..iend {
                let ri = row(i);
                let start = if jb == ib { i + 1 } else { jb };
                let mut bi = best[i];
                for j in start..jend {
                    let score = dot_f64(ri, row(j));
                    let ci = Candidate { score, id: j };
                    if ci.beats(&bi) {
                        bi = ci;
                    }
                    let cj = Candidate { score, id: i };
                    if cj.beats(&best[j]) {
                        best[j] = cj;
                    }
                }
                best[i] = bi;
            }
        }
    }
    best.into_iter().map(|c| c.id).collect()
}
