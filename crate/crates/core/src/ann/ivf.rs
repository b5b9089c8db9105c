use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::kernel::dot;
use super::kmeans;
use super::topk::{Candidate, KnnResult, TopK};
use super::NeighborSearch;
use crate::error::{Error, Result};
use crate::vecstore::{Metric, VectorCollection};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"NSMIVF01";

/// Default number of probed lists at query time.
pub const DEFAULT_NPROBE: usize = 128;

/// Inverted-file index: a coarse quantizer plus one posting list per centroid.
#[derive(Debug, Clone)]
pub struct IvfIndex {
    source: Arc<VectorCollection>,
    centroids: VectorCollection,
    postings: Vec<Vec<usize>>,
}

/// `8 * ceil(sqrt(count))`, capped at `count`.
pub fn default_nlist(count: usize) -> usize {
    let mut root = (count as f64).sqrt() as usize;
    while root * root < count {
        root += 1;
    }
    while root > 0 && (root - 1) * (root - 1) >= count {
        root -= 1;
    }
    (8 * root).min(count).max(1)
}

fn check_query(dim: usize, q: &[f32], k: usize) -> Result<()> {
    if q.len() != dim {
        return Err(Error::param(format!(
            "query has dimension {} but the collection has {dim}",
            q.len()
        )));
    }
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    Ok(())
}

pub(crate) fn check_indexable(c: &VectorCollection) -> Result<()> {
    if c.is_empty() {
        return Err(Error::EmptyCollection);
    }
    if c.metric() == Metric::Cosine && !c.is_normalized() {
        return Err(Error::param(
            "cosine collections must be normalized before indexing",
        ));
    }
    Ok(())
}

impl IvfIndex {
    /// Clusters `source` into `nlist` lists with k-means (25 iterations,
    /// k-means++ seeding) and files every point under its nearest centroid.
    pub fn build(source: Arc<VectorCollection>, nlist: usize, seed: u64) -> Result<Self> {
        check_indexable(&source)?;
        if nlist == 0 {
            return Err(Error::param("nlist must be at least 1"));
        }
        if nlist > source.len() {
            return Err(Error::param(format!(
                "nlist {nlist} exceeds collection size {}",
                source.len()
            )));
        }
        let trained = kmeans::train(&source, nlist, kmeans::DEFAULT_ITERATIONS, seed);
        let assignment = kmeans::assign(&source, &trained);
        let mut postings = vec![Vec::new(); nlist];
        for (id, &list) in assignment.iter().enumerate() {
            postings[list].push(id);
        }
        let centroids =
            VectorCollection::new(source.dim(), trained.data, source.metric())?.mark_normalized();
        let index = Self {
            source,
            centroids,
            postings,
        };
        index.validate()?;
        Ok(index)
    }

    pub fn source(&self) -> &Arc<VectorCollection> {
        &self.source
    }

    pub fn centroids(&self) -> &VectorCollection {
        &self.centroids
    }

    pub fn postings(&self) -> &[Vec<usize>] {
        &self.postings
    }

    pub fn nlist(&self) -> usize {
        self.postings.len()
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    /// Checks that the posting lists partition `0..count`.
    pub fn validate(&self) -> Result<()> {
        let n = self.source.len();
        if self.postings.is_empty() || self.postings.len() > n {
            return Err(Error::format(format!(
                "nlist {} outside [1, {n}]",
                self.postings.len()
            )));
        }
        if self.centroids.len() != self.postings.len() || self.centroids.dim() != self.dim() {
            return Err(Error::format("centroid table does not match posting lists"));
        }
        let mut seen = vec![false; n];
        let mut total = 0usize;
        for list in &self.postings {
            for &id in list {
                if id >= n {
                    return Err(Error::format(format!("posting id {id} out of range")));
                }
                if std::mem::replace(&mut seen[id], true) {
                    return Err(Error::format(format!("point {id} appears in two lists")));
                }
                total += 1;
            }
        }
        if total != n {
            return Err(Error::format(format!(
                "posting lists cover {total} of {n} points"
            )));
        }
        Ok(())
    }

    /// Approximate k-NN: scans the `nprobe` lists whose centroids score highest
    /// against `q` (more if they hold fewer than `k` points).
    pub fn search(&self, q: &[f32], k: usize, nprobe: usize) -> Result<KnnResult> {
        self.search_excluding(q, k, nprobe, None)
    }

    pub(crate) fn search_excluding(
        &self,
        q: &[f32],
        k: usize,
        nprobe: usize,
        exclude: Option<usize>,
    ) -> Result<KnnResult> {
        check_query(self.dim(), q, k)?;
        let nprobe = nprobe.clamp(1, self.nlist());
        let order = self.probe_order(q);

        let mut top = TopK::new(k);
        let mut seen = 0usize;
        for (rank, list) in order.iter().enumerate() {
            if rank >= nprobe && seen >= k {
                break;
            }
            for &id in &self.postings[list.id] {
                if Some(id) == exclude {
                    continue;
                }
                top.push(Candidate {
                    score: dot(q, self.source.row(id)),
                    id,
                });
                seen += 1;
            }
        }
        Ok(top.into_result())
    }

    /// Centroids ranked by similarity to `q`, lower list id on ties.
    fn probe_order(&self, q: &[f32]) -> Vec<Candidate> {
        let mut order: Vec<Candidate> = self
            .centroids
            .rows()
            .enumerate()
            .map(|(id, c)| Candidate { score: dot(q, c), id })
            .collect();
        order.sort_unstable();
        order
    }

    pub fn probe(&self, nprobe: usize) -> IvfSearch<'_> {
        IvfSearch {
            index: self,
            nprobe: nprobe.clamp(1, self.nlist()),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.nlist() as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for v in self.centroids.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for list in &self.postings {
            out.extend_from_slice(&(list.len() as u64).to_le_bytes());
            for &id in list {
                out.extend_from_slice(&(id as u64).to_le_bytes());
            }
        }
        out
    }

    /// Restores a snapshot over the collection it was built from.
    pub fn decode(bytes: &[u8], source: Arc<VectorCollection>) -> Result<Self> {
        check_indexable(&source)?;
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != SNAPSHOT_MAGIC {
            return Err(Error::format("missing NSMIVF01 header"));
        }
        let dim = r.u32()? as usize;
        let nlist = r.u32()? as usize;
        let count = r.u64()?;
        if dim != source.dim() || count != source.len() as u64 {
            return Err(Error::format(format!(
                "snapshot is for {count} x {dim} but the collection is {} x {}",
                source.len(),
                source.dim()
            )));
        }
        if nlist == 0 || nlist > source.len() {
            return Err(Error::format(format!("snapshot nlist {nlist} is invalid")));
        }
        let raw = r.take(4 * nlist * dim)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let centroids = VectorCollection::new(dim, data, source.metric())?.mark_normalized();
        let mut postings = Vec::with_capacity(nlist);
        for _ in 0..nlist {
            let len = r.u64()?;
            if len > count {
                return Err(Error::format("posting list longer than the collection"));
            }
            let mut list = Vec::with_capacity(len as usize);
            for _ in 0..len {
                list.push(r.u64()? as usize);
            }
            postings.push(list);
        }
        if r.pos != bytes.len() {
            return Err(Error::format("trailing bytes after snapshot"));
        }
        let index = Self {
            source,
            centroids,
            postings,
        };
        index.validate()?;
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, source: Arc<VectorCollection>) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, source).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format("snapshot is truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// An index paired with a probe width.
#[derive(Clone, Copy)]
pub struct IvfSearch<'a> {
    index: &'a IvfIndex,
    nprobe: usize,
}

impl IvfSearch<'_> {
    pub fn nprobe(&self) -> usize {
        self.nprobe
    }
}

impl NeighborSearch for IvfSearch<'_> {
    fn collection(&self) -> &VectorCollection {
        &self.index.source
    }

    fn search_excluding(&self, q: &[f32], k: usize, exclude: Option<usize>) -> Result<KnnResult> {
        self.index.search_excluding(q, k, self.nprobe, exclude)
    }

    fn candidate_pool(&self, q: &[f32]) -> Result<usize> {
        check_query(self.index.dim(), q, 1)?;
        let order = self.index.probe_order(q);
        Ok(order[..self.nprobe]
            .iter()
            .map(|c| self.index.postings[c.id].len())
            .sum())
    }

    fn is_exhaustive(&self) -> bool {
        self.nprobe >= self.index.nlist()
    }
}

/// Exhaustive scan; top-k by similarity with the lower id winning ties.
pub fn exact_search(c: &VectorCollection, q: &[f32], k: usize) -> Result<KnnResult> {
    FlatSearch::new(c).search_excluding(q, k, None)
}

/// Brute-force search over a collection.
#[derive(Clone, Copy)]
pub struct FlatSearch<'a> {
    collection: &'a VectorCollection,
}

impl<'a> FlatSearch<'a> {
    pub fn new(collection: &'a VectorCollection) -> Self {
        Self { collection }
    }
}

impl NeighborSearch for FlatSearch<'_> {
    fn collection(&self) -> &VectorCollection {
        self.collection
    }

    fn search_excluding(&self, q: &[f32], k: usize, exclude: Option<usize>) -> Result<KnnResult> {
        check_query(self.collection.dim(), q, k)?;
        let mut top = TopK::new(k);
        for (id, row) in self.collection.rows().enumerate() {
            if Some(id) == exclude {
                continue;
            }
            top.push(Candidate {
                score: dot(q, row),
                id,
            });
        }
        Ok(top.into_result())
    }

    fn is_exhaustive(&self) -> bool {
        true
    }

    fn candidate_pool(&self, _q: &[f32]) -> Result<usize> {
        Ok(self.collection.len())
    }
}
