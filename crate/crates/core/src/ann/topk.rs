use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// A scored point. `Ord` ranks better candidates first: higher similarity,
/// then lower id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub score: f64,
    pub id: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Candidate {
    #[inline]
    pub fn beats(&self, other: &Candidate) -> bool {
        self < other
    }
}

/// Nearest neighbors of one query, best first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnnResult {
    pub ids: Vec<usize>,
    pub scores: Vec<f64>,
}

impl KnnResult {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn first(&self) -> Option<Candidate> {
        Some(Candidate {
            id: *self.ids.first()?,
            score: self.scores[0],
        })
    }
}

/// Bounded collector keeping the `k` best candidates seen so far.
pub(crate) struct TopK {
    k: usize,
    // max-heap on `Ord`, so the top is the worst retained candidate
    heap: BinaryHeap<Candidate>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    pub fn push(&mut self, c: Candidate) {
        if self.heap.len() < self.k {
            self.heap.push(c);
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if c.beats(&worst) {
                *worst = c;
            }
        }
    }

    pub fn into_result(self) -> KnnResult {
        let sorted = self.heap.into_sorted_vec();
        KnnResult {
            ids: sorted.iter().map(|c| c.id).collect(),
            scores: sorted.iter().map(|c| c.score).collect(),
        }
    }
}
