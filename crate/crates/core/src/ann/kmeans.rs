//! Spherical k-means used to train IVF coarse quantizers.
//!
//! Points are compared to unit-norm centroids by inner product, the same
//! similarity the index later probes with. Seeding is k-means++ over the chord
//! distance `2 - 2 cos`; empty clusters are re-seeded from the point least
//! similar to its own centroid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::kernel::dot_f32;
use crate::vecstore::VectorCollection;

pub const DEFAULT_ITERATIONS: usize = 25;

/// Centroids trained by [`train`], row-major `k x dim`, each row unit length
/// (or zero when every member was a zero vector).
pub struct Centroids {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl Centroids {
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn unit_f32(v: &[f32]) -> Vec<f32> {
    let norm = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|&x| (x as f64 / norm) as f32).collect()
}

/// Trains `k` centroids. Deterministic for a fixed `(data, k, iterations, seed)`.
pub fn train(c: &VectorCollection, k: usize, iterations: usize, seed: u64) -> Centroids {
    let n = c.len();
    assert!(k >= 1 && k <= n, "k-means needs 1 <= k <= n");

    let inv_norm: Vec<f32> = c
        .rows()
        .map(|r| {
            let norm = r.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
            if norm == 0.0 {
                0.0
            } else {
                (1.0 / norm) as f32
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(c, k, &inv_norm, &mut rng);

    let mut assign = vec![usize::MAX; n];
    for _ in 0..iterations {
        let (next, cos) = assign_points(c, &centroids, &inv_norm);
        let changed = next != assign;
        assign = next;
        let reseeded = reseed_empty(c, &mut centroids, &mut assign, &cos);
        if !changed && !reseeded {
            break;
        }
        update_centroids(c, &mut centroids, &assign);
    }
    centroids
}

fn seed_plus_plus(
    c: &VectorCollection,
    k: usize,
    inv_norm: &[f32],
    rng: &mut ChaCha8Rng,
) -> Centroids {
    let n = c.len();
    let dim = c.dim();
    let mut data = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    data.extend(unit_f32(c.row(first)));

    let chord = |i: usize, centroid: &[f32]| -> f64 {
        let cos = (dot_f32(c.row(i), centroid) * inv_norm[i]) as f64;
        (2.0 - 2.0 * cos).max(0.0)
    };
    let mut weight: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| chord(i, &data[..dim]))
        .collect();

    for _ in 1..k {
        let total: f64 = weight.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in weight.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave `target` past the final partial sum
            chosen.unwrap_or_else(|| weight.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            rng.random_range(0..n)
        };
        let centroid = unit_f32(c.row(pick));
        weight
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, w)| *w = w.min(chord(i, &centroid)));
        data.extend(centroid);
    }
    Centroids { dim, data }
}

/// Files every point under its most similar centroid (lower id on ties).
pub fn assign(c: &VectorCollection, centroids: &Centroids) -> Vec<usize> {
    let inv_norm = vec![1.0f32; c.len()];
    assign_points(c, centroids, &inv_norm).0
}

/// Nearest centroid per point (ties to the lower centroid id), plus the
/// cosine between each point and its centroid.
fn assign_points(
    c: &VectorCollection,
    centroids: &Centroids,
    inv_norm: &[f32],
) -> (Vec<usize>, Vec<f32>) {
    let k = centroids.len();
    (0..c.len())
        .into_par_iter()
        .map(|i| {
            let row = c.row(i);
            let mut best = 0;
            let mut best_sim = f32::NEG_INFINITY;
            for j in 0..k {
                let s = dot_f32(row, centroids.row(j));
                if s > best_sim {
                    best_sim = s;
                    best = j;
                }
            }
            (best, best_sim * inv_norm[i])
        })
        .unzip()
}

fn reseed_empty(
    c: &VectorCollection,
    centroids: &mut Centroids,
    assign: &mut [usize],
    cos: &[f32],
) -> bool {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    for &a in assign.iter() {
        sizes[a] += 1;
    }
    let mut moved = vec![false; assign.len()];
    let mut any = false;
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for i in 0..assign.len() {
            if moved[i] || sizes[assign[i]] < 2 {
                continue;
            }
            if far.is_none_or(|f| cos[i] < cos[f]) {
                far = Some(i);
            }
        }
        let Some(p) = far else { break };
        sizes[assign[p]] -= 1;
        assign[p] = j;
        sizes[j] = 1;
        moved[p] = true;
        let unit = unit_f32(c.row(p));
        centroids.data[j * c.dim()..(j + 1) * c.dim()].copy_from_slice(&unit);
        any = true;
    }
    any
}

fn update_centroids(c: &VectorCollection, centroids: &mut Centroids, assign: &[usize]) {
    let dim = c.dim();
    let k = centroids.len();
    let mut sums = vec![0f64; k * dim];
    for (i, &a) in assign.iter().enumerate() {
        let acc = &mut sums[a * dim..(a + 1) * dim];
        for (s, &x) in acc.iter_mut().zip(c.row(i)) {
            *s += x as f64;
        }
    }
    for j in 0..k {
        let s = &sums[j * dim..(j + 1) * dim];
        let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (dst, &x) in centroids.data[j * dim..(j + 1) * dim].iter_mut().zip(s) {
                *dst = (x / norm) as f32;
            }
        }
    }
}
