#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nsm_core::vecstore::{normalize, Metric, VectorCollection};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal via Box–Muller; good enough for fixtures.
pub fn gauss(r: &mut ChaCha8Rng) -> f32 {
    let u1: f64 = 1.0 - r.random::<f64>();
    let u2: f64 = r.random();
    ((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()) as f32
}

pub fn gaussian_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut r = rng(seed);
    (0..n).map(|_| (0..d).map(|_| gauss(&mut r)).collect()).collect()
}

/// `n` random directions in `d` dimensions, normalized, cosine metric.
pub fn unit_collection(n: usize, d: usize, seed: u64) -> Arc<VectorCollection> {
    let rows = gaussian_rows(n, d, seed);
    let c = VectorCollection::from_rows(&rows, Metric::Cosine).unwrap();
    Arc::new(normalize(&c).unwrap())
}

pub fn unit_queries(n: usize, d: usize, seed: u64) -> Vec<Vec<f32>> {
    let c = unit_collection(n, d, seed);
    c.rows().map(|r| r.to_vec()).collect()
}

pub fn cosine64(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Sort-based exact k-NN written without any library search code.
pub fn brute_knn(c: &VectorCollection, q: &[f32], k: usize, exclude: Option<usize>) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = c
        .rows()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, r)| (cosine64(q, r), i))
        .collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    all.truncate(k);
    all.into_iter().map(|x| x.1).collect()
}

pub fn brute_nn1(c: &VectorCollection) -> Vec<usize> {
    (0..c.len()).map(|u| brute_knn(c, c.row(u), 1, Some(u))[0]).collect()
}

pub fn recall(found: &[usize], truth: &[usize]) -> f64 {
    let hit = found.iter().filter(|id| truth.contains(id)).count();
    hit as f64 / truth.len() as f64
}
