//! Synthetic Gaussian-mixture collections with rated cluster-center queries.
//!
//! Randomness comes from ChaCha20 seeded with `seed`. Cluster `i` draws from
//! stream `i`, the uniform background from stream `clusters.len()`, and
//! [`MixtureSpec::geometric`] places centers using stream [`CENTER_STREAM`].
//! Normals use Box–Muller on 53-bit uniforms `(x >> 11) * 2^-53`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::evalstats::{average_ranks, RatingsTable};
use crate::vecstore::{normalize, LabeledQuerySet, Metric, VectorCollection};

pub const CENTER_STREAM: u64 = u64::MAX;

/// Fraction of the background extent used as center radius by default.
pub const DEFAULT_CENTER_RADIUS: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub center: Vec<f64>,
    pub sigma: f64,
    pub size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Background {
    pub count: usize,
    pub extent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub dim: usize,
    pub clusters: Vec<ClusterSpec>,
    pub background: Background,
    pub seed: u64,
    pub metric: Metric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricMixture {
    pub dim: usize,
    pub clusters: usize,
    pub cluster_size: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub background: Background,
    pub center_radius: f64,
    pub seed: u64,
    pub metric: Metric,
}

impl GeometricMixture {
    /// The 40-cluster, 50,000-point layout used by the end-to-end checks.
    pub fn standard(seed: u64) -> Self {
        Self {
            dim: 32,
            clusters: 40,
            cluster_size: 1000,
            sigma_min: 0.01,
            sigma_max: 0.7,
            background: Background {
                count: 10_000,
                extent: 1.0,
            },
            center_radius: DEFAULT_CENTER_RADIUS,
            seed,
            metric: Metric::Cosine,
        }
    }
}

struct Stream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl Stream {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let t = std::f64::consts::TAU * u2;
        self.spare = Some(r * t.sin());
        r * t.cos()
    }
}

/// Geometrically spaced widths from `lo` to `hi`.
pub fn geometric_sigmas(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

impl MixtureSpec {
    /// Clusters with geometric widths and centers at random directions,
    /// `center_radius * extent` from the origin.
    pub fn geometric(g: &GeometricMixture) -> Result<Self> {
        if g.clusters == 0 || g.dim == 0 {
            return Err(Error::param("need at least one cluster and one dimension"));
        }
        if !(g.sigma_min > 0.0 && g.sigma_max >= g.sigma_min && g.sigma_max.is_finite()) {
            return Err(Error::param(format!(
                "sigma range [{}, {}] is invalid",
                g.sigma_min, g.sigma_max
            )));
        }
        if !(g.center_radius > 0.0 && g.center_radius.is_finite()) {
            return Err(Error::param("center radius must be positive"));
        }
        let mut s = Stream::new(g.seed, CENTER_STREAM);
        let radius = g.center_radius * g.background.extent;
        let clusters = geometric_sigmas(g.clusters, g.sigma_min, g.sigma_max)
            .into_iter()
            .map(|sigma| {
                let mut dir: Vec<f64> = (0..g.dim).map(|_| s.normal()).collect();
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
                dir.iter_mut().for_each(|x| *x *= radius / norm);
                ClusterSpec {
                    center: dir,
                    sigma,
                    size: g.cluster_size,
                }
            })
            .collect();
        Ok(Self {
            dim: g.dim,
            clusters,
            background: g.background,
            seed: g.seed,
            metric: g.metric,
        })
    }

    pub fn total_points(&self) -> usize {
        self.clusters.iter().map(|c| c.size).sum::<usize>() + self.background.count
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::param("dimension must be positive"));
        }
        if self.clusters.is_empty() {
            return Err(Error::param("at least one cluster is required"));
        }
        for (i, c) in self.clusters.iter().enumerate() {
            if c.center.len() != self.dim {
                return Err(Error::param(format!(
                    "cluster {i}: center has {} coordinates, expected {}",
                    c.center.len(),
                    self.dim
                )));
            }
            if c.center.iter().any(|x| !x.is_finite()) {
                return Err(Error::param(format!("cluster {i}: center is not finite")));
            }
            if !(c.sigma > 0.0 && c.sigma.is_finite()) {
                return Err(Error::param(format!("cluster {i}: sigma {} is not positive", c.sigma)));
            }
            if c.size == 0 {
                return Err(Error::param(format!("cluster {i}: size is zero")));
            }
        }
        let e = self.background.extent;
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::param(format!("background extent {e} is not positive")));
        }
        if self.total_points() < 2 {
            return Err(Error::param("a mixture needs at least two points"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub collection: VectorCollection,
    pub queries: LabeledQuerySet,
    pub ratings: RatingsTable,
}

/// Samples the mixture. Cluster points come first in cluster order, then the
/// background. Ratings are the average rank of `1/sigma`, so sharper
/// clusters rate higher.
pub fn generate(spec: &MixtureSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let dim = spec.dim;
    let mut data = Vec::with_capacity(spec.total_points() * dim);
    for (i, c) in spec.clusters.iter().enumerate() {
        let mut s = Stream::new(spec.seed, i as u64);
        for _ in 0..c.size {
            for &mu in &c.center {
                data.push((mu + c.sigma * s.normal()) as f32);
            }
        }
    }
    let mut s = Stream::new(spec.seed, spec.clusters.len() as u64);
    let e = spec.background.extent;
    for _ in 0..spec.background.count * dim {
        data.push((-e + 2.0 * e * s.uniform()) as f32);
    }

    let mut collection = VectorCollection::new(dim, data, spec.metric)?;
    let centers: Vec<Vec<f32>> = spec
        .clusters
        .iter()
        .map(|c| c.center.iter().map(|&x| x as f32).collect())
        .collect();
    let mut qv = VectorCollection::from_rows(&centers, spec.metric)?;
    if spec.metric == Metric::Cosine {
        collection = normalize(&collection)?;
        qv = normalize(&qv)?;
    }
    let labels: Vec<String> = (0..spec.clusters.len()).map(|i| format!("cluster_{i}")).collect();
    let queries = LabeledQuerySet::new(labels.clone(), qv)?;

    let sharp: Vec<f64> = spec.clusters.iter().map(|c| 1.0 / c.sigma).collect();
    let ratings = RatingsTable::new(labels.into_iter().zip(average_ranks(&sharp)).collect())?;
    Ok(SyntheticData {
        collection,
        queries,
        ratings,
    })
}
