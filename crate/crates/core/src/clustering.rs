//! K-means over prompt embeddings and the hard cluster-assignment map.
//!
//! Lloyd's algorithm with k-means++ seeding on raw embeddings under squared
//! Euclidean distance. Restart `r` draws from stream `r` of the seeded
//! generator; the lowest-inertia restart wins (earliest on ties).

use serde::{Deserialize, Serialize};

use crate::datamodel::PromptRecord;
use crate::error::{Error, Result};
use crate::rng::{self, ChaCha8Rng};

/// Fitted centroids. `assign` is the hard map from an embedding to the index
/// of its nearest centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub seed: u64,
    pub inertia: f64,
    pub centroids: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub n_restarts: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 100,
            rel_tol: 1e-6,
            n_restarts: 1,
        }
    }

    pub fn with_restarts(mut self, n_restarts: usize) -> Self {
        self.n_restarts = n_restarts;
        self
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid and its squared distance; lowest index on ties.
fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

impl ClusterModel {
    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn assign(&self, embedding: &[f64]) -> Result<usize> {
        if embedding.len() != self.dim() {
            return Err(Error::Argument(format!(
                "embedding has dimension {}, cluster model expects {}",
                embedding.len(),
                self.dim()
            )));
        }
        Ok(nearest(&self.centroids, embedding).0)
    }

    pub fn assign_all(&self, prompts: &[PromptRecord]) -> Result<Vec<usize>> {
        prompts.iter().map(|p| self.assign(&p.embedding)).collect()
    }

    pub fn assign_embeddings(&self, embeddings: &[Vec<f64>]) -> Result<Vec<usize>> {
        embeddings.iter().map(|x| self.assign(x)).collect()
    }

    /// Checks the invariants of a model read from outside.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.centroids.len() != self.k {
            return Err(Error::Validation(format!(
                "cluster model declares k = {} but has {} centroids",
                self.k,
                self.centroids.len()
            )));
        }
        let dim = self.dim();
        if self
            .centroids
            .iter()
            .any(|c| c.len() != dim || c.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Validation(
                "centroids must be finite and share one dimension".into(),
            ));
        }
        Ok(())
    }
}

/// Fits K-means; see the module docs for the algorithm and seeding.
pub fn fit_kmeans(points: &[Vec<f64>], config: &KMeansConfig) -> Result<ClusterModel> {
    let k = config.k;
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::Argument(format!(
            "{} points cannot form {k} clusters",
            points.len()
        )));
    }
    if config.max_iter == 0 {
        return Err(Error::Argument("max_iter must be at least 1".into()));
    }
    if !(config.rel_tol >= 0.0) {
        return Err(Error::Argument(format!(
            "rel_tol {} must be non-negative",
            config.rel_tol
        )));
    }
    let dim = points[0].len();
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::Argument(format!(
                "point {i} has dimension {}, expected {dim}",
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("point {i} has a non-finite coordinate")));
        }
    }

    let mut best: Option<(Vec<Vec<f64>>, f64)> = None;
    for restart in 0..config.n_restarts.max(1) {
        let mut rng = rng::seeded(config.seed, restart as u64);
        let (centroids, inertia) = lloyd(points, k, config, &mut rng);
        if best.as_ref().is_none_or(|(_, b)| inertia < *b) {
            best = Some((centroids, inertia));
        }
    }
    let (centroids, inertia) = best.expect("at least one restart");
    Ok(ClusterModel {
        k,
        seed: config.seed,
        inertia,
        centroids,
    })
}

fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let first = (rng::unit_f64(rng) * n as f64) as usize;
    let mut centroids = vec![points[first.min(n - 1)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng::unit_f64(rng) * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            // Guard against landing on a zero-weight point through rounding.
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&d| d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            // Every point coincides with a centroid already.
            ((rng::unit_f64(rng) * n as f64) as usize).min(n - 1)
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign_step(points: &[Vec<f64>], centroids: &[Vec<f64>], labels: &mut [usize], dists: &mut [f64]) -> f64 {
    let mut inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (j, d) = nearest(centroids, p);
        labels[i] = j;
        dists[i] = d;
        inertia += d;
    }
    inertia
}

/// Moves every centroid to the mean of its points. An empty cluster takes
/// the point currently farthest from its own centroid; that point is then
/// reassigned and excluded from later repairs in the same pass.
fn update_step(points: &[Vec<f64>], centroids: &mut [Vec<f64>], labels: &mut [usize], dists: &mut [f64]) {
    let k = centroids.len();
    let dim = points[0].len();
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            break;
        };
        // Only points from clusters with at least two members may move.
        let mut far: Option<usize> = None;
        for i in 0..points.len() {
            if counts[labels[i]] < 2 {
                continue;
            }
            if far.is_none_or(|f| dists[i] > dists[f]) {
                far = Some(i);
            }
        }
        let far = far.expect("n >= k guarantees a cluster with two points");
        centroids[empty] = points[far].clone();
        labels[far] = empty;
        dists[far] = 0.0;
    }

    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels.iter()) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
        *c = s.into_iter().map(|v| v / n as f64).collect();
    }
}

fn lloyd(points: &[Vec<f64>], k: usize, config: &KMeansConfig, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, f64) {
    let n = points.len();
    let mut centroids = kmeans_plus_plus(points, k, rng);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut inertia = assign_step(points, &centroids, &mut labels, &mut dists);
    for _ in 0..config.max_iter {
        let prev_labels = labels.clone();
        update_step(points, &mut centroids, &mut labels, &mut dists);
        let next = assign_step(points, &centroids, &mut labels, &mut dists);
        debug_assert!(
            next <= inertia * (1.0 + 1e-12) + 1e-12,
            "inertia increased from {inertia} to {next}"
        );
        let improvement = inertia - next;
        inertia = next;
        if labels == prev_labels || inertia == 0.0 || improvement <= config.rel_tol * inertia {
            break;
        }
    }
    // Leave the centroids at the means of the final assignment.
    update_step(points, &mut centroids, &mut labels, &mut dists);
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum();
    (centroids, inertia)
}
