use crate::clustering::sq_dist;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, LlmFeature};

use super::{clamp_unit, Descriptor, GammaEstimator, PoolEntry};

/// `gamma(x, h)` = mean of `h`'s raw validation errors over the
/// `k_neighbors` validation prompts closest to `x` (Euclidean; ties on
/// distance go to the lower validation index).
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGamma {
    val_embeddings: Vec<Vec<f64>>,
    k_neighbors: usize,
}

pub fn knn_gamma(val_embeddings: Vec<Vec<f64>>, k_neighbors: usize) -> Result<KnnGamma> {
    if k_neighbors == 0 || k_neighbors > val_embeddings.len() {
        return Err(Error::Argument(format!(
            "k_neighbors = {k_neighbors} must lie in [1, {}]",
            val_embeddings.len()
        )));
    }
    let dim = val_embeddings[0].len();
    if val_embeddings.iter().any(|v| v.len() != dim) {
        return Err(Error::Argument("validation embeddings differ in dimension".into()));
    }
    Ok(KnnGamma {
        val_embeddings,
        k_neighbors,
    })
}

/// Validation indices sorted by distance to `x`, lower index first on ties,
/// truncated to `k`.
pub(crate) fn nearest_indices(points: &[Vec<f64>], x: &[f64], k: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (sq_dist(p, x), i)).collect();
    let by = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, by);
        scored.truncate(k);
    }
    scored.sort_by(by);
    scored.into_iter().map(|(_, i)| i).collect()
}

impl KnnGamma {
    pub fn k_neighbors(&self) -> usize {
        self.k_neighbors
    }

    pub fn neighbors(&self, x: &[f64]) -> Result<Vec<usize>> {
        let dim = self.val_embeddings[0].len();
        if x.len() != dim {
            return Err(Error::Argument(format!(
                "embedding has dimension {}, validation set has {dim}",
                x.len()
            )));
        }
        Ok(nearest_indices(&self.val_embeddings, x, self.k_neighbors))
    }

    fn average(&self, neighbors: &[usize], feature: &LlmFeature) -> Result<f64> {
        if feature.kind != FeatureKind::RawError || feature.len() != self.val_embeddings.len() {
            return Err(Error::Argument(format!(
                "K-NN router needs a raw_error feature over {} validation prompts; {:?} is {} of length {}",
                self.val_embeddings.len(),
                feature.llm_id,
                feature.kind.as_str(),
                feature.len()
            )));
        }
        let sum: f64 = neighbors.iter().map(|&i| feature.values[i]).sum();
        Ok(clamp_unit(sum / neighbors.len() as f64))
    }
}

impl GammaEstimator for KnnGamma {
    fn descriptor(&self) -> Descriptor {
        Descriptor {
            kind: "knn".into(),
            params: vec![("k_neighbors".into(), self.k_neighbors as f64)],
        }
    }

    fn gamma(&self, x: &[f64], feature: &LlmFeature) -> Result<f64> {
        self.average(&self.neighbors(x)?, feature)
    }

    fn gamma_pool(&self, x: &[f64], pool: &[PoolEntry]) -> Result<Vec<f64>> {
        let nn = self.neighbors(x)?;
        pool.iter().map(|e| self.average(&nn, &e.feature)).collect()
    }
}
