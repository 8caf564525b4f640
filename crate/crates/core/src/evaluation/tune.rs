use serde::{Deserialize, Serialize};

use super::{default_lambda_grid, metrics_from_points, sweep, sweep_gammas};
use crate::clustering::{fit_kmeans, KMeansConfig};
use crate::datamodel::LabelMatrix;
use crate::error::{Error, Result};
use crate::features::{cluster_error_features, raw_error_features};
use crate::learned_map::{learned_gamma, train_map, Arch, TrainConfig};
use crate::routing::{cluster_gamma, nearest_indices, PoolEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouterKind {
    Knn,
    KmeansCluster,
    LearnedMap,
}

/// Default candidate counts for `n_val` validation prompts: 5 to
/// `n_val / 3` neighbours for K-NN, 3 to `n_val / 50` clusters otherwise.
/// A range that comes out empty collapses to its upper end (at least 1).
pub fn default_candidates(kind: RouterKind, n_val: usize) -> Vec<usize> {
    let (lo, hi) = match kind {
        RouterKind::Knn => (5, n_val / 3),
        RouterKind::KmeansCluster | RouterKind::LearnedMap => (3, n_val / 50),
    };
    if hi < lo {
        vec![hi.max(1)]
    } else {
        (lo..=hi).collect()
    }
}

/// Count used when there are no training LLMs to tune against:
/// `floor(sqrt(n_val))` neighbours, or `max(1, n_val / 50)` clusters.
pub fn fallback_k(kind: RouterKind, n_val: usize) -> usize {
    match kind {
        RouterKind::Knn => ((n_val as f64).sqrt().floor() as usize).max(1),
        RouterKind::KmeansCluster | RouterKind::LearnedMap => (n_val / 50).max(1),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub seed: u64,
    pub kmeans_restarts: usize,
    /// Lambda grid for the validation sweeps; the pool's default grid when
    /// `None`.
    pub lambdas: Option<Vec<f64>>,
    pub arch: Arch,
    pub train: TrainConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            kmeans_restarts: 1,
            lambdas: None,
            arch: Arch::LinearSoftmax,
            train: TrainConfig::default(),
        }
    }
}

/// Labelled training and validation prompts for the training LLMs.
#[derive(Debug, Clone, Copy)]
pub struct TuneData<'a> {
    pub train_embeddings: &'a [Vec<f64>],
    pub train_labels: &'a LabelMatrix,
    pub val_embeddings: &'a [Vec<f64>],
    pub val_labels: &'a LabelMatrix,
    pub llm_ids: &'a [String],
    pub costs: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub chosen: usize,
    /// Validation area per evaluated candidate, ascending in K. Empty when
    /// the fallback was used.
    pub areas: Vec<(usize, f64)>,
    pub fallback: bool,
}

/// Picks the count with the largest validation deferral-curve area (ties to
/// the smaller count).
///
/// Each candidate router is built for the training LLMs with LLM features
/// taken from their training-split labels, then swept over the validation
/// prompts.
pub fn select_k(
    candidates: &[usize],
    kind: RouterKind,
    data: TuneData<'_>,
    config: &SelectionConfig,
) -> Result<Selection> {
    let n_val = data.val_embeddings.len();
    if data.llm_ids.is_empty() {
        return Ok(Selection {
            chosen: fallback_k(kind, n_val),
            areas: Vec::new(),
            fallback: true,
        });
    }
    if candidates.is_empty() {
        return Err(Error::Argument("no candidate counts to try".into()));
    }
    let n_train = data.train_embeddings.len();
    let mut ks = candidates.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k > n_train) {
        return Err(Error::Argument(format!(
            "candidate {bad} outside [1, {n_train}] for {n_train} training prompts"
        )));
    }
    if data.costs.len() != data.llm_ids.len() || data.val_labels.n_llms() != data.llm_ids.len() {
        return Err(Error::Argument(
            "costs, ids and validation labels disagree on the LLM count".into(),
        ));
    }
    let lambdas = config
        .lambdas
        .clone()
        .unwrap_or_else(|| default_lambda_grid(data.costs));
    let area = |curve: super::DeferralCurve| metrics_from_points(&curve.normalized(), 1.0).map(|m| m.area);

    let mut areas = Vec::with_capacity(ks.len());
    match kind {
        RouterKind::Knn => {
            let raw = raw_error_features(data.train_labels, data.llm_ids)?;
            let k_max = *ks.last().expect("non-empty");
            let neighbors: Vec<Vec<usize>> = data
                .val_embeddings
                .iter()
                .map(|x| nearest_indices(data.train_embeddings, x, k_max))
                .collect();
            for &k in &ks {
                let gammas: Vec<Vec<f64>> = neighbors
                    .iter()
                    .map(|nn| {
                        raw.iter()
                            .map(|f| (nn[..k].iter().map(|&i| f.values[i]).sum::<f64>() / k as f64).clamp(0.0, 1.0))
                            .collect()
                    })
                    .collect();
                areas.push((k, area(sweep_gammas(&gammas, data.val_labels, data.costs, &lambdas)?)?));
            }
        }
        RouterKind::KmeansCluster | RouterKind::LearnedMap => {
            for &k in &ks {
                let kcfg = KMeansConfig::new(k, config.seed).with_restarts(config.kmeans_restarts);
                let model = fit_kmeans(data.train_embeddings, &kcfg)?;
                let features = cluster_error_features(&model, data.train_embeddings, data.train_labels, data.llm_ids)?;
                let pool: Vec<PoolEntry> = features
                    .iter()
                    .cloned()
                    .zip(data.costs)
                    .map(|(f, &c)| PoolEntry::new(f, c))
                    .collect();
                let curve = if kind == RouterKind::KmeansCluster {
                    sweep(
                        &cluster_gamma(model),
                        data.val_embeddings,
                        data.val_labels,
                        &pool,
                        &lambdas,
                    )?
                } else {
                    let params = train_map(
                        data.train_embeddings,
                        data.train_labels,
                        &features,
                        config.arch,
                        &config.train,
                    )?;
                    sweep(
                        &learned_gamma(params),
                        data.val_embeddings,
                        data.val_labels,
                        &pool,
                        &lambdas,
                    )?
                };
                areas.push((k, area(curve)?));
            }
        }
    }
    let mut chosen = areas[0];
    for &(k, a) in &areas[1..] {
        if a > chosen.1 {
            chosen = (k, a);
        }
    }
    Ok(Selection {
        chosen: chosen.0,
        areas,
        fallback: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids() {
        assert_eq!(default_candidates(RouterKind::Knn, 30), (5..=10).collect::<Vec<_>>());
        assert_eq!(
            default_candidates(RouterKind::KmeansCluster, 500),
            (3..=10).collect::<Vec<_>>()
        );
        assert_eq!(default_candidates(RouterKind::LearnedMap, 100), vec![2]);
        assert_eq!(default_candidates(RouterKind::Knn, 9), vec![3]);
    }

    #[test]
    fn fallbacks() {
        assert_eq!(fallback_k(RouterKind::Knn, 500), 22);
        assert_eq!(fallback_k(RouterKind::KmeansCluster, 500), 10);
        assert_eq!(fallback_k(RouterKind::KmeansCluster, 20), 1);
    }

    fn one_dim(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64]).collect()
    }

    #[test]
    fn no_training_llms_uses_fallback() {
        let e = one_dim(100);
        let empty = LabelMatrix::dense(100, 0, vec![]).unwrap();
        let data = TuneData {
            train_embeddings: &e,
            train_labels: &empty,
            val_embeddings: &e,
            val_labels: &empty,
            llm_ids: &[],
            costs: &[],
        };
        let s = select_k(&[3], RouterKind::Knn, data, &SelectionConfig::default()).unwrap();
        assert!(s.fallback);
        assert_eq!(s.chosen, 10);
    }

    #[test]
    fn dominating_count_wins() {
        // Two LLMs whose errors alternate on a 1-d line in blocks of 4.
        // One neighbour predicts each validation point exactly; 8 mixes the
        // blocks and can't tell the models apart.
        let n = 64;
        let e = one_dim(n);
        let rows: Vec<Vec<Option<f64>>> = (0..n)
            .map(|i| {
                let a = if (i / 4) % 2 == 0 { 0.0 } else { 1.0 };
                vec![Some(a), Some(1.0 - a)]
            })
            .collect();
        let labels = LabelMatrix::from_rows(&rows, 2).unwrap();
        let ids = vec!["a".to_string(), "b".to_string()];
        let data = TuneData {
            train_embeddings: &e,
            train_labels: &labels,
            val_embeddings: &e,
            val_labels: &labels,
            llm_ids: &ids,
            costs: &[1.0, 1.0],
        };
        let s = select_k(&[8, 1], RouterKind::Knn, data, &SelectionConfig::default()).unwrap();
        assert_eq!(s.chosen, 1);
        assert_eq!(s.areas[0].0, 1);
        assert!(s.areas[0].1 > s.areas[1].1);
        assert!(matches!(
            select_k(&[65], RouterKind::Knn, data, &SelectionConfig::default()),
            Err(Error::Argument(_))
        ));
    }
}
