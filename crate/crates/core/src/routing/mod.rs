//! Cost-adjusted plug-in routing.
//!
//! Every router here has the same shape: estimate each candidate's loss on
//! the prompt with a [`GammaEstimator`], add `lambda * cost`, take the
//! argmin. Estimators differ only in how they turn a prompt embedding and an
//! LLM feature into a loss estimate.

mod cluster;
mod knn;
mod linear;
mod zero;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::LlmFeature;

pub use cluster::{cluster_gamma, ClusterGamma};
pub(crate) use knn::nearest_indices;
pub use knn::{knn_gamma, KnnGamma};
pub use linear::{fit_linear_gamma, LinearGamma};
pub use zero::{build_zero_router, zero_route, ConvexHullPolicy, HullPoint, Mixing};

/// One candidate in a live pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub feature: LlmFeature,
    pub cost: f64,
}

impl PoolEntry {
    pub fn new(feature: LlmFeature, cost: f64) -> Self {
        Self { feature, cost }
    }

    pub fn id(&self) -> &str {
        &self.feature.llm_id
    }
}

/// Names an estimator and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub kind: String,
    pub params: Vec<(String, f64)>,
}

/// Estimates the probability (or expected loss) of an LLM on a prompt.
///
/// Outputs are clamped to `[0, 1]` and deterministic. Implementations are
/// immutable after construction and safe to share between threads.
pub trait GammaEstimator: Send + Sync {
    fn descriptor(&self) -> Descriptor;

    fn gamma(&self, x: &[f64], feature: &LlmFeature) -> Result<f64>;

    /// Estimates for every pool entry, in pool order. Implementations
    /// override this to share per-prompt work across candidates.
    fn gamma_pool(&self, x: &[f64], pool: &[PoolEntry]) -> Result<Vec<f64>> {
        pool.iter().map(|e| self.gamma(x, &e.feature)).collect()
    }
}

impl<G: GammaEstimator + ?Sized> GammaEstimator for &G {
    fn descriptor(&self) -> Descriptor {
        (**self).descriptor()
    }

    fn gamma(&self, x: &[f64], feature: &LlmFeature) -> Result<f64> {
        (**self).gamma(x, feature)
    }

    fn gamma_pool(&self, x: &[f64], pool: &[PoolEntry]) -> Result<Vec<f64>> {
        (**self).gamma_pool(x, pool)
    }
}

pub(crate) fn clamp_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub llm_index: usize,
    /// `gamma + lambda * cost` per pool entry.
    pub adjusted_scores: Vec<f64>,
    pub lambda: f64,
}

/// Argmin of `scores` with ties broken by lower cost, then lower index.
pub fn argmin_with_tiebreak(scores: &[f64], costs: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        let ord = scores[i]
            .total_cmp(&scores[best])
            .then_with(|| costs[i].total_cmp(&costs[best]));
        if ord == Ordering::Less {
            best = i;
        }
    }
    best
}

/// Picks the entry with the smallest `gamma + lambda * cost` given
/// precomputed gammas.
pub fn route_with_gammas(gammas: &[f64], costs: &[f64], lambda: f64) -> Result<RoutingDecision> {
    if gammas.is_empty() {
        return Err(Error::Argument("cannot route over an empty pool".into()));
    }
    if gammas.len() != costs.len() {
        return Err(Error::Argument(format!(
            "{} gamma values for {} costs",
            gammas.len(),
            costs.len()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Argument(format!("lambda {lambda} must be non-negative")));
    }
    let adjusted_scores: Vec<f64> = gammas.iter().zip(costs).map(|(g, c)| g + lambda * c).collect();
    Ok(RoutingDecision {
        llm_index: argmin_with_tiebreak(&adjusted_scores, costs),
        adjusted_scores,
        lambda,
    })
}

/// Routes one prompt over a live pool.
pub fn route(gamma: &dyn GammaEstimator, x: &[f64], pool: &[PoolEntry], lambda: f64) -> Result<RoutingDecision> {
    if pool.is_empty() {
        return Err(Error::Argument("cannot route over an empty pool".into()));
    }
    let gammas = gamma.gamma_pool(x, pool)?;
    let costs: Vec<f64> = pool.iter().map(|e| e.cost).collect();
    route_with_gammas(&gammas, &costs, lambda)
}
