//! LLM feature vectors: how a model is represented to the router.
//!
//! A model is described by its errors on a fixed validation set, either raw
//! (one entry per validation prompt) or averaged within prompt clusters. When
//! only pairwise preferences exist, per-cluster Bradley–Terry–Luce strengths
//! are mapped to loss proxies instead.
//!
//! A new model joins a live pool by shipping one of these documents plus a
//! cost; no router parameters change.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::datamodel::{LabelMatrix, Outcome, PairwiseRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    RawError,
    ClusterError,
    BtlCluster,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::RawError => "raw_error",
            FeatureKind::ClusterError => "cluster_error",
            FeatureKind::BtlCluster => "btl_cluster",
        }
    }
}

/// Serialized as `{"llm_id", "kind", "values", "support"}`.
///
/// `support[j]` counts the observations behind `values[j]`; zero marks an
/// imputed entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmFeature {
    pub llm_id: String,
    pub kind: FeatureKind,
    pub values: Vec<f64>,
    pub support: Vec<u64>,
}

impl LlmFeature {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_imputed(&self, j: usize) -> bool {
        self.support[j] == 0
    }

    /// Support-weighted mean of the values: the model's overall validation
    /// loss for error features.
    pub fn mean_loss(&self) -> f64 {
        let total: u64 = self.support.iter().sum();
        if total == 0 {
            return self.values.iter().sum::<f64>() / self.values.len().max(1) as f64;
        }
        self.values
            .iter()
            .zip(&self.support)
            .map(|(v, &s)| v * s as f64)
            .sum::<f64>()
            / total as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.support.len() {
            return Err(Error::Validation(format!(
                "feature {:?} has {} values but {} support counts",
                self.llm_id,
                self.values.len(),
                self.support.len()
            )));
        }
        if self.values.is_empty() {
            return Err(Error::Validation(format!("feature {:?} is empty", self.llm_id)));
        }
        if let Some(v) = self.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!(
                "feature {:?} has value {v} outside [0, 1]",
                self.llm_id
            )));
        }
        Ok(())
    }
}

fn global_mean(llm_id: &str, column: &[Option<f64>]) -> Result<f64> {
    let (sum, n) = column.iter().flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        return Err(Error::InsufficientData(format!(
            "LLM {llm_id:?} has no observed validation labels"
        )));
    }
    Ok(sum / n as f64)
}

/// The identity feature map: losses in validation order, with masked entries
/// imputed by the model's mean observed loss.
pub fn raw_error_vector(llm_id: &str, column: &[Option<f64>]) -> Result<LlmFeature> {
    let mean = global_mean(llm_id, column)?;
    Ok(LlmFeature {
        llm_id: llm_id.to_string(),
        kind: FeatureKind::RawError,
        values: column.iter().map(|v| v.unwrap_or(mean)).collect(),
        support: column.iter().map(|v| u64::from(v.is_some())).collect(),
    })
}

/// Mean observed loss per cluster. A cluster without observed labels gets the
/// model's global mean loss and support 0.
pub fn cluster_error_vector(
    llm_id: &str,
    column: &[Option<f64>],
    assignments: &[usize],
    k: usize,
) -> Result<LlmFeature> {
    if column.len() != assignments.len() {
        return Err(Error::Argument(format!(
            "{} labels but {} cluster assignments",
            column.len(),
            assignments.len()
        )));
    }
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    if let Some(&bad) = assignments.iter().find(|&&a| a >= k) {
        return Err(Error::Argument(format!("cluster index {bad} out of range for k = {k}")));
    }
    let mean = global_mean(llm_id, column)?;
    let mut sums = vec![0.0; k];
    let mut counts = vec![0u64; k];
    for (v, &a) in column.iter().zip(assignments) {
        if let Some(v) = v {
            sums[a] += v;
            counts[a] += 1;
        }
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| if n == 0 { mean } else { s / n as f64 })
        .collect();
    Ok(LlmFeature {
        llm_id: llm_id.to_string(),
        kind: FeatureKind::ClusterError,
        values,
        support: counts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtlConfig {
    /// Added to the win count in both directions of every compared pair.
    pub pseudo_count: f64,
    pub max_iter: usize,
    /// Stop once no log-strength moves by more than this.
    pub tol: f64,
}

impl Default for BtlConfig {
    fn default() -> Self {
        Self {
            pseudo_count: 0.1,
            max_iter: 1000,
            tol: 1e-8,
        }
    }
}

/// Centered log-strengths of a Bradley–Terry–Luce fit.
///
/// `wins[i][j]` is the (possibly fractional) number of times `i` beat `j`.
/// Items are assumed to appear in at least one comparison. Uses the
/// minorization–maximization update
/// `p_i <- W_i / sum_j n_ij / (p_i + p_j)`, renormalizing to zero mean
/// log-strength after each sweep.
pub fn fit_btl(wins: &[Vec<f64>], config: &BtlConfig) -> Result<Vec<f64>> {
    let n = wins.len();
    let mut log_p = vec![0.0; n];
    if n < 2 {
        return Ok(log_p);
    }
    let total_wins: Vec<f64> = wins.iter().map(|row| row.iter().sum()).collect();
    if let Some(i) = total_wins.iter().position(|&w| w <= 0.0) {
        return Err(Error::Numerical(format!(
            "item {i} never wins, so its BTL strength diverges; use a positive pseudo_count"
        )));
    }
    let mut p = vec![1.0; n];
    for _ in 0..config.max_iter {
        let mut next = vec![0.0; n];
        for i in 0..n {
            let denom: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| (wins[i][j] + wins[j][i]) / (p[i] + p[j]))
                .sum();
            next[i] = total_wins[i] / denom;
        }
        let mean_log = next.iter().map(|v: &f64| v.ln()).sum::<f64>() / n as f64;
        let mut delta: f64 = 0.0;
        for i in 0..n {
            let l = next[i].ln() - mean_log;
            if !l.is_finite() {
                return Err(Error::Numerical("BTL strengths became non-finite".into()));
            }
            delta = delta.max((l - log_p[i]).abs());
            log_p[i] = l;
            p[i] = l.exp();
        }
        if delta < config.tol {
            break;
        }
    }
    Ok(log_p)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-cluster BTL loss proxies for every LLM in `llm_ids`.
///
/// Within each cluster, ties count half a win each way and every compared
/// pair gets `pseudo_count` extra wins in both directions. The loss proxy is
/// `1 - sigmoid(centered log-strength)`; an LLM never compared in a cluster
/// gets 0.5 with support 0. Support counts comparisons.
pub fn btl_cluster_scores(
    comparisons: &[PairwiseRecord],
    assignments: &HashMap<String, usize>,
    llm_ids: &[String],
    k: usize,
    config: &BtlConfig,
) -> Result<Vec<LlmFeature>> {
    if !(config.pseudo_count >= 0.0) {
        return Err(Error::Argument(format!(
            "pseudo_count {} must be non-negative",
            config.pseudo_count
        )));
    }
    let index: HashMap<&str, usize> = llm_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let m = llm_ids.len();
    // Per cluster: raw win counts and whether a pair was ever compared.
    let mut wins = vec![vec![vec![0.0; m]; m]; k];
    let mut compared = vec![vec![vec![false; m]; m]; k];
    let mut support = vec![vec![0u64; k]; m];
    for c in comparisons {
        let a = *index
            .get(c.llm_a.as_str())
            .ok_or_else(|| Error::Consistency(format!("comparison names unknown LLM {:?}", c.llm_a)))?;
        let b = *index
            .get(c.llm_b.as_str())
            .ok_or_else(|| Error::Consistency(format!("comparison names unknown LLM {:?}", c.llm_b)))?;
        let z = *assignments
            .get(&c.prompt_id)
            .ok_or_else(|| Error::Consistency(format!("prompt {:?} has no cluster assignment", c.prompt_id)))?;
        if z >= k {
            return Err(Error::Argument(format!("cluster index {z} out of range for k = {k}")));
        }
        if a == b {
            return Err(Error::Validation(format!("comparison of {:?} against itself", c.llm_a)));
        }
        match c.outcome {
            Outcome::AWins => wins[z][a][b] += 1.0,
            Outcome::BWins => wins[z][b][a] += 1.0,
            Outcome::Tie => {
                wins[z][a][b] += 0.5;
                wins[z][b][a] += 0.5;
            }
        }
        compared[z][a][b] = true;
        compared[z][b][a] = true;
        support[a][z] += 1;
        support[b][z] += 1;
    }

    let mut values = vec![vec![0.5; k]; m];
    for z in 0..k {
        let members: Vec<usize> = (0..m).filter(|&i| support[i][z] > 0).collect();
        if members.is_empty() {
            continue;
        }
        let local: Vec<Vec<f64>> = members
            .iter()
            .map(|&i| {
                members
                    .iter()
                    .map(|&j| {
                        let smooth = if compared[z][i][j] { config.pseudo_count } else { 0.0 };
                        wins[z][i][j] + smooth
                    })
                    .collect()
            })
            .collect();
        let log_p = fit_btl(&local, config)?;
        for (&i, l) in members.iter().zip(log_p) {
            values[i][z] = 1.0 - sigmoid(l);
        }
    }

    Ok(llm_ids
        .iter()
        .zip(values)
        .zip(support)
        .map(|((id, values), support)| LlmFeature {
            llm_id: id.clone(),
            kind: FeatureKind::BtlCluster,
            values,
            support,
        })
        .collect())
}

/// Raw-error features for every column of `labels`, named by `llm_ids`.
pub fn raw_error_features(labels: &LabelMatrix, llm_ids: &[String]) -> Result<Vec<LlmFeature>> {
    check_ids(labels, llm_ids)?;
    llm_ids
        .iter()
        .enumerate()
        .map(|(j, id)| raw_error_vector(id, &labels.column(j)))
        .collect()
}

/// Per-cluster error features for every column of `labels`, with prompts
/// assigned by `model`.
pub fn cluster_error_features(
    model: &ClusterModel,
    embeddings: &[Vec<f64>],
    labels: &LabelMatrix,
    llm_ids: &[String],
) -> Result<Vec<LlmFeature>> {
    check_ids(labels, llm_ids)?;
    if embeddings.len() != labels.n_prompts() {
        return Err(Error::Argument(format!(
            "{} embeddings for {} labelled prompts",
            embeddings.len(),
            labels.n_prompts()
        )));
    }
    let assignments = model.assign_embeddings(embeddings)?;
    llm_ids
        .iter()
        .enumerate()
        .map(|(j, id)| cluster_error_vector(id, &labels.column(j), &assignments, model.k))
        .collect()
}

fn check_ids(labels: &LabelMatrix, llm_ids: &[String]) -> Result<()> {
    if labels.n_llms() != llm_ids.len() {
        return Err(Error::Argument(format!(
            "{} LLM ids for {} label columns",
            llm_ids.len(),
            labels.n_llms()
        )));
    }
    Ok(())
}
