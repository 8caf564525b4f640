//! Synthetic routing problems drawn from a latent Gaussian mixture.
//!
//! Each prompt has a hidden component `z ~ pi`; its embedding is the
//! component centre plus isotropic Gaussian noise, and each LLM errs with
//! probability `clamp(Psi*[h][z] + jitter * u)` where `u` in `[-1, 1]` is
//! drawn per (prompt, LLM). With zero jitter the per-component errors are
//! exactly the per-prompt error probabilities, which makes the cluster rule
//! optimal; the jitter controls how far from that regime a problem sits.

use std::fs;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::clustering::sq_dist;
use crate::datamodel::{save_labels, save_pool, save_prompts, LabelMatrix, LlmProfile, PromptRecord};
use crate::error::{Error, Result};
use crate::features::{FeatureKind, LlmFeature};
use crate::rng::{self, fisher_yates, unit_f64, ChaCha8Rng};
use crate::routing::{argmin_with_tiebreak, clamp_unit, Descriptor, GammaEstimator, PoolEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub k_true: usize,
    pub pis: Vec<f64>,
    /// `k_true` rows of the embedding dimension.
    pub centers: Vec<Vec<f64>>,
    /// Per-coordinate standard deviation around a centre.
    pub spread: f64,
    /// `llm_error_table[h][k]`: error probability of LLM `h` on component `k`.
    pub llm_error_table: Vec<Vec<f64>>,
    pub llm_costs: Vec<f64>,
    pub within_cluster_jitter: f64,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn n_llms(&self) -> usize {
        self.llm_error_table.len()
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    pub fn llm_ids(&self) -> Vec<String> {
        (0..self.n_llms()).map(|h| format!("llm{h}")).collect()
    }

    pub fn pool(&self) -> Vec<LlmProfile> {
        self.llm_ids()
            .into_iter()
            .zip(&self.llm_costs)
            .map(|(id, &cost)| LlmProfile { id, cost })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k_true;
        if k == 0 {
            return Err(Error::Validation("k_true must be at least 1".into()));
        }
        if self.pis.len() != k || self.centers.len() != k {
            return Err(Error::Validation(format!(
                "{} mixing weights and {} centres for k_true = {k}",
                self.pis.len(),
                self.centers.len()
            )));
        }
        if self.pis.iter().any(|p| !(*p >= 0.0)) || (self.pis.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(
                "mixing weights must be non-negative and sum to 1".into(),
            ));
        }
        let d = self.dim();
        if d == 0
            || self
                .centers
                .iter()
                .any(|c| c.len() != d || c.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Validation(
                "centres must be finite rows of one positive dimension".into(),
            ));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(Error::Validation(format!("spread {} must be positive", self.spread)));
        }
        if self.n_llms() == 0 || self.llm_costs.len() != self.n_llms() {
            return Err(Error::Validation(format!(
                "{} error-table rows and {} costs",
                self.n_llms(),
                self.llm_costs.len()
            )));
        }
        for (h, row) in self.llm_error_table.iter().enumerate() {
            if row.len() != k || row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Validation(format!(
                    "error-table row {h} must have {k} entries in [0, 1]"
                )));
            }
        }
        if self.llm_costs.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::Validation("costs must be finite and non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.within_cluster_jitter) {
            return Err(Error::Validation(format!(
                "within_cluster_jitter {} outside [0, 1]",
                self.within_cluster_jitter
            )));
        }
        Ok(())
    }

    /// A spec keeping `n_llms` rows of the error table (and their costs),
    /// chosen without replacement by a seeded shuffle. Models drawing a
    /// fresh LLM pool for each trial.
    pub fn resample_pool(&self, n_llms: usize, seed: u64) -> Result<Self> {
        if n_llms == 0 || n_llms > self.n_llms() {
            return Err(Error::Argument(format!(
                "cannot draw {n_llms} LLMs from a table of {}",
                self.n_llms()
            )));
        }
        let mut order: Vec<usize> = (0..self.n_llms()).collect();
        fisher_yates(&mut order, &mut rng::seeded(seed, 0));
        order.truncate(n_llms);
        Ok(Self {
            llm_error_table: order.iter().map(|&h| self.llm_error_table[h].clone()).collect(),
            llm_costs: order.iter().map(|&h| self.llm_costs[h]).collect(),
            ..self.clone()
        })
    }

    /// Error probability of LLM `h` on component `k` for a prompt with
    /// jitter draw `u`.
    pub fn error_probability(&self, h: usize, k: usize, u: f64) -> f64 {
        clamp_unit(self.llm_error_table[h][k] + self.within_cluster_jitter * u)
    }

    /// `P(z = k | x)` from the known mixture densities.
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let inv = 1.0 / (2.0 * self.spread * self.spread);
        let logs: Vec<f64> = self
            .pis
            .iter()
            .zip(&self.centers)
            .map(|(&p, c)| {
                if p > 0.0 {
                    p.ln() - sq_dist(x, c) * inv
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|v| v / total).collect()
    }
}

/// Settings for drawing random mixture specs.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomSpecConfig {
    pub k_true: usize,
    pub dim: usize,
    pub n_llms: usize,
    /// Standard deviation of the centre coordinates.
    pub separation: f64,
    pub spread: f64,
    pub jitter: f64,
    /// Costs are drawn uniformly from this range.
    pub cost_range: (f64, f64),
}

impl Default for RandomSpecConfig {
    fn default() -> Self {
        Self {
            k_true: 4,
            dim: 8,
            n_llms: 6,
            separation: 4.0,
            spread: 1.0,
            jitter: 0.0,
            cost_range: (0.1, 1.0),
        }
    }
}

/// Draws a random spec: weights from a flat Dirichlet, Gaussian centres,
/// error probabilities uniform in `[0.05, 0.95]`.
pub fn random_spec(config: &RandomSpecConfig, seed: u64) -> Result<MixtureSpec> {
    let mut r = rng::seeded(seed, 0);
    let raw: Vec<f64> = (0..config.k_true).map(|_| -(1.0 - unit_f64(&mut r)).ln()).collect();
    let total: f64 = raw.iter().sum();
    let pis = raw.iter().map(|v| v / total).collect();
    let centers = (0..config.k_true)
        .map(|_| (0..config.dim).map(|_| config.separation * normal(&mut r)).collect())
        .collect();
    let llm_error_table = (0..config.n_llms)
        .map(|_| (0..config.k_true).map(|_| 0.05 + 0.9 * unit_f64(&mut r)).collect())
        .collect();
    let (lo, hi) = config.cost_range;
    let llm_costs = (0..config.n_llms).map(|_| lo + (hi - lo) * unit_f64(&mut r)).collect();
    let spec = MixtureSpec {
        k_true: config.k_true,
        pis,
        centers,
        spread: config.spread,
        llm_error_table,
        llm_costs,
        within_cluster_jitter: config.jitter,
        seed,
    };
    spec.validate()?;
    Ok(spec)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

/// A generated dataset with the hidden quantities kept for oracle checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub prompts: Vec<PromptRecord>,
    pub labels: LabelMatrix,
    pub pool: Vec<LlmProfile>,
    pub components: Vec<usize>,
    /// Jitter draws `u[prompt][llm]` in `[-1, 1]`.
    pub jitter_draws: Vec<Vec<f64>>,
}

impl SynthData {
    pub fn embeddings(&self) -> Vec<Vec<f64>> {
        self.prompts.iter().map(|p| p.embedding.clone()).collect()
    }

    /// Writes `prompts.jsonl`, `labels.csv`, `pool.csv` and
    /// `components.csv` (`prompt_id,component`) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_prompts(&dir.join("prompts.jsonl"), &self.prompts)?;
        save_labels(&dir.join("labels.csv"), &self.prompts, &self.pool, &self.labels)?;
        save_pool(&dir.join("pool.csv"), &self.pool)?;
        let mut comp = String::from("prompt_id,component\n");
        for (p, z) in self.prompts.iter().zip(&self.components) {
            comp.push_str(&format!("{},{z}\n", p.id));
        }
        let path = dir.join("components.csv");
        fs::write(&path, comp).map_err(|e| Error::io(path, e))
    }
}

/// Draws `n_prompts` prompts on stream 0 of the mixture's seed.
pub fn generate(spec: &MixtureSpec, n_prompts: usize) -> Result<SynthData> {
    generate_stream(spec, n_prompts, 0, "p")
}

/// Draws `n_prompts` prompts on a given stream of the mixture's seed, so that
/// independent splits come from one spec. Prompt ids are `{prefix}{i}`.
pub fn generate_stream(spec: &MixtureSpec, n_prompts: usize, stream: u64, prefix: &str) -> Result<SynthData> {
    spec.validate()?;
    if n_prompts == 0 {
        return Err(Error::Argument("n_prompts must be at least 1".into()));
    }
    let mut r = rng::seeded(spec.seed, stream);
    let m = spec.n_llms();
    let mut prompts = Vec::with_capacity(n_prompts);
    let mut components = Vec::with_capacity(n_prompts);
    let mut jitter_draws = Vec::with_capacity(n_prompts);
    let mut losses = Vec::with_capacity(n_prompts * m);
    for i in 0..n_prompts {
        let draw = unit_f64(&mut r);
        let mut z = spec.k_true - 1;
        let mut acc = 0.0;
        for (k, p) in spec.pis.iter().enumerate() {
            acc += p;
            if draw < acc && *p > 0.0 {
                z = k;
                break;
            }
        }
        let embedding = spec.centers[z]
            .iter()
            .map(|c| c + spec.spread * normal(&mut r))
            .collect();
        let mut us = Vec::with_capacity(m);
        for h in 0..m {
            let u = 2.0 * unit_f64(&mut r) - 1.0;
            let p = spec.error_probability(h, z, u);
            losses.push(if unit_f64(&mut r) < p { 1.0 } else { 0.0 });
            us.push(u);
        }
        prompts.push(PromptRecord {
            id: format!("{prefix}{i}"),
            embedding,
        });
        components.push(z);
        jitter_draws.push(us);
    }
    Ok(SynthData {
        prompts,
        labels: LabelMatrix::dense(n_prompts, m, losses)?,
        pool: spec.pool(),
        components,
        jitter_draws,
    })
}

/// `gamma(x, h) = sum_k P(z = k | x) * Psi*[h][k]` with the true posterior.
/// Pool features are rows of the true error table (see [`oracle_pool`]).
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGamma {
    spec: MixtureSpec,
}

pub fn posterior_gamma(spec: MixtureSpec) -> PosteriorGamma {
    PosteriorGamma { spec }
}

impl GammaEstimator for PosteriorGamma {
    fn descriptor(&self) -> Descriptor {
        Descriptor {
            kind: "mixture_posterior".into(),
            params: vec![("k".into(), self.spec.k_true as f64)],
        }
    }

    fn gamma(&self, x: &[f64], feature: &LlmFeature) -> Result<f64> {
        self.gamma_pool(x, std::slice::from_ref(&PoolEntry::new(feature.clone(), 0.0)))
            .map(|g| g[0])
    }

    fn gamma_pool(&self, x: &[f64], pool: &[PoolEntry]) -> Result<Vec<f64>> {
        if x.len() != self.spec.dim() {
            return Err(Error::Argument(format!(
                "embedding has dimension {}, mixture has {}",
                x.len(),
                self.spec.dim()
            )));
        }
        let post = self.spec.posterior(x);
        pool.iter()
            .map(|e| {
                if e.feature.len() != self.spec.k_true {
                    return Err(Error::Argument(format!(
                        "feature {:?} has {} entries, mixture has {} components",
                        e.feature.llm_id,
                        e.feature.len(),
                        self.spec.k_true
                    )));
                }
                Ok(clamp_unit(post.iter().zip(&e.feature.values).map(|(p, v)| p * v).sum()))
            })
            .collect()
    }
}

/// The mixture's LLMs as a pool whose features are their true per-component
/// error probabilities.
pub fn oracle_pool(spec: &MixtureSpec) -> Vec<PoolEntry> {
    spec.llm_ids()
        .into_iter()
        .zip(&spec.llm_error_table)
        .zip(&spec.llm_costs)
        .map(|((llm_id, row), &cost)| {
            PoolEntry::new(
                LlmFeature {
                    llm_id,
                    kind: FeatureKind::ClusterError,
                    values: row.clone(),
                    support: vec![0; row.len()],
                },
                cost,
            )
        })
        .collect()
}

/// Realized risk and cost of a rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleOutcome {
    /// Mean realized 0-1 loss of the chosen LLMs.
    pub risk: f64,
    pub cost: f64,
    /// Mean true error probability of the chosen LLMs.
    pub expected_risk: f64,
}

fn check_data(spec: &MixtureSpec, data: &SynthData) -> Result<()> {
    let n = data.prompts.len();
    if data.labels.n_llms() != spec.n_llms()
        || data.labels.n_prompts() != n
        || data.components.len() != n
        || data.jitter_draws.len() != n
    {
        return Err(Error::Argument("data was not generated by this spec".into()));
    }
    Ok(())
}

/// Per-prompt decisions of the rule `argmin_h gammas[h] + lambda * c(h)`,
/// scored against realized labels and true error probabilities.
fn score_rule<F>(spec: &MixtureSpec, data: &SynthData, lambda: f64, mut gammas: F) -> Result<(RuleOutcome, Vec<usize>)>
where
    F: FnMut(usize) -> Vec<f64>,
{
    check_data(spec, data)?;
    if !(lambda >= 0.0) {
        return Err(Error::Argument(format!("lambda {lambda} must be non-negative")));
    }
    let n = data.prompts.len();
    let costs = &spec.llm_costs;
    let (mut risk, mut cost, mut expected) = (0.0, 0.0, 0.0);
    let mut choices = Vec::with_capacity(n);
    for i in 0..n {
        let g = gammas(i);
        let scores: Vec<f64> = g.iter().zip(costs).map(|(g, c)| g + lambda * c).collect();
        let h = argmin_with_tiebreak(&scores, costs);
        risk += data.labels.get(i, h).unwrap_or(0.0);
        cost += costs[h];
        expected += spec.error_probability(h, data.components[i], data.jitter_draws[i][h]);
        choices.push(h);
    }
    let n = n as f64;
    Ok((
        RuleOutcome {
            risk: risk / n,
            cost: cost / n,
            expected_risk: expected / n,
        },
        choices,
    ))
}

/// The population cluster rule: routes by the posterior-weighted true
/// per-component errors plus `lambda * cost`.
pub fn oracle_rule_risk(spec: &MixtureSpec, data: &SynthData, lambda: f64) -> Result<RuleOutcome> {
    oracle_rule_decisions(spec, data, lambda).map(|(o, _)| o)
}

/// [`oracle_rule_risk`] together with the chosen LLM per prompt.
pub fn oracle_rule_decisions(spec: &MixtureSpec, data: &SynthData, lambda: f64) -> Result<(RuleOutcome, Vec<usize>)> {
    score_rule(spec, data, lambda, |i| {
        cluster_rule_gammas(spec, &data.prompts[i].embedding)
    })
}

fn cluster_rule_gammas(spec: &MixtureSpec, x: &[f64]) -> Vec<f64> {
    let post = spec.posterior(x);
    spec.llm_error_table
        .iter()
        .map(|row| post.iter().zip(row).map(|(p, v)| p * v).sum())
        .collect()
}

/// Per-prompt error probabilities `P(error | x, h)` including the prompt's
/// jitter draws.
fn per_prompt_gammas(spec: &MixtureSpec, x: &[f64], u: &[f64]) -> Vec<f64> {
    let post = spec.posterior(x);
    (0..spec.n_llms())
        .map(|h| {
            post.iter()
                .enumerate()
                .map(|(k, p)| p * spec.error_probability(h, k, u[h]))
                .sum()
        })
        .collect()
}

/// Realized risk of the per-prompt optimal rule.
pub fn per_prompt_rule_risk(spec: &MixtureSpec, data: &SynthData, lambda: f64) -> Result<RuleOutcome> {
    score_rule(spec, data, lambda, |i| {
        per_prompt_gammas(spec, &data.prompts[i].embedding, &data.jitter_draws[i])
    })
    .map(|(o, _)| o)
}

/// Excess-risk comparison between the cluster rule and the per-prompt
/// optimal rule on a fresh draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lambda: f64,
    /// Realized `(risk + lambda * cost)` of the cluster rule minus that of
    /// the per-prompt rule. At `lambda = 0` this is the excess 0-1 risk.
    pub lhs: f64,
    /// The same difference computed from true error probabilities.
    pub expected_lhs: f64,
    /// Mean over prompts of `max_{h, k} |P(error | x, z = k) - Psi*[h][k]|`.
    pub rhs: f64,
    /// Three binomial standard errors of the realized difference.
    pub slack: f64,
    pub holds: bool,
    /// Whether `lhs <= 2 * rhs + slack`.
    pub holds_factor2: bool,
    pub cluster_rule: RuleOutcome,
    pub per_prompt_rule: RuleOutcome,
}

/// Draws `n_prompts` fresh prompts (stream `stream`) and compares the two
/// rules, both computed from true spec quantities.
pub fn bound_check(spec: &MixtureSpec, n_prompts: usize, lambda: f64, stream: u64) -> Result<BoundReport> {
    let data = generate_stream(spec, n_prompts, stream, "t")?;
    let cluster_rule = oracle_rule_risk(spec, &data, lambda)?;
    let per_prompt_rule = per_prompt_rule_risk(spec, &data, lambda)?;
    let lagrangian = |o: &RuleOutcome, r: f64| r + lambda * o.cost;
    let lhs = lagrangian(&cluster_rule, cluster_rule.risk) - lagrangian(&per_prompt_rule, per_prompt_rule.risk);
    let expected_lhs = lagrangian(&cluster_rule, cluster_rule.expected_risk)
        - lagrangian(&per_prompt_rule, per_prompt_rule.expected_risk);

    let mut rhs = 0.0;
    for u in &data.jitter_draws {
        let mut worst: f64 = 0.0;
        for (h, row) in spec.llm_error_table.iter().enumerate() {
            for (k, psi) in row.iter().enumerate() {
                worst = worst.max((spec.error_probability(h, k, u[h]) - psi).abs());
            }
        }
        rhs += worst;
    }
    rhs /= n_prompts as f64;

    let n = n_prompts as f64;
    let var = |r: f64| r * (1.0 - r) / n;
    let slack = 3.0 * (var(cluster_rule.risk) + var(per_prompt_rule.risk)).sqrt();
    Ok(BoundReport {
        lambda,
        lhs,
        expected_lhs,
        rhs,
        slack,
        holds: lhs <= rhs + slack,
        holds_factor2: lhs <= 2.0 * rhs + slack,
        cluster_rule,
        per_prompt_rule,
    })
}
