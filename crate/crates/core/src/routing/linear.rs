use crate::datamodel::LabelMatrix;
use crate::error::{Error, Result};
use crate::features::LlmFeature;

use super::{clamp_unit, Descriptor, GammaEstimator};

/// Per-LLM linear loss model `gamma(x, h) = w_h . x + b_h`, clamped to
/// `[0, 1]`. Only answers for LLMs seen at fit time.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGamma {
    llm_ids: Vec<String>,
    weights: Vec<Vec<f64>>,
    intercepts: Vec<f64>,
    ridge: f64,
}

impl LinearGamma {
    pub fn coefficients(&self, llm_id: &str) -> Option<(&[f64], f64)> {
        let i = self.llm_ids.iter().position(|id| id == llm_id)?;
        Some((&self.weights[i], self.intercepts[i]))
    }

    /// Unclamped prediction.
    pub fn predict(&self, x: &[f64], llm_id: &str) -> Result<f64> {
        let (w, b) = self
            .coefficients(llm_id)
            .ok_or_else(|| Error::Argument(format!("linear router was not fit for LLM {llm_id:?}")))?;
        if x.len() != w.len() {
            return Err(Error::Argument(format!(
                "embedding has dimension {}, linear router expects {}",
                x.len(),
                w.len()
            )));
        }
        Ok(w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b)
    }
}

impl GammaEstimator for LinearGamma {
    fn descriptor(&self) -> Descriptor {
        Descriptor {
            kind: "linear".into(),
            params: vec![("ridge".into(), self.ridge)],
        }
    }

    fn gamma(&self, x: &[f64], feature: &LlmFeature) -> Result<f64> {
        Ok(clamp_unit(self.predict(x, &feature.llm_id)?))
    }
}

/// In-place Cholesky factorization of a symmetric matrix; `None` when a pivot
/// is not clearly positive relative to the matrix scale.
fn cholesky(mut a: Vec<Vec<f64>>) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let scale = (0..n).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if d <= 1e-12 * scale {
            return None;
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / d;
        }
    }
    Some(a)
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    x
}

/// Fits one ridge regression per LLM column by the normal equations,
/// minimizing `sum (w.x + b - loss)^2 + ridge * |w|^2` over observed labels.
/// The intercept is not penalized.
pub fn fit_linear_gamma(
    train_embeddings: &[Vec<f64>],
    train_labels: &LabelMatrix,
    llm_ids: &[String],
    ridge: f64,
) -> Result<LinearGamma> {
    if !(ridge >= 0.0) {
        return Err(Error::Argument(format!("ridge {ridge} must be non-negative")));
    }
    if train_embeddings.len() != train_labels.n_prompts() || llm_ids.len() != train_labels.n_llms() {
        return Err(Error::Argument(format!(
            "{} embeddings and {} LLM ids for a {}x{} label matrix",
            train_embeddings.len(),
            llm_ids.len(),
            train_labels.n_prompts(),
            train_labels.n_llms()
        )));
    }
    let dim = train_embeddings.first().map_or(0, Vec::len);
    let p = dim + 1;
    let mut weights = Vec::with_capacity(llm_ids.len());
    let mut intercepts = Vec::with_capacity(llm_ids.len());
    for (m, id) in llm_ids.iter().enumerate() {
        let mut gram = vec![vec![0.0; p]; p];
        let mut rhs = vec![0.0; p];
        for (r, x) in train_embeddings.iter().enumerate() {
            let Some(y) = train_labels.get(r, m) else { continue };
            let row: Vec<f64> = x.iter().copied().chain(std::iter::once(1.0)).collect();
            for i in 0..p {
                rhs[i] += row[i] * y;
                for j in 0..=i {
                    gram[i][j] += row[i] * row[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                gram[j][i] = gram[i][j];
            }
        }
        for (i, row) in gram.iter_mut().enumerate().take(dim) {
            row[i] += ridge;
        }
        let l = cholesky(gram).ok_or_else(|| {
            Error::Numerical(format!(
                "normal equations for LLM {id:?} are singular; use a positive ridge"
            ))
        })?;
        let mut sol = cholesky_solve(&l, &rhs);
        intercepts.push(sol.pop().expect("intercept"));
        weights.push(sol);
    }
    Ok(LinearGamma {
        llm_ids: llm_ids.to_vec(),
        weights,
        intercepts,
        ridge,
    })
}
