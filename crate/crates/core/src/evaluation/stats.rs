use super::{DeferralCurve, SweepParam};
use crate::error::{Error, Result};
use crate::fmt::num;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatePoint {
    pub param: f64,
    pub mean_cost: f64,
    pub norm_cost: f64,
    pub mean_quality: f64,
    /// Two standard errors of the mean quality.
    pub quality_ci_halfwidth: f64,
}

/// Pointwise mean of several trials' curves with two-standard-error bands.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCurve {
    pub param: SweepParam,
    pub n_trials: usize,
    pub points: Vec<AggregatePoint>,
}

impl AggregateCurve {
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "{},mean_cost,norm_cost,mean_quality,quality_ci_halfwidth\n",
            self.param.as_str()
        );
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                num(p.param),
                num(p.mean_cost),
                num(p.norm_cost),
                num(p.mean_quality),
                num(p.quality_ci_halfwidth)
            ));
        }
        out
    }
}

/// Mean and `2 * sample_std / sqrt(n)`; a single value has zero width.
pub(crate) fn mean_and_halfwidth(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, 2.0 * (var / n).sqrt())
}

/// Averages curves that share a parameter grid.
pub fn aggregate_trials(curves: &[DeferralCurve]) -> Result<AggregateCurve> {
    let first = curves
        .first()
        .ok_or_else(|| Error::Argument("no curves to aggregate".into()))?;
    for (t, c) in curves.iter().enumerate() {
        let same = c.param == first.param
            && c.points.len() == first.points.len()
            && c.points.iter().zip(&first.points).all(|(a, b)| a.param == b.param);
        if !same {
            return Err(Error::Argument(format!("curve {t} uses a different grid than curve 0")));
        }
    }
    let points = (0..first.points.len())
        .map(|i| {
            let col =
                |f: fn(&super::CurvePoint) -> f64| -> Vec<f64> { curves.iter().map(|c| f(&c.points[i])).collect() };
            let (mean_quality, quality_ci_halfwidth) = mean_and_halfwidth(&col(|p| p.mean_quality));
            AggregatePoint {
                param: first.points[i].param,
                mean_cost: mean_and_halfwidth(&col(|p| p.mean_cost)).0,
                norm_cost: mean_and_halfwidth(&col(|p| p.norm_cost)).0,
                mean_quality,
                quality_ci_halfwidth,
            }
        })
        .collect();
    Ok(AggregateCurve {
        param: first.param,
        n_trials: curves.len(),
        points,
    })
}

/// Two-sided exact sign test on `sign(a - b)`, ties dropped.
pub fn sign_test(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Argument("sign test needs at least one pair".into()));
    }
    if let Some(p) = pairs.iter().find(|(a, b)| a.is_nan() || b.is_nan()) {
        return Err(Error::Argument(format!("NaN in pair {p:?}")));
    }
    let wins = pairs.iter().filter(|(a, b)| a > b).count();
    let losses = pairs.iter().filter(|(a, b)| a < b).count();
    let n = wins + losses;
    if n == 0 {
        return Err(Error::Undefined("every pair is tied".into()));
    }
    let k = wins.min(losses);
    // Tail sum of Binomial(n, 1/2) pmf up to k, accumulated in log space.
    let mut log_pmf = -(n as f64) * std::f64::consts::LN_2;
    let mut terms = Vec::with_capacity(k + 1);
    for i in 0..=k {
        terms.push(log_pmf);
        log_pmf += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tail = top.exp() * terms.iter().map(|t| (t - top).exp()).sum::<f64>();
    Ok((2.0 * tail).min(1.0))
}
