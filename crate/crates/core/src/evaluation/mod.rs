//! Deferral curves, summary metrics, trial statistics, and K selection.

mod metrics;
mod stats;
mod tune;

use serde::{Deserialize, Serialize};

use crate::datamodel::LabelMatrix;
use crate::error::{Error, Result};
use crate::fmt::num;
use crate::routing::{route_with_gammas, ConvexHullPolicy, GammaEstimator, PoolEntry};

pub use metrics::{metrics, metrics_from_points, CurveMetrics};
pub use stats::{aggregate_trials, sign_test, AggregateCurve, AggregatePoint};
pub use tune::{default_candidates, fallback_k, select_k, RouterKind, Selection, SelectionConfig, TuneData};

/// What a curve is swept over: the cost multiplier of the plug-in rule, or
/// the per-prompt budget of the ZeroRouter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Lambda,
    Budget,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::Budget => "budget",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// The lambda or budget that produced this point.
    pub param: f64,
    pub mean_cost: f64,
    /// `mean_cost / max_cost`.
    pub norm_cost: f64,
    pub mean_quality: f64,
}

/// Mean quality against mean cost along a parameter grid.
///
/// Lambda curves have non-increasing cost; budget curves non-decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeferralCurve {
    pub param: SweepParam,
    pub max_cost: f64,
    pub points: Vec<CurvePoint>,
    /// Prompts without any observed label, left out of every point.
    pub skipped: usize,
}

impl DeferralCurve {
    /// `(norm_cost, mean_quality)` pairs in grid order.
    pub fn normalized(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.norm_cost, p.mean_quality)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},mean_cost,norm_cost,mean_quality\n", self.param.as_str());
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                num(p.param),
                num(p.mean_cost),
                num(p.norm_cost),
                num(p.mean_quality)
            ));
        }
        out
    }

    /// Parses the CSV written by [`DeferralCurve::to_csv`]. The maximum cost
    /// is recovered from the most expensive row.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = rdr
            .headers()
            .map_err(|e| Error::parse("<curve>", 1, "header", e.to_string()))?
            .clone();
        let cols: Vec<&str> = header.iter().collect();
        let param = match cols.as_slice() {
            ["lambda", "mean_cost", "norm_cost", "mean_quality", ..] => SweepParam::Lambda,
            ["budget", "mean_cost", "norm_cost", "mean_quality", ..] => SweepParam::Budget,
            _ => {
                return Err(Error::parse(
                    "<curve>",
                    1,
                    "header",
                    "expected lambda|budget,mean_cost,norm_cost,mean_quality",
                ))
            }
        };
        let mut points = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i as u64 + 2;
            let rec = rec.map_err(|e| Error::parse("<curve>", line, "row", e.to_string()))?;
            let mut vals = [0.0; 4];
            for (j, v) in vals.iter_mut().enumerate() {
                let cell = rec.get(j).unwrap_or("");
                *v = cell
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse("<curve>", line, cols[j], format!("not a number: {cell:?}")))?;
            }
            points.push(CurvePoint {
                param: vals[0],
                mean_cost: vals[1],
                norm_cost: vals[2],
                mean_quality: vals[3],
            });
        }
        let max_cost = points
            .iter()
            .filter(|p| p.norm_cost > 0.0)
            .max_by(|a, b| a.mean_cost.total_cmp(&b.mean_cost))
            .map_or(1.0, |p| p.mean_cost / p.norm_cost);
        let curve = Self {
            param,
            max_cost,
            points,
            skipped: 0,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Validation("deferral curve has no points".into()));
        }
        for w in self.points.windows(2) {
            if !(w[1].param > w[0].param) {
                return Err(Error::Validation(format!(
                    "{} values must be strictly increasing ({} then {})",
                    self.param.as_str(),
                    w[0].param,
                    w[1].param
                )));
            }
        }
        for p in &self.points {
            if !(0.0..=1.0).contains(&p.mean_quality) {
                return Err(Error::Validation(format!(
                    "mean quality {} outside [0, 1]",
                    p.mean_quality
                )));
            }
        }
        Ok(())
    }
}

fn check_grid(grid: &[f64], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Argument(format!("{what} grid is empty")));
    }
    if let Some(v) = grid.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Argument(format!("{what} {v} must be finite and non-negative")));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Argument(format!("{what} grid must be strictly increasing")));
    }
    Ok(())
}

fn max_cost(costs: &[f64]) -> f64 {
    let m = costs.iter().cloned().fold(0.0, f64::max);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Default lambda grid for a pool with the given costs: 0, fifty
/// geometrically spaced values from 1e-4 to 1e2 divided by the largest cost,
/// and a final value large enough that every prompt goes to the cheapest
/// model.
pub fn default_lambda_grid(costs: &[f64]) -> Vec<f64> {
    let scale = max_cost(costs);
    let mut grid = vec![0.0];
    let (lo, hi) = (1e-4f64.ln(), 1e2f64.ln());
    for i in 0..50 {
        grid.push((lo + (hi - lo) * i as f64 / 49.0).exp() / scale);
    }
    let mut sorted: Vec<f64> = costs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min_gap = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&g| g > 0.0)
        .fold(f64::INFINITY, f64::min);
    let last = *grid.last().expect("non-empty");
    // Gammas lie in [0, 1], so lambda * gap > 1 forces the cheapest choice.
    let sentinel = if min_gap.is_finite() {
        (2.0 / min_gap).max(10.0 * last)
    } else {
        10.0 * last
    };
    grid.push(sentinel);
    grid
}

/// Mean observed quality (`1 - loss`) of every column; `None` for a column
/// without observed labels.
pub fn column_qualities(labels: &LabelMatrix) -> Vec<Option<f64>> {
    (0..labels.n_llms())
        .map(|j| {
            let (mut sum, mut n) = (0.0, 0usize);
            for v in labels.column(j).into_iter().flatten() {
                sum += 1.0 - v;
                n += 1;
            }
            (n > 0).then(|| sum / n as f64)
        })
        .collect()
}

/// Best single-LLM mean quality on `labels`.
pub fn peak_quality(labels: &LabelMatrix) -> Result<f64> {
    column_qualities(labels)
        .into_iter()
        .flatten()
        .fold(None, |best: Option<f64>, q| Some(best.map_or(q, |b| b.max(q))))
        .ok_or_else(|| Error::InsufficientData("no observed test labels".into()))
}

/// Sweeps lambda over precomputed per-prompt gammas (`gammas[prompt][llm]`).
///
/// For each lambda every prompt is routed; quality is averaged over prompts
/// whose chosen LLM has an observed label, cost over all prompts with any
/// observed label. Prompts without observed labels are skipped entirely.
pub fn sweep_gammas(
    gammas: &[Vec<f64>],
    labels: &LabelMatrix,
    costs: &[f64],
    lambdas: &[f64],
) -> Result<DeferralCurve> {
    check_grid(lambdas, "lambda")?;
    if costs.is_empty() {
        return Err(Error::Argument("cannot sweep an empty pool".into()));
    }
    if gammas.len() != labels.n_prompts() || labels.n_llms() != costs.len() {
        return Err(Error::Argument(format!(
            "{} gamma rows and {} costs for a {}x{} label matrix",
            gammas.len(),
            costs.len(),
            labels.n_prompts(),
            labels.n_llms()
        )));
    }
    let active: Vec<usize> = (0..labels.n_prompts())
        .filter(|&r| (0..labels.n_llms()).any(|j| labels.is_observed(r, j)))
        .collect();
    if active.is_empty() {
        return Err(Error::InsufficientData("no test prompt has an observed label".into()));
    }
    let skipped = labels.n_prompts() - active.len();
    let scale = max_cost(costs);

    let mut points = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let (mut cost, mut quality, mut n_quality) = (0.0, 0.0, 0usize);
        for &r in &active {
            let h = route_with_gammas(&gammas[r], costs, lambda)?.llm_index;
            cost += costs[h];
            if let Some(loss) = labels.get(r, h) {
                quality += 1.0 - loss;
                n_quality += 1;
            }
        }
        let mean_cost = cost / active.len() as f64;
        points.push(CurvePoint {
            param: lambda,
            mean_cost,
            norm_cost: mean_cost / scale,
            mean_quality: if n_quality > 0 { quality / n_quality as f64 } else { 0.0 },
        });
    }
    if let Some(w) = points.windows(2).find(|w| w[1].mean_cost > w[0].mean_cost) {
        return Err(Error::Numerical(format!(
            "mean cost rose from {} to {} between lambda {} and {}",
            w[0].mean_cost, w[1].mean_cost, w[0].param, w[1].param
        )));
    }
    Ok(DeferralCurve {
        param: SweepParam::Lambda,
        max_cost: scale,
        points,
        skipped,
    })
}

/// Routes every test prompt at every lambda and records mean cost and
/// realized quality. Pool entries correspond to the columns of `labels`.
pub fn sweep(
    gamma: &dyn GammaEstimator,
    test_embeddings: &[Vec<f64>],
    labels: &LabelMatrix,
    pool: &[PoolEntry],
    lambdas: &[f64],
) -> Result<DeferralCurve> {
    if pool.is_empty() {
        return Err(Error::Argument("cannot sweep an empty pool".into()));
    }
    if test_embeddings.len() != labels.n_prompts() {
        return Err(Error::Argument(format!(
            "{} embeddings for {} labelled prompts",
            test_embeddings.len(),
            labels.n_prompts()
        )));
    }
    let gammas = test_embeddings
        .iter()
        .map(|x| gamma.gamma_pool(x, pool))
        .collect::<Result<Vec<_>>>()?;
    let costs: Vec<f64> = pool.iter().map(|e| e.cost).collect();
    sweep_gammas(&gammas, labels, &costs, lambdas)
}

/// Analytic ZeroRouter curve: at each budget, the mixing weights' expected
/// cost and expected test quality. Hull indices refer to `labels` columns;
/// `max_cost` normalizes cost and should be the pool's largest cost.
pub fn zero_router_curve(
    policy: &ConvexHullPolicy,
    labels: &LabelMatrix,
    budgets: &[f64],
    max_cost: f64,
) -> Result<DeferralCurve> {
    check_grid(budgets, "budget")?;
    if !(max_cost > 0.0) {
        return Err(Error::Argument(format!("max cost {max_cost} must be positive")));
    }
    let qualities = column_qualities(labels);
    let quality = |j: usize| -> Result<f64> {
        qualities
            .get(j)
            .copied()
            .flatten()
            .ok_or_else(|| Error::InsufficientData(format!("hull LLM {j} has no observed test labels")))
    };
    let mut points = Vec::with_capacity(budgets.len());
    for &b in budgets {
        let mix = policy.mixing(b);
        let q = mix.p_first * quality(mix.first.llm_index)? + (1.0 - mix.p_first) * quality(mix.second.llm_index)?;
        let mean_cost = mix.expected_cost();
        points.push(CurvePoint {
            param: b,
            mean_cost,
            norm_cost: mean_cost / max_cost,
            mean_quality: q,
        });
    }
    Ok(DeferralCurve {
        param: SweepParam::Budget,
        max_cost,
        points,
        skipped: 0,
    })
}

/// The ZeroRouter curve evaluated at its hull costs, which is exact for the
/// piecewise-linear analytic curve.
pub fn zero_router_hull_curve(policy: &ConvexHullPolicy, labels: &LabelMatrix, max_cost: f64) -> Result<DeferralCurve> {
    let budgets: Vec<f64> = policy.hull.iter().map(|h| h.cost).collect();
    zero_router_curve(policy, labels, &budgets, max_cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::build_zero_router;

    fn labels(rows: &[&[f64]]) -> LabelMatrix {
        let n = rows[0].len();
        let rows: Vec<Vec<Option<f64>>> = rows.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect();
        LabelMatrix::from_rows(&rows, n).unwrap()
    }

    #[test]
    fn hand_enumerated_two_llm_instance() {
        // Columns: cheap (cost 1), expensive (cost 4).
        let l = labels(&[&[1.0, 0.0], &[0.0, 0.0], &[1.0, 1.0], &[1.0, 0.0]]);
        let gammas = vec![vec![0.9, 0.1], vec![0.2, 0.1], vec![0.6, 0.5], vec![0.7, 0.2]];
        let costs = [1.0, 4.0];
        // Switch points: gap / 3 = 0.2667, 0.0333, 0.0333, 0.1667.
        let curve = sweep_gammas(&gammas, &l, &costs, &[0.0, 0.05, 0.2, 1.0]).unwrap();
        let expect = [(4.0, 0.75), (2.5, 0.75), (1.75, 0.5), (1.0, 0.25)];
        for (p, (c, q)) in curve.points.iter().zip(expect) {
            assert!((p.mean_cost - c).abs() < 1e-12, "{p:?}");
            assert!((p.mean_quality - q).abs() < 1e-12, "{p:?}");
            assert!((p.norm_cost - c / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn endpoints() {
        let l = labels(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0]]);
        let gammas = vec![vec![0.1, 0.6, 0.3], vec![0.8, 0.2, 0.5]];
        let costs = [5.0, 1.0, 3.0];
        let c = sweep_gammas(&gammas, &l, &costs, &[0.0, 1e9]).unwrap();
        assert_eq!(c.points[0].mean_cost, 3.0);
        assert_eq!(c.points[0].mean_quality, 1.0);
        assert_eq!(c.points[1].mean_cost, 1.0);
        assert_eq!(c.points[1].mean_quality, 0.5);
    }

    #[test]
    fn masked_labels_use_available_cases() {
        let rows = vec![vec![Some(0.0), None], vec![None, None], vec![None, Some(1.0)]];
        let l = LabelMatrix::from_rows(&rows, 2).unwrap();
        let gammas = vec![vec![0.5, 0.1]; 3];
        let c = sweep_gammas(&gammas, &l, &[1.0, 2.0], &[0.0]).unwrap();
        assert_eq!(c.skipped, 1);
        assert_eq!(c.points[0].mean_cost, 2.0);
        assert_eq!(c.points[0].mean_quality, 0.0);
    }

    #[test]
    fn grid_errors() {
        let l = labels(&[&[0.0]]);
        let g = vec![vec![0.0]];
        for bad in [vec![], vec![0.1, 0.1], vec![-1.0], vec![0.2, 0.1]] {
            assert!(matches!(sweep_gammas(&g, &l, &[1.0], &bad), Err(Error::Argument(_))));
        }
    }

    #[test]
    fn default_grid_shape() {
        let g = default_lambda_grid(&[1.0, 2.0, 10.0]);
        assert_eq!(g.len(), 52);
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 1e-5).abs() < 1e-18);
        assert!((g[50] - 10.0).abs() < 1e-9);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(g[51] >= 2.0);
    }

    #[test]
    fn sentinel_forces_cheapest() {
        let costs = [1.0, 1.001, 3.0];
        let l = labels(&[&[1.0, 0.0, 0.0]]);
        let g = default_lambda_grid(&costs);
        let c = sweep_gammas(&[vec![1.0, 0.0, 0.0]], &l, &costs, &g).unwrap();
        assert_eq!(c.points.last().unwrap().mean_cost, 1.0);
    }

    #[test]
    fn zero_curve_hits_hull_points_and_midpoints() {
        let policy = build_zero_router(&[(0, 1.0, 0.4), (1, 10.0, 0.1)]).unwrap();
        let l = labels(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let c = zero_router_curve(&policy, &l, &[1.0, 5.5, 10.0], 10.0).unwrap();
        assert_eq!(c.points[0].mean_quality, 0.5);
        assert_eq!(c.points[2].mean_quality, 1.0);
        assert_eq!(c.points[1].mean_cost, 5.5);
        assert!((c.points[1].mean_quality - 0.75).abs() < 1e-15);
        assert_eq!(c.param, SweepParam::Budget);
    }

    #[test]
    fn csv_round_trip() {
        let curve = DeferralCurve {
            param: SweepParam::Lambda,
            max_cost: 8.0,
            points: vec![
                CurvePoint {
                    param: 0.0,
                    mean_cost: 8.0,
                    norm_cost: 1.0,
                    mean_quality: 0.75,
                },
                CurvePoint {
                    param: 0.5,
                    mean_cost: 2.0,
                    norm_cost: 0.25,
                    mean_quality: 1.0 / 3.0,
                },
            ],
            skipped: 0,
        };
        let text = curve.to_csv();
        assert!(text.starts_with("lambda,mean_cost,norm_cost,mean_quality\n0,8,1,0.75\n"));
        let back = DeferralCurve::from_csv(&text).unwrap();
        assert_eq!(back.max_cost, 8.0);
        assert_eq!(back.points[1].mean_quality, 0.333333333);
        assert!(matches!(
            DeferralCurve::from_csv("x,y\n1,2\n"),
            Err(Error::Parse { .. })
        ));
    }
}
