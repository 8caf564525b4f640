use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A candidate on the lower convex hull of (cost, validation loss).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullPoint {
    pub llm_index: usize,
    pub cost: f64,
    pub loss: f64,
}

/// The prompt-oblivious ZeroRouter: for a budget, randomize between the two
/// hull models whose costs bracket it.
///
/// Hull costs are strictly increasing and hull losses strictly decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexHullPolicy {
    pub hull: Vec<HullPoint>,
}

/// A two-point randomization: pick `first` with probability `p_first`,
/// otherwise `second`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mixing {
    pub first: HullPoint,
    pub second: HullPoint,
    pub p_first: f64,
}

impl Mixing {
    pub fn expected_cost(&self) -> f64 {
        self.p_first * self.first.cost + (1.0 - self.p_first) * self.second.cost
    }
}

/// Cross product of (b - a) and (c - a) in the (cost, loss) plane.
fn cross(a: &HullPoint, b: &HullPoint, c: &HullPoint) -> f64 {
    (b.cost - a.cost) * (c.loss - a.loss) - (b.loss - a.loss) * (c.cost - a.cost)
}

/// Builds the hull from `(llm_index, cost, mean_val_loss)` triples.
///
/// Dominated candidates go first (another candidate is no more expensive and
/// no worse, and strictly better in one of the two; of exact duplicates the
/// first listed survives). The rest are pruned to the lower convex hull,
/// dropping collinear middle points.
pub fn build_zero_router(pool: &[(usize, f64, f64)]) -> Result<ConvexHullPolicy> {
    if pool.is_empty() {
        return Err(Error::Argument("ZeroRouter needs at least one LLM".into()));
    }
    if let Some(&(i, c, l)) = pool.iter().find(|&&(_, c, l)| !(c >= 0.0) || !l.is_finite()) {
        return Err(Error::Argument(format!("LLM {i} has invalid cost {c} or loss {l}")));
    }
    let mut pts: Vec<(usize, HullPoint)> = pool
        .iter()
        .enumerate()
        .map(|(order, &(llm_index, cost, loss))| (order, HullPoint { llm_index, cost, loss }))
        .collect();
    pts.sort_by(|a, b| {
        a.1.cost
            .total_cmp(&b.1.cost)
            .then(a.1.loss.total_cmp(&b.1.loss))
            .then(a.0.cmp(&b.0))
    });

    // Sweep by increasing cost keeping only strict loss improvements.
    let mut frontier: Vec<HullPoint> = Vec::new();
    for (_, p) in pts {
        if frontier.last().is_none_or(|last| p.loss < last.loss) {
            if frontier.last().is_some_and(|last| last.cost == p.cost) {
                // Same cost, strictly lower loss: cannot happen after the sort.
                unreachable!("sorted by loss within equal cost");
            }
            frontier.push(p);
        }
    }

    let mut hull: Vec<HullPoint> = Vec::with_capacity(frontier.len());
    for p in frontier {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], &p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    Ok(ConvexHullPolicy { hull })
}

impl ConvexHullPolicy {
    pub fn contains(&self, llm_index: usize) -> bool {
        self.hull.iter().any(|h| h.llm_index == llm_index)
    }

    /// The randomization meeting `budget`. Budgets outside the hull's cost
    /// range clamp to the cheapest or the most accurate model.
    pub fn mixing(&self, budget: f64) -> Mixing {
        let first = self.hull[0];
        let last = *self.hull.last().expect("non-empty hull");
        if budget <= first.cost {
            return Mixing {
                first,
                second: first,
                p_first: 1.0,
            };
        }
        if budget >= last.cost {
            return Mixing {
                first: last,
                second: last,
                p_first: 1.0,
            };
        }
        // First hull point strictly more expensive than the budget.
        let hi = self.hull.partition_point(|h| h.cost <= budget);
        let (lo, hi) = (self.hull[hi - 1], self.hull[hi]);
        Mixing {
            first: lo,
            second: hi,
            p_first: (hi.cost - budget) / (hi.cost - lo.cost),
        }
    }
}

/// Draws a model for `budget` using the caller's uniform draw `u` in `[0, 1)`.
pub fn zero_route(policy: &ConvexHullPolicy, budget: f64, u: f64) -> usize {
    let mix = policy.mixing(budget);
    if u < mix.p_first {
        mix.first.llm_index
    } else {
        mix.second.llm_index
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, unit_f64};

    fn indices(p: &ConvexHullPolicy) -> Vec<usize> {
        p.hull.iter().map(|h| h.llm_index).collect()
    }

    #[test]
    fn dominated_point_is_dropped() {
        let p = build_zero_router(&[(0, 1.0, 0.5), (1, 5.0, 0.6), (2, 10.0, 0.1)]).unwrap();
        assert_eq!(indices(&p), vec![0, 2]);
    }

    #[test]
    fn single_model_hull() {
        let p = build_zero_router(&[(3, 2.0, 0.4)]).unwrap();
        assert_eq!(indices(&p), vec![3]);
        assert_eq!(zero_route(&p, 0.0, 0.9), 3);
        assert_eq!(zero_route(&p, 99.0, 0.1), 3);
    }

    #[test]
    fn concave_point_and_duplicates() {
        // (5, 0.45) sits above the chord from (1, 0.5) to (10, 0.1).
        let p = build_zero_router(&[(0, 1.0, 0.5), (1, 5.0, 0.45), (2, 10.0, 0.1), (3, 1.0, 0.5)]).unwrap();
        assert_eq!(indices(&p), vec![0, 2]);
    }

    #[test]
    fn mixing_weights() {
        let p = build_zero_router(&[(0, 1.0, 0.5), (1, 10.0, 0.1)]).unwrap();
        let m = p.mixing(5.5);
        assert!((m.p_first - 0.5).abs() < 1e-15);
        assert_eq!(m.expected_cost(), 5.5);
        assert_eq!(zero_route(&p, 0.0, 0.999), 0);
        assert_eq!(zero_route(&p, 20.0, 0.0), 1);
        assert_eq!(zero_route(&p, 5.5, 0.49), 0);
        assert_eq!(zero_route(&p, 5.5, 0.51), 1);
        // Exactly at an interior hull cost the mixture is degenerate.
        let p3 = build_zero_router(&[(0, 1.0, 0.5), (1, 4.0, 0.2), (2, 10.0, 0.1)]).unwrap();
        let m = p3.mixing(4.0);
        assert_eq!((m.first.llm_index, m.p_first), (1, 1.0));
    }

    #[test]
    fn monte_carlo_cost_matches_budget() {
        let p = build_zero_router(&[(0, 1.0, 0.5), (1, 10.0, 0.1)]).unwrap();
        let mut r = rng::seeded(51, 0);
        let costs = [1.0, 10.0];
        let n = 100_000;
        let total: f64 = (0..n).map(|_| costs[zero_route(&p, 5.5, unit_f64(&mut r))]).sum();
        assert!((total / n as f64 - 5.5).abs() < 0.1);
    }

    /// A point survives iff no convex combination of one or two other points
    /// is at least as cheap and at least as accurate.
    fn brute_force_hull(pts: &[(usize, f64, f64)]) -> Vec<usize> {
        let mut keep = Vec::new();
        'outer: for (i, &(_, c, l)) in pts.iter().enumerate() {
            for (j, &(_, cj, lj)) in pts.iter().enumerate() {
                if j == i {
                    continue;
                }
                for (k, &(_, ck, lk)) in pts.iter().enumerate() {
                    if k == i {
                        continue;
                    }
                    for step in 0..=1000 {
                        let t = step as f64 / 1000.0;
                        let mc = t * cj + (1.0 - t) * ck;
                        let ml = t * lj + (1.0 - t) * lk;
                        if mc <= c && ml <= l {
                            continue 'outer;
                        }
                    }
                    // Exact check along the segment: the chord at cost `c`.
                    if (cj - ck).abs() > 0.0 {
                        let t = (c - ck) / (cj - ck);
                        if (0.0..=1.0).contains(&t) && t * lj + (1.0 - t) * lk <= l {
                            continue 'outer;
                        }
                    }
                }
            }
            keep.push(i);
        }
        keep
    }

    #[test]
    fn hull_matches_brute_force() {
        let mut r = rng::seeded(52, 0);
        for _ in 0..300 {
            let pts: Vec<(usize, f64, f64)> = (0..6).map(|i| (i, unit_f64(&mut r) * 10.0, unit_f64(&mut r))).collect();
            let mut expected = brute_force_hull(&pts);
            expected.sort_unstable();
            let mut got = indices(&build_zero_router(&pts).unwrap());
            got.sort_unstable();
            assert_eq!(got, expected, "{pts:?}");
            let p = build_zero_router(&pts).unwrap();
            assert!(p
                .hull
                .windows(2)
                .all(|w| w[0].cost < w[1].cost && w[0].loss > w[1].loss));
        }
    }
}
