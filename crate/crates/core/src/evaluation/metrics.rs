use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::DeferralCurve;
use crate::error::{Error, Result};
use crate::fmt::num;

/// Summary of a deferral curve over normalized cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveMetrics {
    /// Area under quality over normalized cost in `[0, 1]`.
    pub area: f64,
    /// Area over `[0, 0.5]`, divided by 0.5.
    pub area_50: f64,
    /// Smallest normalized cost reaching the peak single-LLM quality;
    /// infinite when the curve never gets there.
    #[serde(serialize_with = "ser_qnc", deserialize_with = "de_qnc")]
    pub qnc: f64,
}

fn ser_qnc<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_qnc<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Qnc {
        Num(f64),
        Str(String),
    }
    match Qnc::deserialize(d)? {
        Qnc::Num(v) => Ok(v),
        Qnc::Str(s) if s == "inf" => Ok(f64::INFINITY),
        Qnc::Str(s) => Err(serde::de::Error::custom(format!("unexpected qnc value {s:?}"))),
    }
}

impl CurveMetrics {
    /// JSON with every number at the standard output precision.
    pub fn to_json(&self) -> String {
        let qnc = if self.qnc.is_infinite() {
            "\"inf\"".to_string()
        } else {
            num(self.qnc)
        };
        format!(
            "{{\"area\":{},\"area_50\":{},\"qnc\":{}}}",
            num(self.area),
            num(self.area_50),
            qnc
        )
    }
}

/// Tolerance for deciding that a curve reached the peak quality.
const QNC_TOL: f64 = 1e-12;

fn sorted(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts
}

/// Integral over `[a, b]` of the piecewise-linear interpolant through
/// `pts` (sorted by cost), extended flat to costs 0 and 1.
fn integrate(pts: &[(f64, f64)], a: f64, b: f64) -> f64 {
    let mut line = Vec::with_capacity(pts.len() + 2);
    let (first, last) = (pts[0], pts[pts.len() - 1]);
    if first.0 > 0.0 {
        line.push((0.0, first.1));
    }
    line.extend_from_slice(pts);
    if last.0 < 1.0 {
        line.push((1.0, last.1));
    }
    let mut total = 0.0;
    for w in line.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x1 <= x0 {
            continue;
        }
        let (lo, hi) = (x0.max(a), x1.min(b));
        if lo >= hi {
            continue;
        }
        let at = |x: f64| y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        total += (hi - lo) * (at(lo) + at(hi)) / 2.0;
    }
    total
}

fn quality_neutral_cost(pts: &[(f64, f64)], peak: f64) -> f64 {
    let target = peak - QNC_TOL;
    for (i, &(x, y)) in pts.iter().enumerate() {
        if y >= target {
            return x;
        }
        if let Some(&(x1, y1)) = pts.get(i + 1) {
            if y1 >= target && x1 > x {
                return x + (x1 - x) * (peak - y) / (y1 - y);
            }
        }
    }
    f64::INFINITY
}

/// Metrics from `(normalized cost, quality)` pairs in any order.
pub fn metrics_from_points(points: &[(f64, f64)], peak_quality: f64) -> Result<CurveMetrics> {
    if !(0.0..=1.0).contains(&peak_quality) {
        return Err(Error::Argument(format!("peak quality {peak_quality} outside [0, 1]")));
    }
    if points.is_empty() {
        return Err(Error::Argument("curve has no points".into()));
    }
    if let Some(p) = points.iter().find(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::Argument(format!("non-finite curve point {p:?}")));
    }
    let pts = sorted(points);
    Ok(CurveMetrics {
        area: integrate(&pts, 0.0, 1.0),
        area_50: integrate(&pts, 0.0, 0.5) / 0.5,
        qnc: quality_neutral_cost(&pts, peak_quality),
    })
}

/// Area, half-range area, and quality-neutral cost of a curve.
///
/// `peak_quality` is the best single test LLM's mean quality on the same
/// prompts.
pub fn metrics(curve: &DeferralCurve, peak_quality: f64) -> Result<CurveMetrics> {
    metrics_from_points(&curve.normalized(), peak_quality)
}
