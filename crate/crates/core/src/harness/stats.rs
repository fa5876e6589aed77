//! Interval estimates and curve comparisons.

use super::SweepRow;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `n` at 95% confidence.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Mean and 95% half-width of the mean.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, Z95 * (var / n as f64).sqrt())
}

/// One point of an error-probability curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    /// Mean evaluations per object.
    pub x: f64,
    pub p: f64,
    pub lower: f64,
    pub upper: f64,
}

/// `p_e` against `M̄/N`, sorted by `M̄/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
}

impl Curve {
    /// Skips rows that failed.
    pub fn from_rows(rows: &[SweepRow]) -> Self {
        let mut points: Vec<CurvePoint> = rows
            .iter()
            .filter(|r| r.error.is_none())
            .map(|r| CurvePoint { x: r.m_bar_per_n, p: r.p_e, lower: r.p_e_lower, upper: r.p_e_upper })
            .collect();
        points.sort_by(|a, b| a.x.total_cmp(&b.x));
        Curve { points }
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        Some((self.points.first()?.x, self.points.last()?.x))
    }

    /// Linear interpolation of the estimate and its interval bounds.
    /// `None` outside the sampled range.
    pub fn at(&self, x: f64) -> Option<CurvePoint> {
        let (lo, hi) = self.range()?;
        if x < lo || x > hi {
            return None;
        }
        let k = self.points.partition_point(|p| p.x < x);
        if k < self.points.len() && self.points[k].x == x {
            return Some(self.points[k]);
        }
        let (a, b) = (self.points[k - 1], self.points[k]);
        let t = (x - a.x) / (b.x - a.x);
        let mix = |u: f64, v: f64| u + t * (v - u);
        Some(CurvePoint { x, p: mix(a.p, b.p), lower: mix(a.lower, b.lower), upper: mix(a.upper, b.upper) })
    }
}

/// Common `M̄/N` range of two curves.
pub fn overlap(a: &Curve, b: &Curve) -> Option<(f64, f64)> {
    let (a0, a1) = a.range()?;
    let (b0, b1) = b.range()?;
    let lo = a0.max(b0);
    let hi = a1.min(b1);
    (lo <= hi).then_some((lo, hi))
}

/// `a` is not significantly worse than `b`: its interval reaches down to
/// `b`'s.
pub fn not_worse(a: &CurvePoint, b: &CurvePoint) -> bool {
    a.lower <= b.upper
}

/// `a` is significantly better than `b`: the intervals are disjoint with
/// `a` below.
pub fn strictly_better(a: &CurvePoint, b: &CurvePoint) -> bool {
    a.upper < b.lower
}

/// `count` evenly spaced abscissae across `[lo, hi]`.
pub fn grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect(),
    }
}
