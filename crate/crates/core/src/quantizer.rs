//! Scalar answer quantizers: a uniform baseline and Lloyd designs matched
//! to the distribution of answers near the top of the ranking.
//!
//! Densities are held as piecewise-constant bins. Cell masses and moments
//! are integrated exactly on that representation, so the Lloyd iteration
//! is a descent method on it rather than only approximately one.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{PriorKind, QualityPrior};
use crate::special::{ln_gamma, norm_cdf, norm_pdf, erfc};

/// Cells with less probability than this are treated as empty.
pub const COLLAPSE_MASS: f64 = 1e-12;

const ANSWER_BINS: usize = 8000;
const QUALITY_POINTS_MIN: usize = 2001;
const QUALITY_POINTS_MAX: usize = 20001;
const SPAN: f64 = 8.0;

/// An `L`-level quantizer. Cell `l` is `(z_l, z_{l+1}]` with
/// `z_0 = -inf` and `z_L = +inf`, and maps to `reps[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerSpec {
    thresholds: Vec<f64>,
    reps: Vec<f64>,
}

impl QuantizerSpec {
    /// `thresholds` has `L + 1` entries from `-inf` to `+inf`.
    pub fn new(thresholds: Vec<f64>, reps: Vec<f64>) -> Result<Self> {
        let l = reps.len();
        if l == 0 {
            return Err(Error::InvalidInput("a quantizer needs at least one level".into()));
        }
        if thresholds.len() != l + 1 {
            return Err(Error::InvalidInput(format!("{} levels need {} thresholds, got {}", l, l + 1, thresholds.len())));
        }
        if thresholds[0] != f64::NEG_INFINITY || thresholds[l] != f64::INFINITY {
            return Err(Error::InvalidInput("outer thresholds must be -inf and +inf".into()));
        }
        for k in 1..l {
            if !thresholds[k].is_finite() || thresholds[k] <= thresholds[k - 1] {
                return Err(Error::InvalidInput(format!("threshold {k} is not finite and increasing")));
            }
        }
        for (k, &w) in reps.iter().enumerate() {
            if !w.is_finite() || !(w > thresholds[k] && w <= thresholds[k + 1]) {
                return Err(Error::InvalidInput(format!("representative {k} = {w} lies outside its cell")));
            }
        }
        Ok(QuantizerSpec { thresholds, reps })
    }

    /// Nearest-neighbour quantizer: thresholds halfway between sorted
    /// representatives.
    pub fn from_representatives(reps: Vec<f64>) -> Result<Self> {
        let mut thresholds = Vec::with_capacity(reps.len() + 1);
        thresholds.push(f64::NEG_INFINITY);
        for pair in reps.windows(2) {
            thresholds.push(0.5 * (pair[0] + pair[1]));
        }
        thresholds.push(f64::INFINITY);
        Self::new(thresholds, reps)
    }

    pub fn levels(&self) -> usize {
        self.reps.len()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn representatives(&self) -> &[f64] {
        &self.reps
    }

    /// Index of the cell containing `x`.
    pub fn cell(&self, x: f64) -> usize {
        let interior = &self.thresholds[1..self.reps.len()];
        interior.partition_point(|&z| z < x)
    }

    pub fn quantize(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(Error::InvalidInput("cannot quantize NaN".into()));
        }
        Ok(self.reps[self.cell(x)])
    }

    /// Plain-text table, one `level lower_threshold representative` line
    /// per level.
    pub fn to_table(&self) -> String {
        let mut out = String::from("# level z_lower representative\n");
        for (l, w) in self.reps.iter().enumerate() {
            let _ = writeln!(out, "{} {} {}", l + 1, self.thresholds[l], w);
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let mut thresholds = Vec::new();
        let mut reps = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |what: &str| Error::InvalidInput(format!("line {}: {what}", lineno + 1));
            if fields.len() != 3 {
                return Err(bad("expected `level z_lower representative`"));
            }
            let level: usize = fields[0].parse().map_err(|_| bad("bad level index"))?;
            if level != reps.len() + 1 {
                return Err(bad("levels must be listed in order starting at 1"));
            }
            thresholds.push(fields[1].parse::<f64>().map_err(|_| bad("bad threshold"))?);
            reps.push(fields[2].parse::<f64>().map_err(|_| bad("bad representative"))?);
        }
        thresholds.push(f64::INFINITY);
        Self::new(thresholds, reps)
    }
}

/// `L` equal-width cells over `[lo, hi]`, representatives at the cell
/// midpoints, outermost cells extended to infinity.
pub fn uniform_design(lo: f64, hi: f64, levels: usize) -> Result<QuantizerSpec> {
    if !(lo < hi) || levels == 0 {
        return Err(Error::InvalidInput(format!("uniform quantizer needs lo < hi and L >= 1, got [{lo}, {hi}], L = {levels}")));
    }
    let width = (hi - lo) / levels as f64;
    let reps = (0..levels).map(|l| lo + (l as f64 + 0.5) * width).collect();
    let mut thresholds = vec![f64::NEG_INFINITY];
    thresholds.extend((1..levels).map(|l| lo + l as f64 * width));
    thresholds.push(f64::INFINITY);
    QuantizerSpec::new(thresholds, reps)
}

/// A quality distribution with a density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContinuousPrior {
    Gaussian { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl ContinuousPrior {
    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            ContinuousPrior::Gaussian { mean, std } => norm_pdf((x - mean) / std) / std,
            ContinuousPrior::Uniform { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            ContinuousPrior::Gaussian { mean, std } => norm_cdf((x - mean) / std),
            ContinuousPrior::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
        }
    }

    /// `(ln F(x), ln(1 - F(x)))`, accurate in both tails.
    fn ln_cdf_sf(&self, x: f64) -> (f64, f64) {
        match *self {
            ContinuousPrior::Gaussian { mean, std } => {
                let z = (x - mean) / std;
                let r = std::f64::consts::FRAC_1_SQRT_2;
                ((0.5 * erfc(-z * r)).ln(), (0.5 * erfc(z * r)).ln())
            }
            ContinuousPrior::Uniform { .. } => {
                let f = self.cdf(x);
                (f.ln(), (1.0 - f).ln())
            }
        }
    }

    fn support(&self) -> (f64, f64) {
        match *self {
            ContinuousPrior::Gaussian { mean, std } => (mean - 9.0 * std, mean + 9.0 * std),
            ContinuousPrior::Uniform { lo, hi } => (lo, hi),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ContinuousPrior::Gaussian { mean, std } => mean.is_finite() && std > 0.0 && std.is_finite(),
            ContinuousPrior::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid quality prior {self:?}")))
        }
    }
}

/// Density at `x` of the `i`-th largest (1-based) of `n` i.i.d. draws.
pub fn order_statistic_density(prior: &ContinuousPrior, i: usize, n: usize, x: f64) -> Result<f64> {
    if i == 0 || i > n {
        return Err(Error::InvalidInput(format!("order statistic {i} out of range 1..={n}")));
    }
    prior.validate()?;
    Ok(order_statistic_pdf(prior, ln_order_coefficient(i, n), i, n, x))
}

/// `ln(n! / ((n-i)! (i-1)!))`
fn ln_order_coefficient(i: usize, n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma((n - i) as f64 + 1.0) - ln_gamma(i as f64)
}

fn order_statistic_pdf(prior: &ContinuousPrior, ln_coef: f64, i: usize, n: usize, x: f64) -> f64 {
    let f = prior.pdf(x);
    if f == 0.0 {
        return 0.0;
    }
    let (ln_f_cdf, ln_f_sf) = prior.ln_cdf_sf(x);
    let below = (n - i) as f64;
    let above = (i - 1) as f64;
    let mut ln = ln_coef + f.ln();
    if below > 0.0 {
        ln += below * ln_f_cdf;
    }
    if above > 0.0 {
        ln += above * ln_f_sf;
    }
    ln.exp()
}

/// Which order statistics of the quality prior the answer density mixes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityKind {
    /// The answer to a randomly chosen object.
    Generic,
    /// The answer to the best object.
    TopOnly,
    /// The `i`-th best object weighted by `γ^(i-1)`.
    Weighted(f64),
}

impl DensityKind {
    /// Normalised mixture weights over order statistics `1..=n`.
    pub fn weights(&self, n: usize) -> Result<Vec<f64>> {
        let raw: Vec<f64> = match *self {
            DensityKind::Generic => vec![1.0; n],
            DensityKind::TopOnly => (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect(),
            DensityKind::Weighted(gamma) => {
                if !(gamma > 0.0 && gamma <= 1.0) {
                    return Err(Error::InvalidInput(format!("weight base must lie in (0, 1], got {gamma}")));
                }
                (0..n).map(|i| gamma.powi(i as i32)).collect()
            }
        };
        let total: f64 = raw.iter().sum();
        Ok(raw.into_iter().map(|w| w / total).collect())
    }
}

/// A probability density on a uniform grid of bins, constant within each
/// bin.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerDensity {
    lo: f64,
    width: f64,
    mass: Vec<f64>,
    /// Prefix sums of mass, first and second moments per bin.
    cum: Vec<[f64; 3]>,
}

impl AnswerDensity {
    /// Builds a density from non-negative bin masses over `[lo, hi]`.
    pub fn from_bins(lo: f64, hi: f64, mass: Vec<f64>) -> Result<Self> {
        if !(lo < hi) || mass.is_empty() {
            return Err(Error::InvalidInput("density grid needs lo < hi and at least one bin".into()));
        }
        if mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidInput("bin masses must be finite and non-negative".into()));
        }
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("density has no mass".into()));
        }
        let width = (hi - lo) / mass.len() as f64;
        let mass: Vec<f64> = mass.into_iter().map(|m| m / total).collect();
        let mut cum = Vec::with_capacity(mass.len() + 1);
        let mut acc = [0.0; 3];
        cum.push(acc);
        for (k, &m) in mass.iter().enumerate() {
            let c = lo + (k as f64 + 0.5) * width;
            acc[0] += m;
            acc[1] += m * c;
            acc[2] += m * (c * c + width * width / 12.0);
            cum.push(acc);
        }
        Ok(AnswerDensity { lo, width, mass, cum })
    }

    /// Answer density for a scenario: a mixture of order statistics of the
    /// quality prior, convolved with zero-mean Gaussian noise of standard
    /// deviation `noise_std` (bias and evaluation noise combined).
    pub fn for_scenario(kind: DensityKind, prior: &QualityPrior, noise_std: f64) -> Result<Self> {
        let weights = kind.weights(prior.n)?;
        match (kind, prior.kind) {
            (_, PriorKind::Gaussian { mean, std }) => {
                let q = ContinuousPrior::Gaussian { mean, std };
                match kind {
                    DensityKind::Generic => Self::from_quality_density(&q, |x| q.pdf(x), noise_std),
                    DensityKind::TopOnly => {
                        let n = prior.n;
                        Self::from_quality_density(&q, |x| n as f64 * q.pdf(x) * q.cdf(x).powi(n as i32 - 1), noise_std)
                    }
                    DensityKind::Weighted(_) => Self::order_statistic_mixture(&q, &weights, noise_std),
                }
            }
            (_, PriorKind::EquallySpaced { lo, hi }) => {
                let step = (hi - lo) / (prior.n - 1) as f64;
                let atoms: Vec<f64> = (0..prior.n).map(|i| hi - i as f64 * step).collect();
                Self::gaussian_mixture(&atoms, &weights, noise_std)
            }
            (_, PriorKind::Unknown) => Err(Error::InvalidInput("answer density needs a known quality prior".into())),
        }
    }

    /// `Σ_i weights[i] f_(i+1)` convolved with `N(0, noise_std²)`, where
    /// `f_(i)` is the density of the `i`-th largest of `weights.len()`
    /// draws from `prior`.
    pub fn order_statistic_mixture(prior: &ContinuousPrior, weights: &[f64], noise_std: f64) -> Result<Self> {
        prior.validate()?;
        let n = weights.len();
        if n == 0 || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidInput("mixture weights must be non-negative and non-empty".into()));
        }
        let total: f64 = weights.iter().sum();
        let terms: Vec<(usize, f64, f64)> = weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(k, w)| (k + 1, w / total, ln_order_coefficient(k + 1, n)))
            .collect();
        Self::from_quality_density(
            prior,
            |x| terms.iter().map(|&(i, w, c)| w * order_statistic_pdf(prior, c, i, n, x)).sum(),
            noise_std,
        )
    }

    fn from_quality_density(prior: &ContinuousPrior, density: impl Fn(f64) -> f64, noise_std: f64) -> Result<Self> {
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::InvalidInput(format!("noise std must be finite and >= 0, got {noise_std}")));
        }
        let (qlo, qhi) = prior.support();
        if noise_std == 0.0 {
            let width = (qhi - qlo) / ANSWER_BINS as f64;
            let mass = (0..ANSWER_BINS).map(|k| density(qlo + (k as f64 + 0.5) * width) * width).collect();
            return Self::from_bins(qlo, qhi, mass);
        }
        let points = (((qhi - qlo) / (0.25 * noise_std)).ceil() as usize).clamp(QUALITY_POINTS_MIN, QUALITY_POINTS_MAX);
        let step = (qhi - qlo) / points as f64;
        let (centres, weights): (Vec<f64>, Vec<f64>) = (0..points)
            .map(|j| {
                let x = qlo + (j as f64 + 0.5) * step;
                (x, density(x) * step)
            })
            .unzip();
        Self::gaussian_mixture_on(&centres, &weights, noise_std, qlo - SPAN * noise_std, qhi + SPAN * noise_std)
    }

    /// Mixture of `N(atoms[i], noise_std²)` with the given weights.
    pub fn gaussian_mixture(atoms: &[f64], weights: &[f64], noise_std: f64) -> Result<Self> {
        if !(noise_std > 0.0 && noise_std.is_finite()) {
            return Err(Error::InvalidInput("a mixture of point masses needs positive noise".into()));
        }
        if atoms.len() != weights.len() || atoms.is_empty() {
            return Err(Error::InvalidInput("atoms and weights must have equal, non-zero length".into()));
        }
        let lo = atoms.iter().copied().fold(f64::INFINITY, f64::min) - SPAN * noise_std;
        let hi = atoms.iter().copied().fold(f64::NEG_INFINITY, f64::max) + SPAN * noise_std;
        Self::gaussian_mixture_on(atoms, weights, noise_std, lo, hi)
    }

    fn gaussian_mixture_on(atoms: &[f64], weights: &[f64], noise_std: f64, lo: f64, hi: f64) -> Result<Self> {
        let width = (hi - lo) / ANSWER_BINS as f64;
        let mut mass = vec![0.0; ANSWER_BINS];
        let reach = 9.0 * noise_std;
        for (&a, &w) in atoms.iter().zip(weights) {
            if w <= 0.0 {
                continue;
            }
            let first = (((a - reach - lo) / width).floor().max(0.0)) as usize;
            let last = ((((a + reach - lo) / width).ceil()) as usize).min(ANSWER_BINS);
            let mut prev = norm_cdf((lo + first as f64 * width - a) / noise_std);
            for (k, m) in mass.iter_mut().enumerate().take(last).skip(first) {
                let next = norm_cdf((lo + (k + 1) as f64 * width - a) / noise_std);
                *m += w * (next - prev);
                prev = next;
            }
        }
        Self::from_bins(lo, hi, mass)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.lo + self.width * self.mass.len() as f64)
    }

    /// Density value at `x`.
    pub fn pdf(&self, x: f64) -> f64 {
        let k = ((x - self.lo) / self.width).floor();
        if k < 0.0 || k >= self.mass.len() as f64 {
            return 0.0;
        }
        self.mass[k as usize] / self.width
    }

    pub fn mean(&self) -> f64 {
        self.cum[self.mass.len()][1]
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.cum[self.mass.len()][2] - m * m
    }

    /// Mass, first and second moments over `(u, v]`.
    pub fn moments(&self, u: f64, v: f64) -> [f64; 3] {
        let (lo, hi) = self.support();
        let u = u.max(lo);
        let v = v.min(hi);
        if !(v > u) {
            return [0.0; 3];
        }
        let last = self.mass.len() - 1;
        let ju = (((u - lo) / self.width).floor() as usize).min(last);
        let jv = (((v - lo) / self.width).floor() as usize).min(last);
        if ju == jv {
            return self.partial(ju, u, v);
        }
        let a = self.partial(ju, u, self.edge(ju + 1));
        let b = self.partial(jv, self.edge(jv), v);
        let full = |d: usize| self.cum[jv][d] - self.cum[ju + 1][d];
        [a[0] + b[0] + full(0), a[1] + b[1] + full(1), a[2] + b[2] + full(2)]
    }

    fn edge(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.width
    }

    fn partial(&self, k: usize, u: f64, v: f64) -> [f64; 3] {
        let d = self.mass[k] / self.width;
        [d * (v - u), d * (v * v - u * u) / 2.0, d * (v * v * v - u * u * u) / 3.0]
    }

    /// Smallest `x` with `P(X <= x) >= p`.
    pub fn quantile(&self, p: f64) -> f64 {
        self.quantile_between(p, 0, self.mass.len())
    }

    fn quantile_between(&self, p: f64, from: usize, to: usize) -> f64 {
        let base = self.cum[from][0];
        let target = base + p * (self.cum[to][0] - base);
        let k = self.cum[from..=to].partition_point(|c| c[0] < target) + from;
        if k == from {
            return self.edge(from);
        }
        let k = k - 1;
        if self.mass[k] == 0.0 {
            return self.edge(k);
        }
        self.edge(k) + self.width * ((target - self.cum[k][0]) / self.mass[k]).clamp(0.0, 1.0)
    }

    /// Conditional median over `(u, v]`.
    fn median_between(&self, u: f64, v: f64) -> f64 {
        let [m0, ..] = self.moments(u, v);
        let below = self.moments(f64::NEG_INFINITY, u)[0];
        let (lo, hi) = self.support();
        // Bisection on the cumulative mass; exact enough for a split point.
        let (mut a, mut b) = (u.max(lo), v.min(hi));
        let target = below + 0.5 * m0;
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if self.moments(f64::NEG_INFINITY, mid)[0] < target {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    /// Mean squared quantization error `E[(Q(A) - A)²]`.
    pub fn mse(&self, spec: &QuantizerSpec) -> f64 {
        let z = spec.thresholds();
        spec.representatives()
            .iter()
            .enumerate()
            .map(|(l, &w)| {
                let [m0, m1, m2] = self.moments(z[l], z[l + 1]);
                m2 - 2.0 * w * m1 + w * w * m0
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LloydReport {
    pub iterations: usize,
    pub converged: bool,
    /// Distortion after every centroid step.
    pub mse_history: Vec<f64>,
    /// Number of empty cells that were re-seeded.
    pub repairs: usize,
}

/// Lloyd iteration: alternate nearest-neighbour thresholds and cell
/// centroids until no representative moves by `tol` or more.
pub fn lloyd_design(density: &AnswerDensity, levels: usize, tol: f64, max_iter: usize) -> Result<(QuantizerSpec, LloydReport)> {
    if levels == 0 {
        return Err(Error::InvalidInput("L must be at least 1".into()));
    }
    let mut reps: Vec<f64> = (0..levels).map(|l| density.quantile((2 * l + 1) as f64 / (2 * levels) as f64)).collect();
    let mut report = LloydReport { iterations: 0, converged: false, mse_history: Vec::new(), repairs: 0 };
    while report.iterations < max_iter {
        let z = midpoints(&reps);
        let cells: Vec<[f64; 3]> = (0..levels).map(|l| density.moments(z[l], z[l + 1])).collect();

        if cells.iter().any(|c| c[0] < COLLAPSE_MASS) {
            if report.repairs > 10 * levels {
                return Err(Error::InvalidInput("Lloyd design keeps producing empty cells".into()));
            }
            reps = repair(density, &z, &reps, &cells, &mut report.repairs);
            continue;
        }

        let next: Vec<f64> = cells.iter().map(|c| c[1] / c[0]).collect();
        let mse: f64 = cells
            .iter()
            .zip(&next)
            .map(|(c, &w)| c[2] - 2.0 * w * c[1] + w * w * c[0])
            .sum();
        report.mse_history.push(mse);
        report.iterations += 1;
        let moved = reps.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        reps = next;
        if moved < tol {
            report.converged = true;
            break;
        }
    }
    let spec = QuantizerSpec::from_representatives(reps)?;
    Ok((spec, report))
}

fn midpoints(reps: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(reps.len() + 1);
    z.push(f64::NEG_INFINITY);
    z.extend(reps.windows(2).map(|p| 0.5 * (p[0] + p[1])));
    z.push(f64::INFINITY);
    z
}

/// Drops representatives of empty cells and, for each, splits the heaviest
/// cell at its conditional median into two centroids.
fn repair(density: &AnswerDensity, z: &[f64], reps: &[f64], cells: &[[f64; 3]], repairs: &mut usize) -> Vec<f64> {
    // Each entry: (lower, upper, mass, representative).
    let mut kept: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut missing = 0;
    for (l, c) in cells.iter().enumerate() {
        if c[0] < COLLAPSE_MASS {
            missing += 1;
        } else {
            kept.push((z[l], z[l + 1], c[0], reps[l]));
        }
    }
    for _ in 0..missing {
        let heaviest = (0..kept.len()).max_by(|&a, &b| kept[a].2.total_cmp(&kept[b].2)).expect("some cell has mass");
        let (u, v, _, _) = kept[heaviest];
        let m = density.median_between(u, v);
        let left = density.moments(u, m);
        let right = density.moments(m, v);
        kept[heaviest] = (u, m, left[0], left[1] / left[0]);
        kept.insert(heaviest + 1, (m, v, right[0], right[1] / right[0]));
        *repairs += 1;
    }
    kept.into_iter().map(|c| c.3).collect()
}
