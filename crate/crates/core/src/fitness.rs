//! Probability-of-being-best estimates and the elimination rule.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::posterior::QualityMarginal;
use crate::special::{erf_saturated, norm_cdf, norm_pdf, GL8_NODES, GL8_WEIGHTS};

/// Default sample count when exact probabilities fall back to Monte Carlo.
pub const FALLBACK_SAMPLES: usize = 100_000;

/// Half-width, in standard deviations, beyond which densities are ignored.
const TAIL: f64 = 9.0;

/// Fitness indices for one round. `phi[i]` is `-inf` exactly for objects
/// outside the contestant set.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessState {
    pub phi: Vec<f64>,
    pub contestants: Vec<usize>,
}

impl FitnessState {
    /// Fitness equal to `values` on the contestants, no elimination.
    pub fn keep_all(values: &[f64], contestants: &[usize]) -> Self {
        apply_elimination(values, contestants, 0.0)
    }
}

/// Index of the contestant with the largest mean, lowest index on ties.
fn top_two(mean: &[f64], contestants: &[usize]) -> (usize, Option<usize>) {
    let better = |a: usize, b: usize| mean[a] > mean[b] || (mean[a] == mean[b] && a < b);
    let mut top = contestants[0];
    let mut second: Option<usize> = None;
    for &i in &contestants[1..] {
        if better(i, top) {
            second = Some(top);
            top = i;
        } else if second.is_none_or(|s| better(i, s)) {
            second = Some(i);
        }
    }
    (top, second)
}

/// Pairwise surrogate `π̃_i = P(q_i > q_c(i))`, where `c(i)` is the
/// contestant other than `i` with the largest posterior mean. Returns a
/// length-`N` vector with zeros outside `contestants`.
pub fn pi_approx(m: &QualityMarginal, contestants: &[usize]) -> Result<Vec<f64>> {
    let n = m.n();
    let mut out = vec![0.0; n];
    if contestants.is_empty() {
        return Ok(out);
    }
    let (top, second) = top_two(&m.mean, contestants);
    let Some(second) = second else {
        out[top] = 1.0;
        return Ok(out);
    };
    for &i in contestants {
        let c = if i == top { second } else { top };
        out[i] = pairwise(m, i, c)?;
    }
    Ok(out)
}

/// `P(q_i > q_j)` under the bivariate marginal of `(q_i, q_j)`.
fn pairwise(m: &QualityMarginal, i: usize, j: usize) -> Result<f64> {
    let diff = m.mean[i] - m.mean[j];
    let var = m.variance(i) + m.variance(j) - 2.0 * m.covariance(i, j);
    if var <= 0.0 {
        return match diff.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => Ok(1.0),
            Some(std::cmp::Ordering::Less) => Ok(0.0),
            _ => Err(Error::DegenerateComparison { first: i, second: j }),
        };
    }
    Ok(0.5 * (1.0 + erf_saturated(diff / (2.0 * var).sqrt())))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactMethod {
    /// Product-CDF quadrature; exact only for a diagonal covariance. On a
    /// correlated marginal this falls back to Monte Carlo.
    Quadrature,
    /// Product-CDF quadrature on the diagonal of the covariance, ignoring
    /// correlations.
    DiagonalQuadrature,
    /// Argmax frequencies over joint Gaussian draws.
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactPi {
    pub values: Vec<f64>,
    /// The method that actually produced `values`.
    pub method: ExactMethod,
    /// Set when quadrature was requested on a correlated marginal.
    pub fell_back: bool,
}

/// `π_i = P(q_i > q_j for every other contestant j)`.
pub fn pi_exact(m: &QualityMarginal, contestants: &[usize], method: ExactMethod) -> Result<ExactPi> {
    let n = m.n();
    if contestants.len() <= 1 {
        let mut values = vec![0.0; n];
        if let Some(&i) = contestants.first() {
            values[i] = 1.0;
        }
        return Ok(ExactPi { values, method, fell_back: false });
    }
    match method {
        ExactMethod::DiagonalQuadrature => Ok(ExactPi { values: product_cdf(m, contestants), method, fell_back: false }),
        ExactMethod::Quadrature => {
            let correlated = contestants
                .iter()
                .enumerate()
                .any(|(a, &i)| contestants[..a].iter().any(|&j| m.correlation(i, j).abs() > 1e-12));
            if correlated {
                let fallback = ExactMethod::MonteCarlo { samples: FALLBACK_SAMPLES, seed: 0 };
                let values = monte_carlo(m, contestants, FALLBACK_SAMPLES, 0);
                Ok(ExactPi { values, method: fallback, fell_back: true })
            } else {
                Ok(ExactPi { values: product_cdf(m, contestants), method, fell_back: false })
            }
        }
        ExactMethod::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::InvalidInput("monte carlo needs at least one sample".into()));
            }
            Ok(ExactPi { values: monte_carlo(m, contestants, samples, seed), method, fell_back: false })
        }
    }
}

/// `π_i = ∫ f_i(x) Π_{j≠i} F_j(x) dx` for independent Gaussian qualities,
/// integrated with 8-point Gauss-Legendre panels no wider than half the
/// narrowest standard deviation active at that point.
fn product_cdf(m: &QualityMarginal, contestants: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; m.n()];
    let mu: Vec<f64> = contestants.iter().map(|&i| m.mean[i]).collect();
    let sd: Vec<f64> = contestants.iter().map(|&i| m.variance(i).max(0.0).sqrt()).collect();
    let k = contestants.len();

    let lower = |j: usize| mu[j] - TAIL * sd[j];
    let upper = |j: usize| mu[j] + TAIL * sd[j];
    let x_lo = (0..k).map(lower).fold(f64::NEG_INFINITY, f64::max);
    let x_hi = (0..k).map(upper).fold(f64::NEG_INFINITY, f64::max);

    // Objects whose whole mass sits below x_lo have CDF 1 on the range and
    // contribute nothing.
    let active: Vec<usize> = (0..k).filter(|&j| upper(j) >= x_lo).collect();
    let cdf = |j: usize, x: f64| {
        if sd[j] > 0.0 {
            norm_cdf((x - mu[j]) / sd[j])
        } else if x > mu[j] {
            1.0
        } else if x < mu[j] {
            0.0
        } else {
            0.5
        }
    };

    // Point masses.
    for &i in &active {
        if sd[i] == 0.0 {
            out[contestants[i]] = active.iter().filter(|&&j| j != i).map(|&j| cdf(j, mu[i])).product();
        }
    }

    let mut breaks: Vec<f64> = active.iter().filter(|&&j| sd[j] == 0.0).map(|&j| mu[j]).collect();
    for &j in &active {
        if sd[j] > 0.0 {
            breaks.push(mu[j] - 10.0 * sd[j]);
        }
    }
    breaks.retain(|&b| b > x_lo && b < x_hi);
    breaks.sort_by(f64::total_cmp);

    let mut acc = vec![0.0; k];
    let mut f = vec![0.0; active.len()];
    let mut suffix = vec![0.0; active.len() + 1];
    let mut a = x_lo;
    let mut next_break = 0;
    while a < x_hi {
        let local = active
            .iter()
            .filter(|&&j| sd[j] > 0.0 && (a - mu[j]).abs() <= 10.0 * sd[j])
            .map(|&j| sd[j])
            .fold(f64::INFINITY, f64::min);
        while next_break < breaks.len() && breaks[next_break] <= a {
            next_break += 1;
        }
        let mut b = if local.is_finite() { a + 0.5 * local } else { x_hi };
        if next_break < breaks.len() {
            b = b.min(breaks[next_break]);
        }
        b = b.min(x_hi);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (t, w) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
            let x = mid + half * t;
            for (slot, &j) in active.iter().enumerate() {
                f[slot] = cdf(j, x);
            }
            suffix[active.len()] = 1.0;
            for slot in (0..active.len()).rev() {
                suffix[slot] = suffix[slot + 1] * f[slot];
            }
            let mut prefix = 1.0;
            for (slot, &i) in active.iter().enumerate() {
                if sd[i] > 0.0 {
                    let others = prefix * suffix[slot + 1];
                    if others > 0.0 {
                        acc[i] += w * half * norm_pdf((x - mu[i]) / sd[i]) / sd[i] * others;
                    }
                }
                prefix *= f[slot];
            }
        }
        a = b;
    }
    for &i in &active {
        if sd[i] > 0.0 {
            out[contestants[i]] = acc[i].clamp(0.0, 1.0);
        }
    }
    out
}

fn monte_carlo(m: &QualityMarginal, contestants: &[usize], samples: usize, seed: u64) -> Vec<f64> {
    let k = contestants.len();
    let cov = DMatrix::from_fn(k, k, |a, b| m.covariance(contestants[a], contestants[b]));
    // Symmetric square root tolerates singular covariances.
    let eig = cov.symmetric_eigen();
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    let mu: Vec<f64> = contestants.iter().map(|&i| m.mean[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wins = vec![0usize; k];
    let mut z = vec![0.0; k];
    for _ in 0..samples {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for a in 0..k {
            let mut x = mu[a];
            for (b, zb) in z.iter().enumerate() {
                x += root[(a, b)] * zb;
            }
            if x > best_val {
                best_val = x;
                best = a;
            }
        }
        wins[best] += 1;
    }
    let mut out = vec![0.0; m.n()];
    for (a, &i) in contestants.iter().enumerate() {
        out[i] = wins[a] as f64 / samples as f64;
    }
    out
}

/// Keeps contestants whose value exceeds `threshold`; the rest get
/// `φ = -inf` and leave the set. The contestant with the largest value is
/// never removed. A non-positive threshold disables elimination.
pub fn apply_elimination(values: &[f64], contestants: &[usize], threshold: f64) -> FitnessState {
    let mut phi = vec![f64::NEG_INFINITY; values.len()];
    if contestants.is_empty() {
        return FitnessState { phi, contestants: Vec::new() };
    }
    let leader = contestants
        .iter()
        .copied()
        .reduce(|a, b| if values[b] > values[a] || (values[b] == values[a] && b < a) { b } else { a })
        .unwrap();
    let mut kept: Vec<usize> = contestants
        .iter()
        .copied()
        .filter(|&i| i == leader || threshold <= 0.0 || values[i] > threshold)
        .collect();
    kept.sort_unstable();
    for &i in &kept {
        phi[i] = values[i];
    }
    FitnessState { phi, contestants: kept }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag(mean: &[f64], var: &[f64]) -> QualityMarginal {
        QualityMarginal::diagonal(mean.to_vec(), var.to_vec())
    }

    #[test]
    fn symmetric_pair_is_even() {
        let m = diag(&[0.4, 0.4], &[0.3, 0.3]);
        assert_eq!(pi_approx(&m, &[0, 1]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn unit_gap_gives_phi_of_one() {
        let m = diag(&[1.0, 0.0], &[0.5, 0.5]);
        let p = pi_approx(&m, &[0, 1]).unwrap();
        assert_relative_eq!(p[0], 0.841_344_746_068_542_9, epsilon = 1e-14);
        assert_relative_eq!(p[1], 1.0 - 0.841_344_746_068_542_9, epsilon = 1e-14);
    }

    #[test]
    fn separation_limit() {
        let m = diag(&[3.0, 2.0, 1.0], &[1e-4; 3]);
        let p = pi_approx(&m, &[0, 1, 2]).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn degenerate_comparison() {
        let m = diag(&[1.0, 1.0, 0.0], &[0.0, 0.0, 0.0]);
        assert_eq!(pi_approx(&m, &[0, 1]).unwrap_err(), Error::DegenerateComparison { first: 0, second: 1 });
        let p = pi_approx(&diag(&[1.0, 0.0], &[0.0, 0.0]), &[0, 1]).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn competitor_ties_break_to_lowest_index() {
        let m = diag(&[2.0, 1.0, 1.0], &[1.0, 1.0, 4.0]);
        let p = pi_approx(&m, &[2, 1, 0]).unwrap();
        // c(0) = 1 (variance 1), not 2 (variance 4).
        assert_relative_eq!(p[0], norm_cdf(1.0 / 2f64.sqrt()), epsilon = 1e-14);
    }

    #[test]
    fn approx_uses_correlation() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]);
        let m = QualityMarginal::dense(vec![0.5, 0.0], cov);
        let p = pi_approx(&m, &[0, 1]).unwrap();
        assert_relative_eq!(p[0], norm_cdf(0.5 / 0.4f64.sqrt()), epsilon = 1e-14);
    }

    #[test]
    fn single_contestant_is_certain() {
        let m = diag(&[0.0, 5.0], &[1.0, 1.0]);
        let e = pi_exact(&m, &[0], ExactMethod::Quadrature).unwrap();
        assert_eq!(e.values, vec![1.0, 0.0]);
        assert_eq!(pi_approx(&m, &[0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn exact_equals_approx_for_two() {
        let m = diag(&[0.3, -0.2], &[0.7, 0.2]);
        let e = pi_exact(&m, &[0, 1], ExactMethod::Quadrature).unwrap();
        let a = pi_approx(&m, &[0, 1]).unwrap();
        assert_relative_eq!(e.values[0], a[0], epsilon = 1e-10);
        assert_relative_eq!(e.values[1], a[1], epsilon = 1e-10);
    }

    #[test]
    fn three_way_symmetry() {
        let m = diag(&[0.0; 3], &[0.5; 3]);
        let e = pi_exact(&m, &[0, 1, 2], ExactMethod::Quadrature).unwrap();
        for v in &e.values {
            assert_relative_eq!(*v, 1.0 / 3.0, epsilon = 1e-4);
        }
        let mc = pi_exact(&m, &[0, 1, 2], ExactMethod::MonteCarlo { samples: 100_000, seed: 3 }).unwrap();
        let se = (1.0f64 / 3.0 * 2.0 / 3.0 / 1e5).sqrt();
        for v in &mc.values {
            assert!((v - 1.0 / 3.0).abs() < 3.0 * se, "{v}");
        }
    }

    #[test]
    fn mixed_point_masses() {
        // Object 1 is a point mass at 0; object 0 ~ N(0, 1).
        let m = diag(&[0.0, 0.0], &[1.0, 0.0]);
        let e = pi_exact(&m, &[0, 1], ExactMethod::Quadrature).unwrap();
        assert_relative_eq!(e.values[0], 0.5, epsilon = 1e-10);
        assert_relative_eq!(e.values[1], 0.5, epsilon = 1e-10);
    }

    #[test]
    fn correlated_quadrature_falls_back() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let m = QualityMarginal::dense(vec![0.0, 0.1, -0.1], cov);
        let e = pi_exact(&m, &[0, 1, 2], ExactMethod::Quadrature).unwrap();
        assert!(e.fell_back);
        assert!(matches!(e.method, ExactMethod::MonteCarlo { .. }));
        assert_relative_eq!(e.values.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let d = pi_exact(&m, &[0, 1, 2], ExactMethod::DiagonalQuadrature).unwrap();
        assert!(!d.fell_back);
    }

    #[test]
    fn elimination_rule() {
        let s = apply_elimination(&[0.9, 0.05, 0.05], &[0, 1, 2], 0.1);
        assert_eq!(s.contestants, vec![0]);
        assert_eq!(s.phi, vec![0.9, f64::NEG_INFINITY, f64::NEG_INFINITY]);

        let s = apply_elimination(&[0.5, 0.5, 1e-6], &[0, 1, 2], 1e-3);
        assert_eq!(s.contestants, vec![0, 1]);

        let s = apply_elimination(&[0.0, 0.0, 0.7], &[0, 1, 2], 0.0);
        assert_eq!(s.contestants, vec![0, 1, 2]);
    }

    #[test]
    fn elimination_keeps_leader() {
        let s = apply_elimination(&[0.2, 0.3, 0.3], &[0, 1, 2], 0.5);
        assert_eq!(s.contestants, vec![1]);
        assert_eq!(s.phi[1], 0.3);
    }

    #[test]
    fn eliminated_objects_stay_out() {
        let s = apply_elimination(&[0.6, 0.9, 0.4], &[0, 1], 0.1);
        assert_eq!(s.phi[2], f64::NEG_INFINITY);
        assert_eq!(s.contestants, vec![0, 1]);
    }
}
