//! Error probabilities of a two-object contest decided either by averaged
//! scores or by a majority of pairwise comparisons.
//!
//! `delta` is the quality gap, `sigma` the evaluation noise standard
//! deviation and `w` the number of workers.

use crate::special::{erfc, CompensatedSum};

/// Probability that one comparison picks the worse object.
pub fn p_delta(delta: f64, sigma: f64) -> f64 {
    0.5 * erfc(delta / (2.0 * sigma))
}

/// Error probability of a majority vote over `w` comparisons (odd `w`).
pub fn p_comp(w: u64, delta: f64, sigma: f64) -> f64 {
    binomial_upper_tail(w, w / 2 + 1, p_delta(delta, sigma))
}

/// `P(Bin(n, p) >= k)`.
///
/// Log-probabilities are built by the ratio recurrence from the mode and the
/// tail is normalised by the total, so no log-gamma rounding enters.
pub fn binomial_upper_tail(n: u64, k: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n || p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let log_odds = p.ln() - (-p).ln_1p();
    let mode = (((n + 1) as f64 * p).floor() as u64).min(n);
    let mut logs = vec![0.0; (n + 1) as usize];
    for j in mode..n {
        logs[j as usize + 1] = logs[j as usize] + ((n - j) as f64 / (j + 1) as f64).ln() + log_odds;
    }
    for j in (1..=mode).rev() {
        logs[j as usize - 1] = logs[j as usize] - ((n - j + 1) as f64 / j as f64).ln() - log_odds;
    }
    let log_sum = |ls: &[f64]| {
        let top = ls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        top + ls.iter().map(|l| (l - top).exp()).collect::<CompensatedSum>().value().ln()
    };
    (log_sum(&logs[k as usize..]) - log_sum(&logs)).exp().min(1.0)
}

/// Error probability when the `w` scores of each object are averaged.
pub fn p_est(w: u64, delta: f64, sigma: f64) -> f64 {
    0.5 * erfc((w as f64).sqrt() * delta / (2.0 * sigma))
}

/// Normal approximation of [`p_comp`].
pub fn p_comp_gaussian_approx(w: u64, delta: f64, sigma: f64) -> f64 {
    let p = p_delta(delta, sigma);
    if p >= 0.5 {
        return 0.5;
    }
    let arg = (w as f64).sqrt() * (1.0 - 2.0 * p) / (2.0 * (2.0 * p * (1.0 - p)).sqrt());
    0.5 * erfc(arg)
}

/// Small-gap form of [`p_comp_gaussian_approx`].
pub fn p_comp_small_gap(w: u64, delta: f64, sigma: f64) -> f64 {
    let arg = (2.0 / std::f64::consts::PI).sqrt() * (w as f64).sqrt() * delta / (2.0 * sigma);
    0.5 * erfc(arg)
}
