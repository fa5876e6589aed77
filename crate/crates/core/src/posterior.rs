//! Joint Gaussian posterior over object qualities and worker biases.
//!
//! The state is kept in information form with the worker biases already
//! marginalised out. Because every bias only couples to the objects its
//! worker scored, the bias block of the information matrix is diagonal and
//! its Schur complement folds each worker into a single rank-one term:
//!
//! ```text
//! J_q = J_xx - sum_w s_w s_wᵀ / (σ⁴ d_w),   d_w = n_w/σ² + 1/σ_β²
//! h_q = h_x  - sum_w s_w h_w / (σ² d_w),     h_w = Σy_w/σ² + μ_β/σ_β²
//! ```
//!
//! where `s_w` counts the objects scored by worker `w`. Updates cost
//! `O(|s_w|²)` and the quality marginal is one `N x N` factorisation.
//! [`batch_joint`] evaluates the same posterior directly over `[x; b]` from
//! the full allocation matrix, and is used to cross-check the incremental
//! route.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Answer, AnswerLog};

/// Condition number above which a factorisation is reported as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Prior moments for the estimator. Standard deviations may be infinite
/// (flat prior). A zero bias standard deviation means biases are known to
/// equal `bias_mean`, which removes them from the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub quality_mean: f64,
    pub quality_std: f64,
    pub bias_mean: f64,
    pub bias_std: f64,
}

impl PriorSpec {
    /// Flat quality prior, no bias.
    pub fn unknown_quality() -> Self {
        PriorSpec { quality_mean: 0.0, quality_std: f64::INFINITY, bias_mean: 0.0, bias_std: 0.0 }
    }

    pub fn gaussian_quality(mean: f64, std: f64) -> Self {
        PriorSpec { quality_mean: mean, quality_std: std, bias_mean: 0.0, bias_std: 0.0 }
    }

    pub fn with_bias(mut self, mean: f64, std: f64) -> Self {
        self.bias_mean = mean;
        self.bias_std = std;
        self
    }

    pub fn estimates_bias(&self) -> bool {
        self.bias_std > 0.0
    }

    fn quality_precision(&self) -> f64 {
        precision(self.quality_std)
    }

    fn bias_precision(&self) -> f64 {
        precision(self.bias_std)
    }

    fn validate(&self) -> Result<()> {
        let ok = |s: f64| s >= 0.0 && !s.is_nan();
        if !ok(self.quality_std) || !ok(self.bias_std) || !self.quality_mean.is_finite() || !self.bias_mean.is_finite() {
            return Err(Error::InvalidConfig(format!("invalid prior {self:?}")));
        }
        if self.quality_std == 0.0 {
            return Err(Error::InvalidConfig("quality prior std must be positive".into()));
        }
        Ok(())
    }
}

fn precision(std: f64) -> f64 {
    if std.is_infinite() {
        0.0
    } else {
        1.0 / (std * std)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

/// Mean and covariance of the quality block.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityMarginal {
    pub mean: Vec<f64>,
    pub cov: Covariance,
}

impl QualityMarginal {
    pub fn diagonal(mean: Vec<f64>, variances: Vec<f64>) -> Self {
        QualityMarginal { mean, cov: Covariance::Diagonal(variances) }
    }

    pub fn dense(mean: Vec<f64>, cov: DMatrix<f64>) -> Self {
        QualityMarginal { mean, cov: Covariance::Dense(cov) }
    }

    pub fn n(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self, i: usize) -> f64 {
        match &self.cov {
            Covariance::Diagonal(v) => v[i],
            Covariance::Dense(m) => m[(i, i)],
        }
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        match &self.cov {
            Covariance::Diagonal(v) => {
                if i == j {
                    v[i]
                } else {
                    0.0
                }
            }
            Covariance::Dense(m) => m[(i, j)],
        }
    }

    /// `ρ_ij = Σ_ij / sqrt(Σ_ii Σ_jj)`, zero when either variance vanishes.
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        let d = (self.variance(i) * self.variance(j)).sqrt();
        if d > 0.0 {
            self.covariance(i, j) / d
        } else {
            0.0
        }
    }

    /// True when every off-diagonal covariance is negligible relative to
    /// the geometric mean of the matching variances.
    pub fn is_diagonal(&self) -> bool {
        match &self.cov {
            Covariance::Diagonal(_) => true,
            Covariance::Dense(m) => {
                let n = m.nrows();
                (0..n).all(|i| (0..i).all(|j| m[(i, j)].abs() <= 1e-12 * (m[(i, i)] * m[(j, j)]).sqrt()))
            }
        }
    }

    /// Dense copy of the covariance.
    pub fn cov_matrix(&self) -> DMatrix<f64> {
        match &self.cov {
            Covariance::Diagonal(v) => DMatrix::from_diagonal(&DVector::from_column_slice(v)),
            Covariance::Dense(m) => m.clone(),
        }
    }
}

/// Joint posterior over `[x; b]`. `workers[k]` is the external id of the
/// worker whose bias sits at index `n + k`.
#[derive(Debug, Clone)]
pub struct JointPosterior {
    pub n_objects: usize,
    pub workers: Vec<usize>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

#[derive(Debug, Clone)]
struct WorkerStats {
    id: usize,
    /// object -> number of answers from this worker.
    scored: BTreeMap<usize, f64>,
    count: f64,
    sum: f64,
}

/// Incrementally updated posterior state.
#[derive(Debug, Clone)]
pub struct Posterior {
    prior: PriorSpec,
    noise_var: f64,
    info: DMatrix<f64>,
    shift: DVector<f64>,
    workers: Vec<WorkerStats>,
    slots: BTreeMap<usize, usize>,
    coupled: bool,
    answers: usize,
}

impl Posterior {
    pub fn new(prior: PriorSpec, n_objects: usize, noise_var: f64) -> Result<Self> {
        prior.validate()?;
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise variance must be positive, got {noise_var}")));
        }
        let p = prior.quality_precision();
        Ok(Posterior {
            prior,
            noise_var,
            info: DMatrix::from_diagonal_element(n_objects, n_objects, p),
            shift: DVector::from_element(n_objects, p * prior.quality_mean),
            workers: Vec::new(),
            slots: BTreeMap::new(),
            coupled: false,
            answers: 0,
        })
    }

    /// Posterior given every answer in `log`, built by replaying it.
    pub fn from_log(prior: PriorSpec, log: &AnswerLog, noise_var: f64) -> Result<Self> {
        let mut post = Posterior::new(prior, log.n_objects(), noise_var)?;
        post.update(log.entries())?;
        Ok(post)
    }

    pub fn n(&self) -> usize {
        self.info.nrows()
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn answers(&self) -> usize {
        self.answers
    }

    /// Workers whose bias is part of the state, in enrollment order.
    pub fn bias_workers(&self) -> Vec<usize> {
        if self.prior.estimates_bias() {
            self.workers.iter().map(|w| w.id).collect()
        } else {
            Vec::new()
        }
    }

    /// Folds new answers into the state. Workers seen for the first time are
    /// enrolled with a fresh `(μ_β, σ_β²)` prior.
    pub fn update(&mut self, answers: &[Answer]) -> Result<()> {
        let n = self.n();
        if let Some(a) = answers.iter().find(|a| a.object >= n) {
            return Err(Error::InvalidInput(format!("answer references object {} of {n}", a.object)));
        }
        let s2 = self.noise_var;
        if !self.prior.estimates_bias() {
            let mu_b = self.prior.bias_mean;
            for a in answers {
                self.info[(a.object, a.object)] += 1.0 / s2;
                self.shift[a.object] += (a.reported - mu_b) / s2;
            }
            self.answers += answers.len();
            return Ok(());
        }

        let mut touched: Vec<usize> = Vec::new();
        for a in answers {
            let slot = match self.slots.get(&a.worker) {
                Some(&k) => k,
                None => {
                    self.workers.push(WorkerStats { id: a.worker, scored: BTreeMap::new(), count: 0.0, sum: 0.0 });
                    self.slots.insert(a.worker, self.workers.len() - 1);
                    self.workers.len() - 1
                }
            };
            if !touched.contains(&slot) {
                if self.workers[slot].count > 0.0 {
                    self.fold_worker(slot, -1.0);
                }
                touched.push(slot);
            }
            let w = &mut self.workers[slot];
            *w.scored.entry(a.object).or_insert(0.0) += 1.0;
            w.count += 1.0;
            w.sum += a.reported;
            self.info[(a.object, a.object)] += 1.0 / s2;
            self.shift[a.object] += a.reported / s2;
        }
        for slot in touched {
            self.fold_worker(slot, 1.0);
        }
        self.answers += answers.len();
        Ok(())
    }

    /// Adds (`sign = 1`) or retracts (`sign = -1`) the Schur term of a worker.
    fn fold_worker(&mut self, slot: usize, sign: f64) {
        let s2 = self.noise_var;
        let pb = self.prior.bias_precision();
        let w = &self.workers[slot];
        let d = w.count / s2 + pb;
        let hb = w.sum / s2 + pb * self.prior.bias_mean;
        let c = 1.0 / (s2 * s2 * d);
        let g = hb / (s2 * d);
        for (&i, &si) in &w.scored {
            for (&j, &sj) in &w.scored {
                self.info[(i, j)] -= sign * c * si * sj;
            }
            self.shift[i] -= sign * g * si;
        }
        if w.scored.len() > 1 {
            self.coupled = true;
        }
    }

    /// Mean and covariance of the quality block.
    pub fn quality_marginal(&self) -> Result<QualityMarginal> {
        let n = self.n();
        if !self.coupled {
            let mut mean = Vec::with_capacity(n);
            let mut var = Vec::with_capacity(n);
            for i in 0..n {
                let j = self.info[(i, i)];
                if j <= 0.0 {
                    let mut e = vec![0.0; n];
                    e[i] = 1.0;
                    return Err(Error::Underdetermined { null_space: vec![e] });
                }
                mean.push(self.shift[i] / j);
                var.push(1.0 / j);
            }
            return Ok(QualityMarginal::diagonal(mean, var));
        }
        let (mean, cov) = solve_spd(&self.info, &self.shift)?;
        Ok(QualityMarginal::dense(mean.as_slice().to_vec(), cov))
    }

    /// Full joint posterior over `[x; b]`, recovered from the reduced state
    /// by block elimination.
    pub fn joint(&self) -> Result<JointPosterior> {
        let n = self.n();
        let marginal = self.quality_marginal()?;
        let sqq = marginal.cov_matrix();
        let mq = DVector::from_column_slice(&marginal.mean);
        if !self.prior.estimates_bias() {
            return Ok(JointPosterior { n_objects: n, workers: Vec::new(), mean: mq, cov: sqq });
        }
        let s2 = self.noise_var;
        let pb = self.prior.bias_precision();
        let k = self.workers.len();
        // B = J_xb, D = diag(d_w).
        let mut b = DMatrix::zeros(n, k);
        let mut d_inv = DVector::zeros(k);
        let mut hb = DVector::zeros(k);
        for (c, w) in self.workers.iter().enumerate() {
            for (&i, &si) in &w.scored {
                b[(i, c)] = si / s2;
            }
            let d = w.count / s2 + pb;
            d_inv[c] = 1.0 / d;
            hb[c] = w.sum / s2 + pb * self.prior.bias_mean;
        }
        // Σ_qb = -Σ_qq B D⁻¹, Σ_bb = D⁻¹ + D⁻¹ Bᵀ Σ_qq B D⁻¹, μ_b = D⁻¹ (h_b - Bᵀ μ_q).
        let bd = &b * DMatrix::from_diagonal(&d_inv);
        let sqb = -&sqq * &bd;
        let sbb = DMatrix::from_diagonal(&d_inv) - bd.transpose() * &sqb;
        let mb = (hb - b.transpose() * &mq).component_mul(&d_inv);

        let mut mean = DVector::zeros(n + k);
        mean.rows_mut(0, n).copy_from(&mq);
        mean.rows_mut(n, k).copy_from(&mb);
        let mut cov = DMatrix::zeros(n + k, n + k);
        cov.view_mut((0, 0), (n, n)).copy_from(&sqq);
        cov.view_mut((0, n), (n, k)).copy_from(&sqb);
        cov.view_mut((n, 0), (k, n)).copy_from(&sqb.transpose());
        cov.view_mut((n, n), (k, k)).copy_from(&sbb);
        Ok(JointPosterior { n_objects: n, workers: self.workers.iter().map(|w| w.id).collect(), mean, cov })
    }
}

/// Posterior over `[x; b]` computed from scratch with the dense allocation
/// matrix `Γ = [Γ_x Γ_b]`:
/// `Σ = (ΓᵀΓ/σ² + Σ₀⁻¹)⁻¹`, `μ = Σ (ΓᵀY/σ² + Σ₀⁻¹ μ₀)`.
pub fn batch_joint(prior: PriorSpec, log: &AnswerLog, noise_var: f64) -> Result<JointPosterior> {
    prior.validate()?;
    let n = log.n_objects();
    let mut y = DVector::from_iterator(log.len(), log.entries().iter().map(|a| a.reported));
    let (gamma, workers) = if prior.estimates_bias() {
        // One bias column per worker present in the log, in order of first
        // appearance (the incremental state's enrollment order).
        let mut order: Vec<usize> = Vec::new();
        for a in log.entries() {
            if !order.contains(&a.worker) {
                order.push(a.worker);
            }
        }
        let gb = log.gamma_b();
        let mut g = DMatrix::zeros(log.len(), n + order.len());
        g.view_mut((0, 0), (log.len(), n)).copy_from(&log.gamma_x());
        for (c, &w) in order.iter().enumerate() {
            g.column_mut(n + c).copy_from(&gb.column(w));
        }
        (g, order)
    } else {
        y.add_scalar_mut(-prior.bias_mean);
        (log.gamma_x(), Vec::new())
    };
    let k = workers.len();
    let dim = n + k;
    let mut prior_prec = DVector::zeros(dim);
    let mut prior_mean = DVector::zeros(dim);
    for i in 0..n {
        prior_prec[i] = prior.quality_precision();
        prior_mean[i] = prior.quality_mean;
    }
    for c in 0..k {
        prior_prec[n + c] = prior.bias_precision();
        prior_mean[n + c] = prior.bias_mean;
    }
    let info = gamma.transpose() * &gamma / noise_var + DMatrix::from_diagonal(&prior_prec);
    let h = gamma.transpose() * y / noise_var + prior_prec.component_mul(&prior_mean);
    let (mean, cov) = solve_spd(&info, &h)?;
    Ok(JointPosterior { n_objects: n, workers, mean, cov })
}

/// Solves `J μ = h` and inverts `J` via Cholesky, rejecting singular or
/// badly conditioned systems.
fn solve_spd(info: &DMatrix<f64>, h: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chol = match info.clone().cholesky() {
        Some(c) => c,
        None => return Err(underdetermined(info)),
    };
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..l.nrows() {
        let d = l[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if !(lo > 0.0) || (hi / lo).powi(2) > MAX_CONDITION {
        return Err(underdetermined(info));
    }
    let mean = chol.solve(h);
    let cov = chol.inverse();
    Ok((mean, cov))
}

fn underdetermined(info: &DMatrix<f64>) -> Error {
    let eig = info.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let null_space = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= top / MAX_CONDITION)
        .map(|(c, _)| eig.eigenvectors.column(c).iter().copied().collect())
        .collect();
    Error::Underdetermined { null_space }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn answer(object: usize, worker: usize, y: f64) -> Answer {
        Answer { object, worker, round: 1, raw: y, reported: y }
    }

    #[test]
    fn scalar_conjugate_update() {
        let (mu0, s0, s2, y) = (0.5, 2.0, 0.25, 1.7);
        let mut post = Posterior::new(PriorSpec::gaussian_quality(mu0, s0), 1, s2).unwrap();
        post.update(&[answer(0, 0, y)]).unwrap();
        let m = post.quality_marginal().unwrap();
        let prec = 1.0 / s2 + 1.0 / (s0 * s0);
        assert_relative_eq!(m.mean[0], (y / s2 + mu0 / (s0 * s0)) / prec, epsilon = 1e-14);
        assert_relative_eq!(m.variance(0), 1.0 / prec, epsilon = 1e-14);
    }

    #[test]
    fn prior_only_state() {
        let post = Posterior::new(PriorSpec::gaussian_quality(0.3, 1.5).with_bias(0.1, 0.5), 4, 1.0).unwrap();
        let m = post.quality_marginal().unwrap();
        assert_eq!(m.mean, vec![0.3; 4]);
        for i in 0..4 {
            assert_relative_eq!(m.variance(i), 2.25);
            for j in 0..4 {
                if i != j {
                    assert_eq!(m.covariance(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn flat_prior_without_bias_is_least_squares() {
        let mut post = Posterior::new(PriorSpec::unknown_quality(), 2, 0.5).unwrap();
        post.update(&[answer(0, 0, 1.0), answer(1, 0, 2.0), answer(0, 1, 3.0), answer(1, 2, 4.0), answer(0, 3, 5.0)])
            .unwrap();
        let m = post.quality_marginal().unwrap();
        assert_relative_eq!(m.mean[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(m.mean[1], 3.0, epsilon = 1e-14);
        assert_relative_eq!(m.variance(0), 0.5 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(m.variance(1), 0.25, epsilon = 1e-14);
        assert_eq!(m.covariance(0, 1), 0.0);
    }

    #[test]
    fn unscored_object_with_flat_prior_is_underdetermined() {
        let mut post = Posterior::new(PriorSpec::unknown_quality(), 3, 1.0).unwrap();
        post.update(&[answer(0, 0, 1.0), answer(1, 0, 2.0)]).unwrap();
        match post.quality_marginal().unwrap_err() {
            Error::Underdetermined { null_space } => assert_eq!(null_space, vec![vec![0.0, 0.0, 1.0]]),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn unknown_bias_and_quality_report_common_shift() {
        let prior = PriorSpec::unknown_quality().with_bias(0.0, f64::INFINITY);
        let mut post = Posterior::new(prior, 3, 1.0).unwrap();
        post.update(&[answer(0, 0, 1.0), answer(1, 0, 2.0), answer(2, 0, 0.5)]).unwrap();
        match post.quality_marginal().unwrap_err() {
            Error::Underdetermined { null_space } => {
                assert_eq!(null_space.len(), 1);
                let v = &null_space[0];
                let s = 1.0 / 3f64.sqrt();
                for x in v {
                    assert_relative_eq!(x.abs(), s, epsilon = 1e-8);
                }
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn shared_worker_induces_positive_correlation() {
        // Two objects, one shared biased worker, one answer each. Explicit
        // 3x3 inverse: with J = [[a+p, 0, a], [0, a+p, a], [a, a, 2a+r]] the
        // (0,1) cofactor is a² > 0 and det J > 0, so Σ_01 > 0.
        let prior = PriorSpec::gaussian_quality(0.0, 1.0).with_bias(0.0, 1.0);
        let mut post = Posterior::new(prior, 2, 1.0).unwrap();
        post.update(&[answer(0, 0, 0.3), answer(1, 0, -0.2)]).unwrap();
        let m = post.quality_marginal().unwrap();
        let (a, p, r) = (1.0, 1.0, 1.0);
        let j = DMatrix::from_row_slice(3, 3, &[a + p, 0.0, a, 0.0, a + p, a, a, a, 2.0 * a + r]);
        let inv = j.try_inverse().unwrap();
        assert!(m.correlation(0, 1) > 0.0);
        assert_relative_eq!(m.covariance(0, 1), inv[(0, 1)], epsilon = 1e-12);
        assert_relative_eq!(m.variance(0), inv[(0, 0)], epsilon = 1e-12);
    }

    #[test]
    fn known_zero_bias_equals_quality_only_model() {
        let answers = [answer(0, 0, 1.0), answer(1, 0, 2.0), answer(1, 1, 0.4)];
        let mut a = Posterior::new(PriorSpec::gaussian_quality(0.0, 2.0).with_bias(0.0, 0.0), 2, 0.7).unwrap();
        let mut b = Posterior::new(PriorSpec::gaussian_quality(0.0, 2.0), 2, 0.7).unwrap();
        a.update(&answers).unwrap();
        b.update(&answers).unwrap();
        assert_eq!(a.quality_marginal().unwrap(), b.quality_marginal().unwrap());
    }

    #[test]
    fn incremental_matches_batch_with_split_worker_batches() {
        let prior = PriorSpec::gaussian_quality(0.2, 1.3).with_bias(-0.1, 0.8);
        let answers = [
            answer(0, 0, 1.0),
            answer(1, 0, 0.1),
            answer(2, 1, -0.4),
            answer(0, 1, 0.9),
            answer(1, 2, 0.5),
            answer(2, 0, 0.0), // worker 0 returns in a later update
        ];
        let mut log = AnswerLog::new(3);
        let mut post = Posterior::new(prior, 3, 0.6).unwrap();
        for chunk in answers.chunks(2) {
            for a in chunk {
                log.push(*a).unwrap();
            }
            post.update(chunk).unwrap();
        }
        let inc = post.joint().unwrap();
        let bat = batch_joint(prior, &log, 0.6).unwrap();
        assert_eq!(inc.workers, bat.workers);
        for (x, y) in inc.mean.iter().zip(bat.mean.iter()) {
            assert_relative_eq!(x, y, max_relative = 1e-10, epsilon = 1e-12);
        }
        for (x, y) in inc.cov.iter().zip(bat.cov.iter()) {
            assert_relative_eq!(x, y, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn out_of_range_object_is_rejected() {
        let mut post = Posterior::new(PriorSpec::unknown_quality(), 2, 1.0).unwrap();
        assert!(matches!(post.update(&[answer(5, 0, 1.0)]), Err(Error::InvalidInput(_))));
    }
}
