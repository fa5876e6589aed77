//! The generative world: object qualities, workers and their answers.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed::{Purpose, TrialSeed};

/// Shape of the distribution qualities are drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorKind {
    Gaussian { mean: f64, std: f64 },
    /// `N` qualities evenly spaced over `[lo, hi]`, assigned to objects in
    /// a random order.
    EquallySpaced { lo: f64, hi: f64 },
    /// Nothing is known; the estimator treats the prior variance as infinite.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityPrior {
    pub kind: PriorKind,
    pub n: usize,
}

impl QualityPrior {
    pub fn gaussian(n: usize, mean: f64, std: f64) -> Self {
        QualityPrior { kind: PriorKind::Gaussian { mean, std }, n }
    }

    pub fn equally_spaced(n: usize, lo: f64, hi: f64) -> Self {
        QualityPrior { kind: PriorKind::EquallySpaced { lo, hi }, n }
    }

    /// Spacing between neighbouring qualities of an equally spaced prior.
    pub fn spacing(&self) -> Option<f64> {
        match self.kind {
            PriorKind::EquallySpaced { lo, hi } if self.n >= 2 => Some((hi - lo) / (self.n - 1) as f64),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidInstance(format!("need at least 2 objects, got {}", self.n)));
        }
        match self.kind {
            PriorKind::Gaussian { mean, std } => {
                if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
                    return Err(Error::InvalidInstance(format!("gaussian prior needs std > 0, got {std}")));
                }
            }
            PriorKind::EquallySpaced { lo, hi } => {
                if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                    return Err(Error::InvalidInstance(format!("equally spaced prior needs lo < hi, got [{lo}, {hi}]")));
                }
            }
            PriorKind::Unknown => {
                return Err(Error::InvalidInstance("cannot sample qualities from an unknown prior".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BiasPrior {
    Zero,
    Gaussian { mean: f64, std: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkerSupply {
    Unbounded,
    Finite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkerModel {
    pub bias: BiasPrior,
    /// Nominal evaluation noise standard deviation `σ`.
    pub noise_std: f64,
    /// Per-worker variance is uniform on `[(1-ε)σ², (1+ε)σ²]`.
    pub variance_spread: f64,
    /// Maximum number of evaluations per worker, delivered in one batch.
    pub o_max: usize,
    pub supply: WorkerSupply,
}

impl WorkerModel {
    pub fn unbiased(noise_std: f64, o_max: usize) -> Self {
        WorkerModel {
            bias: BiasPrior::Zero,
            noise_std,
            variance_spread: 0.0,
            o_max,
            supply: WorkerSupply::Unbounded,
        }
    }

    pub fn with_bias(mut self, mean: f64, std: f64) -> Self {
        self.bias = if std == 0.0 && mean == 0.0 { BiasPrior::Zero } else { BiasPrior::Gaussian { mean, std } };
        self
    }

    pub fn with_variance_spread(mut self, eps: f64) -> Self {
        self.variance_spread = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidInstance(format!("noise std must be finite and >= 0, got {}", self.noise_std)));
        }
        if !(0.0..=1.0).contains(&self.variance_spread) {
            return Err(Error::InvalidInstance(format!("variance spread must lie in [0, 1], got {}", self.variance_spread)));
        }
        if self.o_max == 0 {
            return Err(Error::InvalidInstance("o_max must be positive".into()));
        }
        if let BiasPrior::Gaussian { mean, std } = self.bias {
            if !(std >= 0.0 && std.is_finite() && mean.is_finite()) {
                return Err(Error::InvalidInstance(format!("bias std must be finite and >= 0, got {std}")));
            }
        }
        Ok(())
    }
}

/// Hands out fresh worker ids.
pub trait WorkerSource {
    fn enroll(&mut self) -> Result<usize>;
}

/// The hidden truth of one trial. Workers are enrolled lazily; each draws
/// its bias and variance from dedicated streams at enrollment time, so
/// switching the bias model on or off never perturbs the evaluation noise.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    qualities: Vec<f64>,
    best: usize,
    workers: WorkerModel,
    biases: Vec<f64>,
    variances: Vec<f64>,
    load: Vec<usize>,
    used: HashSet<(usize, usize)>,
    bias_rng: ChaCha8Rng,
    variance_rng: ChaCha8Rng,
}

/// Draws the ground truth for one trial.
pub fn sample_instance(prior: &QualityPrior, workers: &WorkerModel, seed: impl Into<TrialSeed>) -> Result<ProblemInstance> {
    prior.validate()?;
    workers.validate()?;
    let seed = seed.into();
    let n = prior.n;
    let qualities = match prior.kind {
        PriorKind::Gaussian { mean, std } => {
            let mut rng = seed.stream(Purpose::Qualities);
            (0..n)
                .map(|_| mean + std * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
        PriorKind::EquallySpaced { lo, hi } => {
            let step = (hi - lo) / (n - 1) as f64;
            let mut x: Vec<f64> = (0..n).map(|k| if k + 1 == n { hi } else { lo + k as f64 * step }).collect();
            x.shuffle(&mut seed.stream(Purpose::Labels));
            x
        }
        PriorKind::Unknown => unreachable!("rejected by validate"),
    };
    ProblemInstance::from_qualities(qualities, *workers, seed)
}

impl ProblemInstance {
    /// Builds an instance with fixed qualities.
    pub fn from_qualities(qualities: Vec<f64>, workers: WorkerModel, seed: impl Into<TrialSeed>) -> Result<Self> {
        if qualities.is_empty() {
            return Err(Error::InvalidInstance("no objects".into()));
        }
        if qualities.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInstance("qualities must be finite".into()));
        }
        workers.validate()?;
        let seed = seed.into();
        let best = argmax_lowest(&qualities);
        Ok(ProblemInstance {
            qualities,
            best,
            workers,
            biases: Vec::new(),
            variances: Vec::new(),
            load: Vec::new(),
            used: HashSet::new(),
            bias_rng: seed.stream(Purpose::Biases),
            variance_rng: seed.stream(Purpose::Variances),
        })
    }

    pub fn n(&self) -> usize {
        self.qualities.len()
    }

    pub fn qualities(&self) -> &[f64] {
        &self.qualities
    }

    /// True winner, lowest index among tied maxima.
    pub fn best(&self) -> usize {
        self.best
    }

    /// The two truly best objects, best first.
    pub fn top_two(&self) -> (usize, usize) {
        let second = (0..self.n())
            .filter(|&i| i != self.best)
            .fold(None::<usize>, |acc, i| match acc {
                Some(j) if self.qualities[j] >= self.qualities[i] => Some(j),
                _ => Some(i),
            })
            .expect("at least two objects");
        (self.best, second)
    }

    pub fn workers(&self) -> &WorkerModel {
        &self.workers
    }

    pub fn enrolled(&self) -> usize {
        self.biases.len()
    }

    pub fn bias(&self, worker: usize) -> f64 {
        self.biases[worker]
    }

    pub fn variance(&self, worker: usize) -> f64 {
        self.variances[worker]
    }

    pub fn remaining_capacity(&self, worker: usize) -> usize {
        self.workers.o_max - self.load[worker]
    }

    /// Returns `x_i + b_w + n`, `n ~ N(0, v_w)`. Records the pair and the
    /// worker's load but does not log the answer.
    pub fn elicit<R: Rng + ?Sized>(&mut self, object: usize, worker: usize, rng: &mut R) -> Result<f64> {
        if object >= self.n() {
            return Err(Error::InvalidInput(format!("object {object} out of range")));
        }
        if worker >= self.enrolled() {
            return Err(Error::InvalidInput(format!("worker {worker} is not enrolled")));
        }
        if self.load[worker] >= self.workers.o_max {
            return Err(Error::WorkerExhausted { worker, limit: self.workers.o_max });
        }
        if !self.used.insert((object, worker)) {
            return Err(Error::DegenerateAllocation { object, worker });
        }
        self.load[worker] += 1;
        let z: f64 = rng.sample(StandardNormal);
        Ok(self.qualities[object] + self.biases[worker] + self.variances[worker].sqrt() * z)
    }

    /// A noisy latent evaluation that does not count against capacity or
    /// pair uniqueness. Used by comparison-based baselines.
    pub fn latent_score<R: Rng + ?Sized>(&self, object: usize, worker: usize, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.qualities[object] + self.biases[worker] + self.variances[worker].sqrt() * z
    }
}

impl WorkerSource for ProblemInstance {
    fn enroll(&mut self) -> Result<usize> {
        if let WorkerSupply::Finite(cap) = self.workers.supply {
            if self.biases.len() >= cap {
                return Err(Error::SupplyExhausted { available: cap });
            }
        }
        let bias = match self.workers.bias {
            BiasPrior::Zero => 0.0,
            BiasPrior::Gaussian { mean, std } => mean + std * self.bias_rng.sample::<f64, _>(StandardNormal),
        };
        let s2 = self.workers.noise_std * self.workers.noise_std;
        let eps = self.workers.variance_spread;
        let variance = if eps > 0.0 {
            self.variance_rng.random_range((1.0 - eps) * s2..=(1.0 + eps) * s2)
        } else {
            s2
        };
        self.biases.push(bias);
        self.variances.push(variance);
        self.load.push(0);
        Ok(self.biases.len() - 1)
    }
}

/// One collected answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Answer {
    pub object: usize,
    pub worker: usize,
    pub round: usize,
    pub raw: f64,
    /// The value the estimator sees: `raw` or its quantized representative.
    pub reported: f64,
}

/// Every answer collected during a trial, in arrival order.
#[derive(Debug, Clone, Default)]
pub struct AnswerLog {
    n_objects: usize,
    n_workers: usize,
    entries: Vec<Answer>,
    pairs: HashSet<(usize, usize)>,
}

impl AnswerLog {
    pub fn new(n_objects: usize) -> Self {
        AnswerLog { n_objects, ..Default::default() }
    }

    pub fn push(&mut self, answer: Answer) -> Result<()> {
        if answer.object >= self.n_objects {
            return Err(Error::InvalidInput(format!("object {} out of range", answer.object)));
        }
        if !self.pairs.insert((answer.object, answer.worker)) {
            return Err(Error::DegenerateAllocation { object: answer.object, worker: answer.worker });
        }
        self.n_workers = self.n_workers.max(answer.worker + 1);
        self.entries.push(answer);
        Ok(())
    }

    pub fn entries(&self) -> &[Answer] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_objects(&self) -> usize {
        self.n_objects
    }

    pub fn n_workers(&self) -> usize {
        self.n_workers
    }

    /// Evaluations received by each object (`M_i`).
    pub fn object_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_objects];
        for a in &self.entries {
            counts[a.object] += 1;
        }
        counts
    }

    /// `M x N` object allocation matrix.
    pub fn gamma_x(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.len(), self.n_objects);
        for (row, a) in self.entries.iter().enumerate() {
            g[(row, a.object)] = 1.0;
        }
        g
    }

    /// `M x W` worker allocation matrix.
    pub fn gamma_b(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.len(), self.n_workers);
        for (row, a) in self.entries.iter().enumerate() {
            g[(row, a.worker)] = 1.0;
        }
        g
    }
}

/// Index of the largest value, lowest index on ties. NaN never wins.
pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] || values[best].is_nan() {
            best = i;
        }
    }
    best
}
