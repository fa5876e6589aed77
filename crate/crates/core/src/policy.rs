//! Allocation, worker batching and termination.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::WorkerSource;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    /// Objects whose fitness exceeds this value receive an evaluation.
    pub accuracy_threshold: f64,
    /// Contestants whose fitness falls to or below this value are dropped.
    pub elimination_threshold: f64,
    /// Total evaluation budget; `None` is unbounded.
    pub budget: Option<usize>,
    /// Maximum evaluations per worker.
    pub o_max: usize,
}

impl PolicyConfig {
    pub fn unbounded(threshold: f64, o_max: usize) -> Self {
        PolicyConfig { accuracy_threshold: threshold, elimination_threshold: threshold, budget: None, o_max }
    }

    pub fn bounded(threshold: f64, budget: usize, o_max: usize) -> Self {
        PolicyConfig { budget: Some(budget), ..Self::unbounded(threshold, o_max) }
    }

    /// Normalised budget `M_max / N`.
    pub fn budget_per_object(&self, n: usize) -> Option<f64> {
        self.budget.map(|b| b as f64 / n as f64)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.accuracy_threshold) {
            return Err(Error::InvalidConfig(format!(
                "accuracy threshold must lie in [0, 1), got {}",
                self.accuracy_threshold
            )));
        }
        if !(0.0..1.0).contains(&self.elimination_threshold) {
            return Err(Error::InvalidConfig(format!(
                "elimination threshold must lie in [0, 1), got {}",
                self.elimination_threshold
            )));
        }
        if self.elimination_threshold > self.accuracy_threshold {
            return Err(Error::InvalidConfig("elimination threshold exceeds accuracy threshold".into()));
        }
        if self.o_max == 0 {
            return Err(Error::InvalidConfig("o_max must be positive".into()));
        }
        if let Some(b) = self.budget {
            if b < n {
                return Err(Error::InvalidConfig(format!("budget {b} is below the object count {n}")));
            }
        }
        Ok(())
    }
}

/// Evaluations per object for the coming round, each 0 or 1.
///
/// Objects with fitness above the accuracy threshold are selected. With a
/// bounded budget and more candidates than remaining evaluations, only the
/// candidates with the largest fitness are kept, lowest index first on ties.
pub fn allocate(phi: &[f64], spent: usize, cfg: &PolicyConfig) -> Vec<usize> {
    let candidates = (0..phi.len()).filter(|&i| passes(phi[i], cfg.accuracy_threshold));
    truncate_to_budget(phi, candidates.collect(), spent, cfg)
}

/// Allocation for the opening round: every contestant is selected
/// regardless of threshold, subject to the budget.
pub fn allocate_all(phi: &[f64], spent: usize, cfg: &PolicyConfig) -> Vec<usize> {
    let candidates = (0..phi.len()).filter(|&i| phi[i].is_finite());
    truncate_to_budget(phi, candidates.collect(), spent, cfg)
}

/// Like [`allocate`], but ties in the budget cut are broken uniformly at
/// random instead of by index.
pub fn allocate_random_ties<R: Rng + ?Sized>(phi: &[f64], spent: usize, cfg: &PolicyConfig, rng: &mut R) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..phi.len())
        .filter(|&i| passes(phi[i], cfg.accuracy_threshold))
        .collect();
    candidates.shuffle(rng);
    let mut counts = vec![0; phi.len()];
    let residual = cfg.budget.map_or(usize::MAX, |b| b.saturating_sub(spent));
    // Stable sort keeps the shuffled order among equal fitness values.
    candidates.sort_by(|&a, &b| phi[b].total_cmp(&phi[a]));
    for &i in candidates.iter().take(residual) {
        counts[i] = 1;
    }
    counts
}

/// Whether a fitness value clears the accuracy threshold. A zero threshold
/// admits every contestant, including those whose fitness rounds to 0.
fn passes(phi: f64, threshold: f64) -> bool {
    phi.is_finite() && (phi > threshold || threshold <= 0.0)
}

fn truncate_to_budget(phi: &[f64], mut candidates: Vec<usize>, spent: usize, cfg: &PolicyConfig) -> Vec<usize> {
    let mut counts = vec![0; phi.len()];
    let residual = cfg.budget.map_or(usize::MAX, |b| b.saturating_sub(spent));
    if candidates.len() > residual {
        candidates.sort_by(|&a, &b| phi[b].total_cmp(&phi[a]).then(a.cmp(&b)));
        candidates.truncate(residual);
    }
    for i in candidates {
        counts[i] = 1;
    }
    counts
}

/// One worker and the objects it evaluates this round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Batch {
    pub worker: usize,
    pub objects: Vec<usize>,
}

/// Splits `objects` among `⌈n / o_max⌉` fresh workers in near-equal random
/// batches. Larger batches come first.
pub fn select_workers<S, R>(objects: &[usize], o_max: usize, source: &mut S, rng: &mut R) -> Result<Vec<Batch>>
where
    S: WorkerSource + ?Sized,
    R: Rng + ?Sized,
{
    if objects.is_empty() {
        return Ok(Vec::new());
    }
    let n = objects.len();
    let workers = n.div_ceil(o_max);
    let mut shuffled = objects.to_vec();
    if workers > 1 {
        shuffled.shuffle(rng);
    }
    let base = n / workers;
    let extra = n % workers;
    let mut batches = Vec::with_capacity(workers);
    let mut start = 0;
    for k in 0..workers {
        let size = base + usize::from(k < extra);
        let worker = source.enroll()?;
        batches.push(Batch { worker, objects: shuffled[start..start + size].to_vec() });
        start += size;
    }
    Ok(batches)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    Singleton,
    Accuracy,
    /// Nothing passed the accuracy threshold while several contestants
    /// remained; the current leader is declared.
    Stall,
}

impl StopReason {
    pub const ALL: [StopReason; 4] = [StopReason::Budget, StopReason::Singleton, StopReason::Accuracy, StopReason::Stall];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop(StopReason),
}

/// Checks, in order, budget exhaustion, a single remaining contestant and
/// a single object above the accuracy threshold.
pub fn should_terminate(phi: &[f64], contestants: &[usize], spent: usize, cfg: &PolicyConfig) -> Decision {
    if cfg.budget.is_some_and(|b| spent >= b) {
        return Decision::Stop(StopReason::Budget);
    }
    if contestants.len() == 1 {
        return Decision::Stop(StopReason::Singleton);
    }
    let passing = phi.iter().filter(|&&v| passes(v, cfg.accuracy_threshold)).count();
    if passing == 1 {
        return Decision::Stop(StopReason::Accuracy);
    }
    Decision::Continue
}

/// Index of the largest fitness, lowest index on ties.
pub fn declare_winner(phi: &[f64]) -> usize {
    let mut best: Option<usize> = None;
    for (i, &v) in phi.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| v > phi[b]) {
            best = Some(i);
        }
    }
    best.expect("at least one contestant must have finite fitness")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const NEG: f64 = f64::NEG_INFINITY;

    struct Counter(usize);

    impl WorkerSource for Counter {
        fn enroll(&mut self) -> Result<usize> {
            self.0 += 1;
            Ok(self.0 - 1)
        }
    }

    struct Limited(usize);

    impl WorkerSource for Limited {
        fn enroll(&mut self) -> Result<usize> {
            if self.0 == 0 {
                return Err(Error::SupplyExhausted { available: 1 });
            }
            self.0 -= 1;
            Ok(0)
        }
    }

    #[test]
    fn unbounded_indicator() {
        let cfg = PolicyConfig::unbounded(0.5, 16);
        assert_eq!(allocate(&[0.6, 0.3, NEG], 0, &cfg), vec![1, 0, 0]);
        assert_eq!(allocate(&[0.5, 0.3, 0.2], 0, &cfg), vec![0, 0, 0]);
        let open = PolicyConfig::unbounded(0.0, 16);
        assert_eq!(allocate(&[0.0, 1.0, NEG], 0, &open), vec![1, 1, 0]);
    }

    #[test]
    fn bounded_top_b() {
        let cfg = PolicyConfig::bounded(0.5, 10, 16);
        assert_eq!(allocate(&[0.6, 0.55, 0.52], 8, &cfg), vec![1, 1, 0]);
        assert_eq!(allocate(&[0.6, 0.55, 0.52], 10, &cfg), vec![0, 0, 0]);
        assert_eq!(allocate(&[0.6, 0.6, 0.6], 9, &cfg), vec![1, 0, 0]);
    }

    #[test]
    fn opening_round_takes_everyone() {
        let cfg = PolicyConfig::bounded(0.9, 3, 16);
        assert_eq!(allocate_all(&[0.25; 3], 0, &cfg), vec![1, 1, 1]);
        assert_eq!(allocate_all(&[0.25, NEG, 0.25], 0, &cfg), vec![1, 0, 1]);
    }

    #[test]
    fn random_ties_respect_budget() {
        let cfg = PolicyConfig::bounded(0.1, 4, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut hits = [0; 3];
        for _ in 0..200 {
            let m = allocate_random_ties(&[0.3, 0.3, 0.3], 3, &cfg, &mut rng);
            assert_eq!(m.iter().sum::<usize>(), 1);
            for (h, v) in hits.iter_mut().zip(m) {
                *h += v;
            }
        }
        assert!(hits.iter().all(|&h| h > 30), "{hits:?}");
    }

    #[test]
    fn batching() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let objs: Vec<usize> = (0..10).collect();
        let b = select_workers(&objs, 16, &mut Counter(0), &mut rng).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].objects, objs);

        let objs: Vec<usize> = (0..256).collect();
        let b = select_workers(&objs, 16, &mut Counter(0), &mut rng).unwrap();
        assert_eq!(b.len(), 16);
        assert!(b.iter().all(|x| x.objects.len() == 16));

        let b = select_workers(&[0, 1, 2, 3, 4], 2, &mut Counter(0), &mut rng).unwrap();
        let sizes: Vec<usize> = b.iter().map(|x| x.objects.len()).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
        let mut all: Vec<usize> = b.iter().flat_map(|x| x.objects.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        let ids: Vec<usize> = b.iter().map(|x| x.worker).collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn batching_supply_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = select_workers(&[0, 1, 2], 2, &mut Limited(1), &mut rng).unwrap_err();
        assert_eq!(err, Error::SupplyExhausted { available: 1 });
    }

    #[test]
    fn termination_order() {
        let cfg = PolicyConfig::bounded(0.5, 16, 16);
        assert_eq!(should_terminate(&[0.6, 0.6], &[0, 1], 16, &cfg), Decision::Stop(StopReason::Budget));
        assert_eq!(should_terminate(&[NEG, 0.6], &[1], 3, &cfg), Decision::Stop(StopReason::Singleton));
        assert_eq!(should_terminate(&[0.97, 0.01, 0.01], &[0, 1, 2], 3, &cfg), Decision::Stop(StopReason::Accuracy));
        assert_eq!(should_terminate(&[0.6, 0.55, 0.1], &[0, 1, 2], 3, &cfg), Decision::Continue);
        assert_eq!(should_terminate(&[0.4, 0.3, 0.3], &[0, 1, 2], 3, &cfg), Decision::Continue);
    }

    #[test]
    fn winner() {
        assert_eq!(declare_winner(&[0.2, 0.7, 0.1]), 1);
        assert_eq!(declare_winner(&[0.5, 0.5]), 0);
        assert_eq!(declare_winner(&[NEG, 0.3, NEG]), 1);
    }

    #[test]
    #[should_panic]
    fn winner_needs_contestant() {
        declare_winner(&[NEG, NEG]);
    }

    #[test]
    fn config_validation() {
        assert!(PolicyConfig::bounded(0.1, 15, 4).validate(16).is_err());
        assert!(PolicyConfig::bounded(0.1, 16, 4).validate(16).is_ok());
        let mut c = PolicyConfig::unbounded(0.1, 4);
        c.elimination_threshold = 0.2;
        assert!(c.validate(4).is_err());
        assert!(PolicyConfig::unbounded(1.0, 4).validate(4).is_err());
    }
}
