//! The round loop shared by the greedy variants.

use rand_chacha::ChaCha8Rng;

use super::{AlgorithmSpec, RoundRecord, TrialFailure, TrialResult, Variant};
use crate::error::{Error, Result};
use crate::fitness::{apply_elimination, pi_approx, pi_exact, FitnessState};
use crate::model::{Answer, ProblemInstance};
use crate::policy::{
    allocate, allocate_all, declare_winner, select_workers, should_terminate, Decision, StopReason,
};
use crate::posterior::{Posterior, QualityMarginal};
use crate::seed::{Purpose, TrialSeed};

/// Posterior, random streams and bookkeeping for one trial.
pub(super) struct Engine<'a> {
    spec: &'a AlgorithmSpec,
    posterior: Posterior,
    noise: ChaCha8Rng,
    sampling: ChaCha8Rng,
    pub spent: usize,
    pub rounds: usize,
    trace: Option<Vec<RoundRecord>>,
}

impl<'a> Engine<'a> {
    pub fn new(spec: &'a AlgorithmSpec, inst: &ProblemInstance, seed: TrialSeed, record: bool) -> Result<Self> {
        let sigma = inst.workers().noise_std;
        let posterior = Posterior::new(spec.estimator_prior(inst), inst.n(), sigma * sigma)?;
        Ok(Engine {
            spec,
            posterior,
            noise: seed.stream(Purpose::Noise),
            sampling: seed.stream(Purpose::Sampling),
            spent: 0,
            rounds: 0,
            trace: record.then(Vec::new),
        })
    }

    pub fn marginal(&self) -> Result<QualityMarginal> {
        self.posterior.quality_marginal()
    }

    /// Fitness values of `contestants` under the current posterior.
    pub fn fitness(&self, m: &QualityMarginal, contestants: &[usize], exact: bool) -> Result<Vec<f64>> {
        if exact {
            Ok(pi_exact(m, contestants, self.spec.exact_method)?.values)
        } else {
            pi_approx(m, contestants)
        }
    }

    /// Collects one answer for each of `objects` from fresh workers and
    /// folds them into the posterior. Returns the worker batches.
    pub fn evaluate(&mut self, inst: &mut ProblemInstance, objects: &[usize]) -> Result<Vec<crate::policy::Batch>> {
        let batches = select_workers(objects, self.spec.policy.o_max, inst, &mut self.sampling)?;
        let mut answers = Vec::with_capacity(objects.len());
        for b in &batches {
            for &object in &b.objects {
                let raw = inst.elicit(object, b.worker, &mut self.noise)?;
                let reported = match &self.spec.quantizer {
                    Some(q) => q.quantize(raw)?,
                    None => raw,
                };
                answers.push(Answer { object, worker: b.worker, round: self.rounds, raw, reported });
            }
        }
        self.posterior.update(&answers)?;
        self.spent += answers.len();
        Ok(batches)
    }

    pub fn record(&mut self, phi: &[f64], contestants: &[usize], allocated: Vec<usize>, batches: Vec<crate::policy::Batch>) {
        if let Some(trace) = &mut self.trace {
            trace.push(RoundRecord {
                round: self.rounds,
                phi: phi.iter().map(|v| v.is_finite().then_some(*v)).collect(),
                contestants: contestants.to_vec(),
                allocated,
                batches,
                evaluations: self.spent,
            });
        }
    }

    pub fn recording(&self) -> bool {
        self.trace.is_some()
    }

    pub fn finish(self, inst: &ProblemInstance, winner: usize, stop_reason: StopReason) -> TrialResult {
        TrialResult {
            winner,
            correct: winner == inst.best(),
            evaluations: self.spent,
            rounds: self.rounds,
            stop_reason,
            trace: self.trace,
        }
    }

    pub fn fail(self, error: Error) -> TrialFailure {
        TrialFailure { error, trace: self.trace.unwrap_or_default() }
    }
}

/// GKE, GKA, GRA, their bounded forms and the genie-aided reference.
pub(super) fn run_greedy(
    spec: &AlgorithmSpec,
    inst: &mut ProblemInstance,
    seed: TrialSeed,
    record: bool,
) -> std::result::Result<TrialResult, TrialFailure> {
    let mut eng = Engine::new(spec, inst, seed, record)?;
    match greedy_loop(&mut eng, spec, inst) {
        Ok((winner, reason)) => Ok(eng.finish(inst, winner, reason)),
        Err(e) => Err(eng.fail(e)),
    }
}

fn greedy_loop(eng: &mut Engine<'_>, spec: &AlgorithmSpec, inst: &mut ProblemInstance) -> Result<(usize, StopReason)> {
    let n = inst.n();
    let policy = &spec.policy;
    let genie = spec.variant == Variant::GenieAided;
    let mut contestants: Vec<usize> = (0..n).collect();
    // Before any answer every object is equally likely to be best.
    let mut phi = vec![1.0 / n as f64; n];
    loop {
        if eng.rounds > 0 {
            if genie && eng.rounds == 1 {
                let (a, b) = inst.top_two();
                contestants = vec![a.min(b), a.max(b)];
            }
            let m = eng.marginal()?;
            let values = eng.fitness(&m, &contestants, spec.variant.uses_exact_fitness())?;
            let state = if spec.variant.eliminates() {
                apply_elimination(&values, &contestants, policy.elimination_threshold)
            } else {
                FitnessState::keep_all(&values, &contestants)
            };
            phi = state.phi;
            contestants = state.contestants;
        }
        if let Decision::Stop(reason) = should_terminate(&phi, &contestants, eng.spent, policy) {
            eng.record(&phi, &contestants, Vec::new(), Vec::new());
            return Ok((declare_winner(&phi), reason));
        }
        let plan = if eng.rounds == 0 {
            allocate_all(&phi, eng.spent, policy)
        } else {
            allocate(&phi, eng.spent, policy)
        };
        let objects: Vec<usize> = (0..n).filter(|&i| plan[i] > 0).collect();
        if objects.is_empty() {
            eng.record(&phi, &contestants, Vec::new(), Vec::new());
            return Ok((declare_winner(&phi), StopReason::Stall));
        }
        let batches = eng.evaluate(inst, &objects)?;
        eng.record(&phi, &contestants, objects, batches);
        eng.rounds += 1;
    }
}

/// Non-adaptive baseline: `per_object` passes over all objects, each pass
/// by fresh workers, counted as one round.
pub(super) fn run_uniform(
    spec: &AlgorithmSpec,
    inst: &mut ProblemInstance,
    per_object: usize,
    seed: TrialSeed,
    record: bool,
) -> std::result::Result<TrialResult, TrialFailure> {
    let mut eng = Engine::new(spec, inst, seed, record)?;
    let n = inst.n();
    let all: Vec<usize> = (0..n).collect();
    let outcome = (|| {
        let mut batches = Vec::new();
        for _ in 0..per_object {
            batches.extend(eng.evaluate(inst, &all)?);
        }
        let m = eng.marginal()?;
        let state = FitnessState::keep_all(&pi_approx(&m, &all)?, &all);
        if eng.recording() {
            let allocated = all.iter().flat_map(|&i| std::iter::repeat_n(i, per_object)).collect();
            eng.record(&state.phi, &all, allocated, batches);
        }
        Ok(declare_winner(&state.phi))
    })();
    eng.rounds = 1;
    match outcome {
        Ok(winner) => Ok(eng.finish(inst, winner, StopReason::Budget)),
        Err(e) => Err(eng.fail(e)),
    }
}
