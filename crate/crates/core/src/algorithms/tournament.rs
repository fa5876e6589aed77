//! Staged group contests with a shared posterior.

use rand::seq::SliceRandom;

use super::engine::Engine;
use super::{AlgorithmSpec, TrialFailure, TrialResult};
use crate::error::Result;
use crate::fitness::{pi_approx, FitnessState};
use crate::model::ProblemInstance;
use crate::policy::{allocate, allocate_all, declare_winner, should_terminate, Decision, PolicyConfig, StopReason};
use crate::seed::{Purpose, TrialSeed};

/// Survivors are split at random into groups of `group_size` (the last may
/// be smaller) and each group runs an unbounded pairwise-fitness contest;
/// group winners advance with all their answers. Groups of one advance
/// unopposed. All groups of a stage share rounds and the posterior.
pub fn run_tournament(
    inst: &mut ProblemInstance,
    group_size: usize,
    spec: &AlgorithmSpec,
    seed: TrialSeed,
    record: bool,
) -> std::result::Result<TrialResult, TrialFailure> {
    let mut eng = Engine::new(spec, inst, seed, record)?;
    match stages(&mut eng, inst, group_size, spec, seed) {
        Ok(winner) => Ok(eng.finish(inst, winner, StopReason::Singleton)),
        Err(e) => Err(eng.fail(e)),
    }
}

struct Group {
    members: Vec<usize>,
    winner: Option<usize>,
}

fn stages(eng: &mut Engine<'_>, inst: &mut ProblemInstance, group_size: usize, spec: &AlgorithmSpec, seed: TrialSeed) -> Result<usize> {
    let n = inst.n();
    let inner = PolicyConfig { budget: None, ..spec.policy };
    let mut partition = seed.stream(Purpose::Partition);
    let mut survivors: Vec<usize> = (0..n).collect();
    let mut phi = vec![1.0 / n as f64; n];

    if eng.rounds == 0 {
        let plan = allocate_all(&phi, eng.spent, &inner);
        let objects: Vec<usize> = (0..n).filter(|&i| plan[i] > 0).collect();
        let batches = eng.evaluate(inst, &objects)?;
        eng.record(&phi, &survivors, objects, batches);
        eng.rounds += 1;
    }

    while survivors.len() > 1 {
        let mut order = survivors.clone();
        order.shuffle(&mut partition);
        let mut groups: Vec<Group> = order
            .chunks(group_size)
            .map(|c| {
                let mut members = c.to_vec();
                members.sort_unstable();
                Group { members, winner: None }
            })
            .collect();

        loop {
            let m = eng.marginal()?;
            phi.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
            let mut objects = Vec::new();
            for g in groups.iter_mut().filter(|g| g.winner.is_none()) {
                if g.members.len() == 1 {
                    g.winner = Some(g.members[0]);
                    continue;
                }
                let state = FitnessState::keep_all(&pi_approx(&m, &g.members)?, &g.members);
                for &i in &g.members {
                    phi[i] = state.phi[i];
                }
                if let Decision::Stop(_) = should_terminate(&state.phi, &g.members, eng.spent, &inner) {
                    g.winner = Some(declare_winner(&state.phi));
                    continue;
                }
                let plan = allocate(&state.phi, eng.spent, &inner);
                let chosen: Vec<usize> = g.members.iter().copied().filter(|&i| plan[i] > 0).collect();
                if chosen.is_empty() {
                    g.winner = Some(declare_winner(&state.phi));
                } else {
                    objects.extend(chosen);
                }
            }
            if objects.is_empty() {
                eng.record(&phi, &survivors, Vec::new(), Vec::new());
                break;
            }
            objects.sort_unstable();
            let batches = eng.evaluate(inst, &objects)?;
            eng.record(&phi, &survivors, objects, batches);
            eng.rounds += 1;
        }
        survivors = groups.iter().map(|g| g.winner.expect("every group finished")).collect();
        survivors.sort_unstable();
    }
    Ok(survivors[0])
}
