//! Two-object majority vote over pairwise comparisons.

use super::TrialResult;
use crate::error::{Error, Result};
use crate::model::{ProblemInstance, WorkerSource};
use crate::policy::StopReason;
use crate::seed::{Purpose, TrialSeed};

/// Each of `workers` fresh workers scores both objects once, privately,
/// and votes for the higher score. The majority decides. A vote therefore
/// errs when the difference of two noisy evaluations has the wrong sign,
/// which for a gap `Δ` happens with probability `½ erfc(Δ / 2σ)`.
pub fn run_majority_comparison(inst: &mut ProblemInstance, workers: usize, seed: TrialSeed) -> Result<TrialResult> {
    if inst.n() != 2 {
        return Err(Error::InvalidConfig(format!("majority comparison needs 2 objects, got {}", inst.n())));
    }
    if workers.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("majority comparison needs an odd worker count, got {workers}")));
    }
    let mut rng = seed.stream(Purpose::Noise);
    let mut second = 0;
    for _ in 0..workers {
        let w = inst.enroll()?;
        let a = inst.latent_score(0, w, &mut rng);
        let b = inst.latent_score(1, w, &mut rng);
        if b > a {
            second += 1;
        }
    }
    let winner = usize::from(2 * second > workers);
    Ok(TrialResult {
        winner,
        correct: winner == inst.best(),
        evaluations: 2 * workers,
        rounds: 1,
        stop_reason: StopReason::Budget,
        trace: None,
    })
}
