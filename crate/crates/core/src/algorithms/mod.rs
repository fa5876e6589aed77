//! Selection algorithms built from the posterior, fitness and policy
//! pieces, plus the non-adaptive and comparison-based baselines.
//!
//! | variant | fitness | contestants | budget |
//! |---|---|---|---|
//! | `Gke` | exact | kept | unbounded |
//! | `Gka` | pairwise | kept | unbounded |
//! | `Gra` | pairwise | eliminated | unbounded |
//! | `Bgka` | pairwise | kept | bounded |
//! | `Bgra` | pairwise | eliminated | bounded |

mod engine;
mod majority;
mod tournament;

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fitness::ExactMethod;
use crate::model::{BiasPrior, ProblemInstance};
use crate::policy::{Batch, PolicyConfig, StopReason};
use crate::posterior::PriorSpec;
use crate::quantizer::QuantizerSpec;
use crate::seed::TrialSeed;

pub use majority::run_majority_comparison;
pub use tournament::run_tournament;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Gke,
    Gka,
    Gra,
    Bgka,
    Bgra,
    /// Every object receives `per_object` evaluations in a single round.
    Uniform { per_object: usize },
    /// Knows the true top two after the opening round.
    GenieAided,
    /// Staged contests between random groups of `group_size` objects.
    Tournament { group_size: usize },
    /// Two objects, `workers` pairwise votes.
    MajorityComparison { workers: usize },
}

impl Variant {
    pub fn is_bounded(&self) -> bool {
        matches!(self, Variant::Bgka | Variant::Bgra)
    }

    pub fn eliminates(&self) -> bool {
        matches!(self, Variant::Gra | Variant::Bgra)
    }

    pub fn uses_exact_fitness(&self) -> bool {
        matches!(self, Variant::Gke)
    }

    /// Whether the variant reads the threshold sweep.
    pub fn uses_threshold(&self) -> bool {
        !matches!(self, Variant::Uniform { .. } | Variant::MajorityComparison { .. })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Gke => write!(f, "gke"),
            Variant::Gka => write!(f, "gka"),
            Variant::Gra => write!(f, "gra"),
            Variant::Bgka => write!(f, "bgka"),
            Variant::Bgra => write!(f, "bgra"),
            Variant::Uniform { per_object } => write!(f, "uniform-{per_object}"),
            Variant::GenieAided => write!(f, "genie"),
            Variant::Tournament { group_size } => write!(f, "t-{group_size}"),
            Variant::MajorityComparison { workers } => write!(f, "majority-{workers}"),
        }
    }
}

/// How the estimator treats worker bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BiasMode {
    /// Workers are assumed unbiased.
    #[default]
    None,
    /// Biases are estimated jointly with qualities using the workers' prior.
    Estimate,
    /// Biases exist but the estimator treats answers as unbiased.
    Ignore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmSpec {
    pub variant: Variant,
    pub policy: PolicyConfig,
    pub bias_mode: BiasMode,
    pub quantizer: Option<QuantizerSpec>,
    /// Quality prior assumed by the estimator; the bias part is filled in
    /// from `bias_mode` at run time.
    pub quality_prior: PriorSpec,
    pub exact_method: ExactMethod,
}

impl AlgorithmSpec {
    /// Flat quality prior, unbiased estimator, unquantized answers.
    pub fn new(variant: Variant, policy: PolicyConfig) -> Self {
        AlgorithmSpec {
            variant,
            policy,
            bias_mode: BiasMode::None,
            quantizer: None,
            quality_prior: PriorSpec::unknown_quality(),
            exact_method: ExactMethod::DiagonalQuadrature,
        }
    }

    pub fn with_quality_prior(mut self, mean: f64, std: f64) -> Self {
        self.quality_prior = PriorSpec { quality_mean: mean, quality_std: std, ..self.quality_prior };
        self
    }

    pub fn with_bias_mode(mut self, mode: BiasMode) -> Self {
        self.bias_mode = mode;
        self
    }

    pub fn with_quantizer(mut self, q: Option<QuantizerSpec>) -> Self {
        self.quantizer = q;
        self
    }

    pub fn with_exact_method(mut self, method: ExactMethod) -> Self {
        self.exact_method = method;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self.variant {
            Variant::MajorityComparison { workers } => {
                if n != 2 {
                    return Err(Error::InvalidConfig(format!("majority comparison needs 2 objects, got {n}")));
                }
                if workers % 2 == 0 {
                    return Err(Error::InvalidConfig(format!("majority comparison needs an odd worker count, got {workers}")));
                }
                return Ok(());
            }
            Variant::Uniform { per_object } => {
                if per_object == 0 {
                    return Err(Error::InvalidConfig("uniform allocation needs at least one evaluation per object".into()));
                }
                if self.policy.o_max == 0 {
                    return Err(Error::InvalidConfig("o_max must be positive".into()));
                }
                return Ok(());
            }
            Variant::Tournament { group_size } if group_size < 2 => {
                return Err(Error::InvalidConfig(format!("tournament groups need at least 2 objects, got {group_size}")));
            }
            v if v.is_bounded() && self.policy.budget.is_none() => {
                return Err(Error::InvalidConfig(format!("{v} needs a budget")));
            }
            _ => {}
        }
        let unbounded = self.policy.budget.is_none() || matches!(self.variant, Variant::Tournament { .. });
        if unbounded && self.policy.accuracy_threshold <= 0.0 {
            return Err(Error::InvalidConfig(format!("{} without a budget needs a positive threshold", self.variant)));
        }
        self.policy.validate(n)
    }

    /// Estimator prior for a given world.
    pub(crate) fn estimator_prior(&self, inst: &ProblemInstance) -> PriorSpec {
        match (self.bias_mode, inst.workers().bias) {
            (BiasMode::Estimate, BiasPrior::Gaussian { mean, std }) => self.quality_prior.with_bias(mean, std),
            _ => self.quality_prior.with_bias(0.0, 0.0),
        }
    }
}

/// State of one round, as seen by the algorithm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Fitness per object; `None` marks objects outside the contestant set.
    pub phi: Vec<Option<f64>>,
    pub contestants: Vec<usize>,
    pub allocated: Vec<usize>,
    pub batches: Vec<Batch>,
    /// Evaluations spent after this round.
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub winner: usize,
    pub correct: bool,
    pub evaluations: usize,
    pub rounds: usize,
    pub stop_reason: StopReason,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<RoundRecord>>,
}

/// An aborted trial with the rounds completed before the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub error: Error,
    pub trace: Vec<RoundRecord>,
}

impl fmt::Display for TrialFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} rounds)", self.error, self.trace.len())
    }
}

impl std::error::Error for TrialFailure {}

impl From<Error> for TrialFailure {
    fn from(error: Error) -> Self {
        TrialFailure { error, trace: Vec::new() }
    }
}

/// Runs one trial of `spec` against `inst`. With `record` set, the result
/// carries a per-round trace.
pub fn run_trial(
    spec: &AlgorithmSpec,
    inst: &mut ProblemInstance,
    seed: TrialSeed,
    record: bool,
) -> std::result::Result<TrialResult, TrialFailure> {
    spec.validate(inst.n())?;
    match spec.variant {
        Variant::MajorityComparison { workers } => Ok(run_majority_comparison(inst, workers, seed)?),
        Variant::Tournament { group_size } => run_tournament(inst, group_size, spec, seed, record),
        Variant::Uniform { per_object } => engine::run_uniform(spec, inst, per_object, seed, record),
        _ => engine::run_greedy(spec, inst, seed, record),
    }
}

/// The genie-aided reference: after one evaluation per object it only
/// spends evaluations on the two truly best objects.
pub fn run_genie_aided(
    inst: &mut ProblemInstance,
    policy: PolicyConfig,
    seed: TrialSeed,
    record: bool,
) -> std::result::Result<TrialResult, TrialFailure> {
    run_trial(&AlgorithmSpec::new(Variant::GenieAided, policy), inst, seed, record)
}
