//! Monte Carlo experiments: threshold sweeps over many independent trials,
//! aggregated into error probabilities and budgets with 95% intervals.

mod config;
pub mod presets;
pub mod stats;

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::algorithms::{run_trial, AlgorithmSpec, BiasMode, TrialFailure, TrialResult, Variant};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::fitness::ExactMethod;
use crate::model::{sample_instance, QualityPrior, WorkerModel};
use crate::policy::{PolicyConfig, StopReason};
use crate::quantizer::{lloyd_design, uniform_design, AnswerDensity, DensityKind, QuantizerSpec};
use crate::seed::TrialSeed;

pub use config::{parse_config, ConfigOverrides};
pub use stats::{wilson_interval, Curve, CurvePoint};

/// Exact CSV header of [`SweepResult::to_csv`].
pub const CSV_HEADER: &str =
    "pi_th,trials,p_e,p_e_ci95,m_bar_per_n,m_bar_ci95,rounds_mean,stop_budget,stop_singleton,stop_accuracy,stop_stall";

/// Quality distribution and noise level of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    /// `n` qualities evenly spaced over `[-1, 1]`; `gap_ratio` is the
    /// spacing divided by the noise standard deviation.
    EquallySpaced { n: usize, gap_ratio: f64 },
    /// Qualities `N(0, spread_ratio²)` with unit noise.
    Gaussian { n: usize, spread_ratio: f64 },
}

impl Scenario {
    pub fn n(&self) -> usize {
        match *self {
            Scenario::EquallySpaced { n, .. } | Scenario::Gaussian { n, .. } => n,
        }
    }

    pub fn quality_prior(&self) -> QualityPrior {
        match *self {
            Scenario::EquallySpaced { n, .. } => QualityPrior::equally_spaced(n, -1.0, 1.0),
            Scenario::Gaussian { n, spread_ratio } => QualityPrior::gaussian(n, 0.0, spread_ratio),
        }
    }

    pub fn noise_std(&self) -> f64 {
        match *self {
            Scenario::EquallySpaced { n, gap_ratio } => 2.0 / (n as f64 - 1.0) / gap_ratio,
            Scenario::Gaussian { .. } => 1.0,
        }
    }

    /// Prior assumed by the estimator: flat for evenly spaced qualities,
    /// the true prior for Gaussian ones.
    pub fn estimator_prior(&self) -> (f64, f64) {
        match *self {
            Scenario::EquallySpaced { .. } => (0.0, f64::INFINITY),
            Scenario::Gaussian { spread_ratio, .. } => (0.0, spread_ratio),
        }
    }

    /// Range covered by the uniform quantizer by default: the bulk of the
    /// quality distribution widened by two noise deviations.
    pub fn default_uniform_range(&self) -> (f64, f64) {
        let s = self.noise_std();
        match *self {
            Scenario::EquallySpaced { .. } => (-1.0 - 2.0 * s, 1.0 + 2.0 * s),
            Scenario::Gaussian { spread_ratio, .. } => (-3.0 * spread_ratio - 2.0 * s, 3.0 * spread_ratio + 2.0 * s),
        }
    }

    fn validate(&self) -> Result<()> {
        let (n, r) = match *self {
            Scenario::EquallySpaced { n, gap_ratio } => (n, gap_ratio),
            Scenario::Gaussian { n, spread_ratio } => (n, spread_ratio),
        };
        if n < 2 {
            return Err(Error::InvalidConfig(format!("scenario needs at least 2 objects, got {n}")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidConfig(format!("scenario ratio must be positive, got {r}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkerConfig {
    pub o_max: usize,
    /// Bias standard deviation in units of the noise deviation.
    pub bias_ratio: f64,
    pub bias_mean: f64,
    pub variance_spread: f64,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        WorkerConfig { o_max: 16, bias_ratio: 0.0, bias_mean: 0.0, variance_spread: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuantizerChoice {
    None,
    Uniform { levels: usize, range: Option<(f64, f64)> },
    Lloyd { levels: usize, density: DensityKind },
}

/// Parameter varied across the rows of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// Accuracy and elimination thresholds, set equal.
    Thresholds(Vec<f64>),
    /// Evaluations per object of the uniform baseline.
    PerObject(Vec<usize>),
    /// A single point for variants without a sweep parameter.
    Single,
}

impl Sweep {
    pub fn len(&self) -> usize {
        match self {
            Sweep::Thresholds(v) => v.len(),
            Sweep::PerObject(v) => v.len(),
            Sweep::Single => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub workers: WorkerConfig,
    pub variant: Variant,
    pub bias_mode: BiasMode,
    pub exact_method: ExactMethod,
    pub quantizer: QuantizerChoice,
    /// Normalised budget `M_max / N`.
    pub budget_per_object: Option<f64>,
    pub sweep: Sweep,
    pub trials: usize,
    pub master_seed: u64,
    pub output: Option<PathBuf>,
    pub execution: Execution,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, variant: Variant, sweep: Sweep) -> Self {
        ExperimentConfig {
            scenario,
            workers: WorkerConfig::default(),
            variant,
            bias_mode: BiasMode::None,
            exact_method: ExactMethod::DiagonalQuadrature,
            quantizer: QuantizerChoice::None,
            budget_per_object: None,
            sweep,
            trials: 1000,
            master_seed: 0,
            output: None,
            execution: Execution::Parallel,
        }
    }

    pub fn worker_model(&self) -> WorkerModel {
        let s = self.scenario.noise_std();
        WorkerModel::unbiased(s, self.workers.o_max)
            .with_bias(self.workers.bias_mean, self.workers.bias_ratio * s)
            .with_variance_spread(self.workers.variance_spread)
    }

    pub fn budget(&self) -> Option<usize> {
        self.budget_per_object.map(|k| (k * self.scenario.n() as f64).round() as usize)
    }

    /// Designs the configured quantizer. Lloyd designs use the answer
    /// distribution with bias and noise variances combined.
    pub fn design_quantizer(&self) -> Result<Option<QuantizerSpec>> {
        match self.quantizer {
            QuantizerChoice::None => Ok(None),
            QuantizerChoice::Uniform { levels, range } => {
                let (lo, hi) = range.unwrap_or_else(|| self.scenario.default_uniform_range());
                uniform_design(lo, hi, levels).map(Some)
            }
            QuantizerChoice::Lloyd { levels, density } => {
                let s = self.scenario.noise_std();
                let b = self.workers.bias_ratio * s;
                let d = AnswerDensity::for_scenario(density, &self.scenario.quality_prior(), (s * s + b * b).sqrt())?;
                let (spec, _) = lloyd_design(&d, levels, 1e-9 * s, 20_000)?;
                Ok(Some(spec))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        self.worker_model().validate().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        match (&self.sweep, self.variant) {
            (Sweep::PerObject(v), Variant::Uniform { .. }) if !v.is_empty() => {}
            (Sweep::Single, v) if !v.uses_threshold() => {}
            (Sweep::Thresholds(v), var) if var.uses_threshold() && !v.is_empty() => {
                if v.iter().any(|t| !(*t >= 0.0 && *t < 1.0)) {
                    return Err(Error::InvalidConfig("thresholds must lie in [0, 1)".into()));
                }
                if v.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(Error::InvalidConfig("thresholds must be strictly descending".into()));
                }
            }
            (s, v) => return Err(Error::InvalidConfig(format!("sweep {s:?} does not fit variant {v}"))),
        }
        if self.variant.is_bounded() && self.budget_per_object.is_none() {
            return Err(Error::InvalidConfig(format!("{} needs policy.k", self.variant)));
        }
        Ok(())
    }

    /// Algorithm for one sweep point.
    pub fn algorithm(&self, point: usize, quantizer: Option<QuantizerSpec>) -> AlgorithmSpec {
        let (variant, threshold) = match (&self.sweep, self.variant) {
            (Sweep::PerObject(m), Variant::Uniform { .. }) => (Variant::Uniform { per_object: m[point] }, 0.5),
            (Sweep::Thresholds(t), v) => (v, t[point]),
            (_, v) => (v, 0.5),
        };
        let policy = PolicyConfig {
            accuracy_threshold: threshold,
            elimination_threshold: threshold,
            budget: self.budget(),
            o_max: self.workers.o_max,
        };
        let (m, s) = self.scenario.estimator_prior();
        AlgorithmSpec::new(variant, policy)
            .with_quality_prior(m, s)
            .with_bias_mode(self.bias_mode)
            .with_quantizer(quantizer)
            .with_exact_method(self.exact_method)
    }

    fn threshold_at(&self, point: usize) -> f64 {
        match &self.sweep {
            Sweep::Thresholds(t) => t[point],
            _ => f64::NAN,
        }
    }
}

/// Aggregate of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// `NaN` for variants without a threshold.
    pub pi_th: f64,
    pub trials: usize,
    pub errors: usize,
    pub p_e: f64,
    /// Half-width of the Wilson interval.
    pub p_e_ci95: f64,
    pub p_e_lower: f64,
    pub p_e_upper: f64,
    pub m_bar_per_n: f64,
    pub m_bar_ci95: f64,
    pub rounds_mean: f64,
    /// Counts indexed by [`StopReason::index`].
    pub stops: [usize; 4],
    /// Set when a trial failed; the statistics are then `NaN`.
    pub error: Option<String>,
}

impl SweepRow {
    pub fn from_results(pi_th: f64, n: usize, results: &[TrialResult]) -> Self {
        let trials = results.len();
        let errors = results.iter().filter(|r| !r.correct).count();
        let (lo, hi) = wilson_interval(errors, trials);
        let per_object: Vec<f64> = results.iter().map(|r| r.evaluations as f64 / n as f64).collect();
        let (m_bar, m_ci) = stats::mean_ci(&per_object);
        let mut stops = [0; 4];
        for r in results {
            stops[r.stop_reason.index()] += 1;
        }
        SweepRow {
            pi_th,
            trials,
            errors,
            p_e: errors as f64 / trials as f64,
            p_e_ci95: 0.5 * (hi - lo),
            p_e_lower: lo,
            p_e_upper: hi,
            m_bar_per_n: m_bar,
            m_bar_ci95: m_ci,
            rounds_mean: results.iter().map(|r| r.rounds as f64).sum::<f64>() / trials as f64,
            stops,
            error: None,
        }
    }

    fn failed(pi_th: f64, trials: usize, message: String) -> Self {
        SweepRow {
            pi_th,
            trials,
            errors: 0,
            p_e: f64::NAN,
            p_e_ci95: f64::NAN,
            p_e_lower: f64::NAN,
            p_e_upper: f64::NAN,
            m_bar_per_n: f64::NAN,
            m_bar_ci95: f64::NAN,
            rounds_mean: f64::NAN,
            stops: [0; 4],
            error: Some(message),
        }
    }

    pub fn stop_count(&self, reason: StopReason) -> usize {
        self.stops[reason.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.pi_th,
                r.trials,
                r.p_e,
                r.p_e_ci95,
                r.m_bar_per_n,
                r.m_bar_ci95,
                r.rounds_mean,
                r.stops[0],
                r.stops[1],
                r.stops[2],
                r.stops[3]
            );
        }
        out
    }

    pub fn curve(&self) -> Curve {
        Curve::from_rows(&self.rows)
    }

    /// Messages of failed sweep points.
    pub fn failures(&self) -> Vec<String> {
        self.rows
            .iter()
            .filter_map(|r| r.error.as_ref().map(|e| format!("pi_th={}: {e}", r.pi_th)))
            .collect()
    }
}

/// Runs one trial of sweep point `point`.
pub fn run_single(
    cfg: &ExperimentConfig,
    spec: &AlgorithmSpec,
    point: usize,
    trial: usize,
    record: bool,
) -> std::result::Result<TrialResult, TrialFailure> {
    let seed = TrialSeed::new(cfg.master_seed, point as u32, trial as u32);
    let mut inst = sample_instance(&cfg.scenario.quality_prior(), &cfg.worker_model(), seed)?;
    run_trial(spec, &mut inst, seed, record)
}

/// Runs every sweep point. Trials are seeded by `(master, point, trial)`,
/// so results do not depend on execution order. A failing trial turns its
/// sweep point into a diagnostic row.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let quantizer = cfg.design_quantizer()?;
    let n = cfg.scenario.n();
    let mut rows = Vec::with_capacity(cfg.sweep.len());
    for point in 0..cfg.sweep.len() {
        let spec = cfg.algorithm(point, quantizer.clone());
        spec.validate(n)?;
        let outcomes = map_indexed(cfg.execution, cfg.trials, |t| run_single(cfg, &spec, point, t, false));
        let pi_th = cfg.threshold_at(point);
        let row = match outcomes.iter().position(|o| o.is_err()) {
            Some(t) => {
                let failure = outcomes[t].as_ref().unwrap_err();
                SweepRow::failed(pi_th, cfg.trials, format!("trial {t}: {failure}"))
            }
            None => {
                let results: Vec<TrialResult> = outcomes.into_iter().map(|o| o.expect("checked")).collect();
                SweepRow::from_results(pi_th, n, &results)
            }
        };
        rows.push(row);
    }
    Ok(SweepResult { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdProfile {
    pub result: SweepResult,
    /// `M̄/N` never increases with the threshold.
    pub monotone: bool,
}

/// Sweep of a budget-bounded variant reporting both `p_e` and `M̄/N`
/// against the threshold. A threshold of 0 is allowed here and spends the
/// whole budget.
pub fn threshold_profile(cfg: &ExperimentConfig) -> Result<ThresholdProfile> {
    if !cfg.variant.is_bounded() {
        return Err(Error::InvalidConfig(format!("threshold profile needs a bounded variant, got {}", cfg.variant)));
    }
    let result = run_experiment(cfg)?;
    let monotone = result
        .rows
        .windows(2)
        .all(|w| w[0].error.is_some() || w[1].error.is_some() || w[1].m_bar_per_n >= w[0].m_bar_per_n);
    Ok(ThresholdProfile { result, monotone })
}
