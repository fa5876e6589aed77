//! Flat `key = value` experiment files.
//!
//! ```text
//! # comment
//! scenario.kind = equally        # equally | gaussian
//! scenario.n = 16
//! scenario.ratio = 2             # Δ/σ or σ_a/σ
//! algo.variant = gka
//! policy.pi_th = 0.1, 0.01, 0.001
//! run.trials = 1000
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use super::{ExperimentConfig, QuantizerChoice, Scenario, Sweep, WorkerConfig};
use crate::algorithms::{BiasMode, Variant};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fitness::ExactMethod;
use crate::quantizer::DensityKind;

/// `key=value` assignments applied after the file, e.g. from `--set`.
pub type ConfigOverrides = Vec<(String, String)>;

const KEYS: &[&str] = &[
    "scenario.kind",
    "scenario.n",
    "scenario.ratio",
    "workers.o_max",
    "workers.bias_ratio",
    "workers.bias_mean",
    "workers.variance_spread",
    "algo.variant",
    "algo.group_size",
    "algo.workers",
    "algo.bias_mode",
    "algo.exact",
    "policy.pi_th",
    "policy.k",
    "sweep.uniform_m",
    "quantizer.kind",
    "quantizer.levels",
    "quantizer.dist",
    "quantizer.gamma",
    "quantizer.lo",
    "quantizer.hi",
    "run.trials",
    "run.seed",
    "run.output",
];

/// Where a value came from, for diagnostics.
#[derive(Debug, Clone, Copy)]
enum Origin {
    Line(usize),
    Override,
}

struct Entries(BTreeMap<String, (String, Origin)>);

fn located(origin: Origin, key: &str, msg: impl std::fmt::Display) -> Error {
    match origin {
        Origin::Line(l) => Error::InvalidConfig(format!("line {l}: field `{key}`: {msg}")),
        Origin::Override => Error::InvalidConfig(format!("override of field `{key}`: {msg}")),
    }
}

impl Entries {
    fn raw(&self, key: &str) -> Option<&(String, Origin)> {
        self.0.get(key)
    }

    fn required(&self, key: &str) -> Result<&(String, Origin)> {
        self.raw(key).ok_or_else(|| Error::InvalidConfig(format!("missing field `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((v, o)) => v.parse::<T>().map(Some).map_err(|e| located(*o, key, format!("{e} ({v:?})"))),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((v, o)) => v
                .split(',')
                .map(|s| s.trim().parse::<T>().map_err(|e| located(*o, key, format!("{e} ({s:?})"))))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn origin(&self, key: &str) -> Origin {
        self.raw(key).map_or(Origin::Override, |(_, o)| *o)
    }
}

/// Parses a config file and applies `overrides` on top.
pub fn parse_config(text: &str, overrides: &ConfigOverrides) -> Result<ExperimentConfig> {
    let mut entries = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("line {lineno}: expected `key = value`")))?;
        let key = k.trim();
        if !KEYS.contains(&key) {
            return Err(Error::InvalidConfig(format!("line {lineno}: unknown field `{key}`")));
        }
        entries.insert(key.to_string(), (v.trim().to_string(), Origin::Line(lineno)));
    }
    for (k, v) in overrides {
        let key = k.trim();
        if !KEYS.contains(&key) {
            return Err(Error::InvalidConfig(format!("override: unknown field `{key}`")));
        }
        entries.insert(key.to_string(), (v.trim().to_string(), Origin::Override));
    }
    build(&Entries(entries))
}

fn build(e: &Entries) -> Result<ExperimentConfig> {
    let n: usize = e.parse("scenario.n")?.unwrap_or(16);
    let ratio: f64 = e.parse("scenario.ratio")?.ok_or_else(|| Error::InvalidConfig("missing field `scenario.ratio`".into()))?;
    let (kind, origin) = e.required("scenario.kind")?;
    let scenario = match kind.as_str() {
        "equally" => Scenario::EquallySpaced { n, gap_ratio: ratio },
        "gaussian" => Scenario::Gaussian { n, spread_ratio: ratio },
        other => return Err(located(*origin, "scenario.kind", format!("expected equally or gaussian, got {other:?}"))),
    };

    let defaults = WorkerConfig::default();
    let workers = WorkerConfig {
        o_max: e.parse("workers.o_max")?.unwrap_or(defaults.o_max),
        bias_ratio: e.parse("workers.bias_ratio")?.unwrap_or(0.0),
        bias_mean: e.parse("workers.bias_mean")?.unwrap_or(0.0),
        variance_spread: e.parse("workers.variance_spread")?.unwrap_or(0.0),
    };

    let (name, origin) = e.required("algo.variant")?;
    let variant = match name.as_str() {
        "gke" => Variant::Gke,
        "gka" => Variant::Gka,
        "gra" => Variant::Gra,
        "bgka" => Variant::Bgka,
        "bgra" => Variant::Bgra,
        "uniform" => Variant::Uniform { per_object: 1 },
        "genie" => Variant::GenieAided,
        "tournament" => Variant::Tournament { group_size: e.parse("algo.group_size")?.unwrap_or(2) },
        "majority" => Variant::MajorityComparison { workers: e.parse("algo.workers")?.unwrap_or(1) },
        other => return Err(located(*origin, "algo.variant", format!("unknown variant {other:?}"))),
    };

    let bias_mode = match e.raw("algo.bias_mode") {
        None => BiasMode::None,
        Some((v, o)) => match v.as_str() {
            "none" => BiasMode::None,
            "estimate" => BiasMode::Estimate,
            "ignore" => BiasMode::Ignore,
            other => return Err(located(*o, "algo.bias_mode", format!("expected none, estimate or ignore, got {other:?}"))),
        },
    };

    let exact_method = match e.raw("algo.exact") {
        None => ExactMethod::DiagonalQuadrature,
        Some((v, o)) => parse_exact(v).ok_or_else(|| {
            located(*o, "algo.exact", format!("expected diagonal, quadrature or montecarlo:SAMPLES, got {v:?}"))
        })?,
    };

    let sweep = match variant {
        Variant::Uniform { .. } => Sweep::PerObject(
            e.list("sweep.uniform_m")?
                .ok_or_else(|| Error::InvalidConfig("missing field `sweep.uniform_m`".into()))?,
        ),
        Variant::MajorityComparison { .. } => Sweep::Single,
        _ => Sweep::Thresholds(
            e.list("policy.pi_th")?
                .ok_or_else(|| Error::InvalidConfig("missing field `policy.pi_th`".into()))?,
        ),
    };

    let quantizer = match e.raw("quantizer.kind").map(|(v, o)| (v.as_str(), *o)) {
        None | Some(("none", _)) => QuantizerChoice::None,
        Some(("uniform", _)) => {
            let range = match (e.parse::<f64>("quantizer.lo")?, e.parse::<f64>("quantizer.hi")?) {
                (Some(lo), Some(hi)) => Some((lo, hi)),
                (None, None) => None,
                _ => return Err(located(e.origin("quantizer.lo"), "quantizer.lo", "set both quantizer.lo and quantizer.hi")),
            };
            QuantizerChoice::Uniform { levels: e.parse("quantizer.levels")?.unwrap_or(32), range }
        }
        Some(("lloyd", _)) => {
            let gamma = e.parse("quantizer.gamma")?.unwrap_or(0.5);
            let density = match e.raw("quantizer.dist") {
                None => DensityKind::Weighted(gamma),
                Some((v, o)) => parse_density(v, gamma)
                    .ok_or_else(|| located(*o, "quantizer.dist", format!("expected I, II or III, got {v:?}")))?,
            };
            QuantizerChoice::Lloyd { levels: e.parse("quantizer.levels")?.unwrap_or(8), density }
        }
        Some((other, o)) => return Err(located(o, "quantizer.kind", format!("expected none, uniform or lloyd, got {other:?}"))),
    };

    let cfg = ExperimentConfig {
        scenario,
        workers,
        variant,
        bias_mode,
        exact_method,
        quantizer,
        budget_per_object: e.parse("policy.k")?,
        sweep,
        trials: e.parse("run.trials")?.unwrap_or(1000),
        master_seed: e.parse("run.seed")?.unwrap_or(0),
        output: e.raw("run.output").map(|(v, _)| PathBuf::from(v)),
        execution: Execution::Parallel,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub(crate) fn parse_exact(v: &str) -> Option<ExactMethod> {
    match v {
        "diagonal" => Some(ExactMethod::DiagonalQuadrature),
        "quadrature" => Some(ExactMethod::Quadrature),
        _ => {
            let samples = v.strip_prefix("montecarlo:")?.parse().ok()?;
            Some(ExactMethod::MonteCarlo { samples, seed: 0 })
        }
    }
}

pub(crate) fn parse_density(v: &str, gamma: f64) -> Option<DensityKind> {
    match v {
        "I" => Some(DensityKind::Generic),
        "II" => Some(DensityKind::TopOnly),
        "III" => Some(DensityKind::Weighted(gamma)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "scenario.kind = equally\nscenario.n = 16\nscenario.ratio = 2\nalgo.variant = gka\npolicy.pi_th = 0.1, 0.01\n";

    #[test]
    fn parses_minimal_file() {
        let c = parse_config(BASE, &Vec::new()).unwrap();
        assert_eq!(c.scenario, Scenario::EquallySpaced { n: 16, gap_ratio: 2.0 });
        assert_eq!(c.sweep, Sweep::Thresholds(vec![0.1, 0.01]));
        assert_eq!(c.trials, 1000);
    }

    #[test]
    fn overrides_win() {
        let o = vec![("run.trials".to_string(), "7".to_string()), ("algo.variant".into(), "gra".into())];
        let c = parse_config(BASE, &o).unwrap();
        assert_eq!(c.trials, 7);
        assert_eq!(c.variant, Variant::Gra);
    }

    #[test]
    fn diagnostics_name_line_and_field() {
        let text = format!("{BASE}run.trials = many\n");
        let err = parse_config(&text, &Vec::new()).unwrap_err().to_string();
        assert!(err.contains("line 6") && err.contains("run.trials"), "{err}");
        let err = parse_config("scenario.sort = 1\n", &Vec::new()).unwrap_err().to_string();
        assert!(err.contains("line 1") && err.contains("scenario.sort"), "{err}");
        let err = parse_config("just words\n", &Vec::new()).unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        let err = parse_config("scenario.kind = equally\n", &Vec::new()).unwrap_err().to_string();
        assert!(err.contains("scenario.ratio"), "{err}");
    }

    #[test]
    fn quantizer_and_uniform_sweep() {
        let text = "scenario.kind = gaussian\nscenario.n = 64\nscenario.ratio = 3\nalgo.variant = uniform\nsweep.uniform_m = 1,2,4\nquantizer.kind = lloyd\nquantizer.dist = II\n";
        let c = parse_config(text, &Vec::new()).unwrap();
        assert_eq!(c.sweep, Sweep::PerObject(vec![1, 2, 4]));
        assert_eq!(c.quantizer, QuantizerChoice::Lloyd { levels: 8, density: DensityKind::TopOnly });
    }

    #[test]
    fn exact_method_names() {
        assert_eq!(parse_exact("montecarlo:500"), Some(ExactMethod::MonteCarlo { samples: 500, seed: 0 }));
        assert_eq!(parse_exact("mc"), None);
    }
}
