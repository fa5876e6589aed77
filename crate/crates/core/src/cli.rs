//! Command-line driver.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 1 for
//! failures while running.

use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::analytics::{p_comp, p_est};
use crate::error::Error;
use crate::exec::configure_threads_from_env;
use crate::harness::{self, parse_config, presets, ConfigOverrides, ExperimentConfig};
use crate::model::QualityPrior;
use crate::quantizer::{lloyd_design, uniform_design, AnswerDensity, DensityKind};

#[derive(Parser, Debug)]
#[command(name = "crowdtop", version, about = "Adaptive crowd scoring experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment and write its CSV.
    Run(RunArgs),
    /// Print scoring vs. comparison error probabilities for two objects.
    Analytic(AnalyticArgs),
    /// Design a quantizer and print its table.
    Quantizer(QuantizerArgs),
    /// List built-in experiment presets.
    ListScenarios,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a built-in preset; a config file, if given, is applied on top.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override a config field, e.g. `--set policy.pi_th=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Write the per-round trace of trial 0 at the first sweep point as
    /// JSON lines to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Run trials on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug)]
struct AnalyticArgs {
    /// Odd number of workers.
    #[arg(long = "W", value_name = "W")]
    workers: u64,
    /// Gap-to-noise grid `lo:hi:count`.
    #[arg(long = "delta-sigma", value_name = "LO:HI:COUNT")]
    delta_sigma: String,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct QuantizerArgs {
    /// Number of levels.
    #[arg(long = "L", value_name = "L")]
    levels: usize,
    /// Answer distribution: I (any object), II (best object), III (weighted).
    #[arg(long, default_value = "III")]
    dist: String,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// `gaussian:N:RATIO` or `equally:N:RATIO`.
    #[arg(long)]
    scenario: String,
    /// Bias standard deviation in units of the noise deviation.
    #[arg(long = "bias-sigma", default_value_t = 0.0)]
    bias_sigma: f64,
    /// `lloyd` or `uniform`.
    #[arg(long, default_value = "lloyd")]
    method: String,
    #[arg(long)]
    output: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::InvalidInput(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

/// Entry point; `argv[0]` is the program name.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Err(msg) = configure_threads_from_env() {
        eprintln!("error: {msg}");
        return 2;
    }
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Analytic(a) => analytic(a),
        Command::Quantizer(a) => quantizer(a),
        Command::ListScenarios => list_scenarios(),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            1
        }
    }
}

fn load_config(a: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut text = String::new();
    if let Some(name) = &a.preset {
        let p = presets::find(name).ok_or_else(|| Failure::Usage(format!("unknown preset {name:?}")))?;
        text.push_str(p.config);
    }
    if let Some(path) = &a.config {
        let file = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        text.push_str(&file);
    }
    if a.config.is_none() && a.preset.is_none() {
        return Err(Failure::Usage("run needs --config or --preset".into()));
    }
    let mut overrides: ConfigOverrides = Vec::new();
    for s in &a.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
        overrides.push((k.to_string(), v.to_string()));
    }
    if let Some(t) = a.trials {
        overrides.push(("run.trials".into(), t.to_string()));
    }
    if let Some(s) = a.seed {
        overrides.push(("run.seed".into(), s.to_string()));
    }
    // A preset followed by a file may repeat keys; later lines win.
    let mut cfg = parse_config(&dedupe(&text), &overrides)?;
    if let Some(o) = &a.output {
        cfg.output = Some(o.clone());
    }
    if a.sequential {
        cfg.execution = crate::exec::Execution::Sequential;
    }
    Ok(cfg)
}

/// Keeps only the last assignment of each key so that a file can refine a
/// preset.
fn dedupe(text: &str) -> String {
    let lines: Vec<&str> = text.lines().collect();
    let key = |l: &str| l.split('#').next().and_then(|s| s.split_once('=')).map(|(k, _)| k.trim().to_string());
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| match key(l) {
            Some(k) if lines[i + 1..].iter().any(|m| key(m).as_deref() == Some(k.as_str())) => "",
            _ => l,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let cfg = load_config(&a)?;
    if let Some(path) = &a.trace {
        let quantizer = cfg.design_quantizer()?;
        let spec = cfg.algorithm(0, quantizer);
        let (trace, summary) = match harness::run_single(&cfg, &spec, 0, 0, true) {
            Ok(r) => (r.trace.clone().unwrap_or_default(), serde_json::to_string(&r).ok()),
            Err(f) => {
                eprintln!("trace trial failed: {f}");
                (f.trace, None)
            }
        };
        let mut out = String::new();
        for rec in &trace {
            out.push_str(&serde_json::to_string(rec).map_err(|e| Failure::Runtime(e.to_string()))?);
            out.push('\n');
        }
        if let Some(s) = summary {
            eprintln!("trace trial: {s}");
        }
        write_output(Some(path), &out)?;
    }
    let result = harness::run_experiment(&cfg)?;
    let failures = result.failures();
    for f in &failures {
        eprintln!("sweep point failed: {f}");
    }
    write_output(cfg.output.as_ref(), &result.to_csv())?;
    match failures.len() {
        0 => Ok(()),
        k => Err(Failure::Runtime(format!("{k} sweep point(s) failed"))),
    }
}

fn write_output(path: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Runtime(e.to_string())),
    }
}

fn analytic(a: AnalyticArgs) -> Result<(), Failure> {
    if a.workers.is_multiple_of(2) {
        return Err(Failure::Usage(format!("--W must be odd, got {}", a.workers)));
    }
    let parts: Vec<&str> = a.delta_sigma.split(':').collect();
    let bad = || Failure::Usage(format!("--delta-sigma expects LO:HI:COUNT, got {:?}", a.delta_sigma));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    if !(lo >= 0.0 && hi >= lo) || count == 0 {
        return Err(bad());
    }
    let mut out = String::from("delta_sigma,p_comp,p_est\n");
    for r in harness::stats::grid(lo, hi, count) {
        out.push_str(&format!("{r},{},{}\n", p_comp(a.workers, r, 1.0), p_est(a.workers, r, 1.0)));
    }
    write_output(a.output.as_ref(), &out)
}

fn quantizer(a: QuantizerArgs) -> Result<(), Failure> {
    let parts: Vec<&str> = a.scenario.split(':').collect();
    let bad = || Failure::Usage(format!("--scenario expects gaussian:N:RATIO or equally:N:RATIO, got {:?}", a.scenario));
    if parts.len() != 3 {
        return Err(bad());
    }
    let n: usize = parts[1].parse().map_err(|_| bad())?;
    let ratio: f64 = parts[2].parse().map_err(|_| bad())?;
    let scenario = match parts[0] {
        "gaussian" => harness::Scenario::Gaussian { n, spread_ratio: ratio },
        "equally" => harness::Scenario::EquallySpaced { n, gap_ratio: ratio },
        _ => return Err(bad()),
    };
    if n < 2 || !(ratio > 0.0) {
        return Err(bad());
    }
    let density = match a.dist.as_str() {
        "I" => DensityKind::Generic,
        "II" => DensityKind::TopOnly,
        "III" => DensityKind::Weighted(a.gamma),
        other => return Err(Failure::Usage(format!("--dist expects I, II or III, got {other:?}"))),
    };
    let spec = match a.method.as_str() {
        "uniform" => {
            let (lo, hi) = scenario.default_uniform_range();
            uniform_design(lo, hi, a.levels)?
        }
        "lloyd" => {
            let s = scenario.noise_std();
            let b = a.bias_sigma * s;
            let prior: QualityPrior = scenario.quality_prior();
            let d = AnswerDensity::for_scenario(density, &prior, (s * s + b * b).sqrt())?;
            lloyd_design(&d, a.levels, 1e-9 * s, 20_000)?.0
        }
        other => return Err(Failure::Usage(format!("--method expects lloyd or uniform, got {other:?}"))),
    };
    write_output(a.output.as_ref(), &spec.to_table())
}

fn list_scenarios() -> Result<(), Failure> {
    let mut out = String::new();
    for p in presets::PRESETS {
        out.push_str(&format!("{:<24} {}\n", p.name, p.summary));
    }
    write_output(None, &out)
}
