use std::fs;

use crowdtop::cli::cli_main;
use crowdtop::harness::CSV_HEADER;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["crowdtop"];
    argv.extend_from_slice(args);
    cli_main(argv)
}

const CONFIG: &str = "\
# small smoke experiment
scenario.kind = equally
scenario.n = 8
scenario.ratio = 2
algo.variant = gka
policy.pi_th = 0.1, 0.01
run.trials = 10
";

#[test]
fn run_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    let out = dir.path().join("out.csv");
    fs::write(&cfg, CONFIG).unwrap();
    let code = run(&["run", "--config", cfg.to_str().unwrap(), "--trials", "100", "--seed", "7", "--output", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER);
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("0.1,100,"));
}

#[test]
fn trace_is_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    let out = dir.path().join("out.csv");
    let trace = dir.path().join("trace.jsonl");
    fs::write(&cfg, CONFIG).unwrap();
    let code = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(&trace).unwrap();
    assert!(!text.is_empty());
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("contestants").is_some());
    }
}

#[test]
fn analytic_emits_requested_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.csv");
    assert_eq!(run(&["analytic", "--W", "101", "--delta-sigma", "0.05:3:60", "--output", out.to_str().unwrap()]), 0);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "delta_sigma,p_comp,p_est");
    assert_eq!(text.lines().count(), 61);
}

#[test]
fn quantizer_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q.txt");
    let code = run(&["quantizer", "--L", "8", "--dist", "III", "--gamma", "0.5", "--scenario", "gaussian:256:3", "--output", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(&out).unwrap();
    let spec = crowdtop::quantizer::QuantizerSpec::from_table(&text).unwrap();
    assert_eq!(spec.levels(), 8);
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 8);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "scenario.kind = equally\nscenario.n = eight\n").unwrap();
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap()]), 2);
    fs::write(&cfg, CONFIG).unwrap();
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap(), "--set", "policy.pi_th=2"]), 2);
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap(), "--set", "nonsense"]), 2);
    assert_eq!(run(&["run", "--preset", "no-such-preset"]), 2);
    assert_eq!(run(&["analytic", "--W", "4", "--delta-sigma", "0:1:3"]), 2);
    assert_eq!(run(&["frobnicate"]), 2);
}

#[test]
fn presets_are_listed_and_runnable() {
    assert_eq!(run(&["list-scenarios"]), 0);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    assert_eq!(run(&["run", "--preset", "gka-equally-16", "--trials", "20", "--output", out.to_str().unwrap()]), 0);
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 6);
}
