use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use crowdtop::exec::Execution;
use crowdtop::harness::{run_experiment, ExperimentConfig, Scenario, Sweep};
use crowdtop::algorithms::Variant;

fn config(execution: Execution) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        Scenario::EquallySpaced { n: 16, gap_ratio: 2.0 },
        Variant::Gka,
        Sweep::Thresholds(vec![0.01]),
    );
    cfg.trials = 200;
    cfg.execution = execution;
    cfg
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("gka_sweep_200_trials");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        let cfg = config(exec);
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| run_experiment(cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
