use af_relay::mse::Objective;
use af_relay::sim::{self, ChainTemplate, DesignKind, DesignSpec, SimConfig};
use af_relay::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn sweep_config() -> SimConfig {
    SimConfig {
        template: ChainTemplate::uniform(vec![4, 4, 4, 4], 4, 0.4, 0.0, 0.004),
        snr_grid_db: vec![15.0, 25.0],
        trials: 16,
        symbols_per_trial: 200,
        seed: 7,
        designs: vec![
            DesignSpec::new(DesignKind::Robust, Objective::SumMse),
            DesignSpec::new(DesignKind::Robust, Objective::MaxMse),
            DesignSpec::new(DesignKind::EstimatedOnly, Objective::MutualInfo),
        ],
    }
}

fn bench_sweep(c: &mut Criterion) {
    let config = sweep_config();
    let mut group = c.benchmark_group("ber_sweep");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| sim::run_sweep(&config, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
