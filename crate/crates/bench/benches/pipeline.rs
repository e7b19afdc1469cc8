use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use spinwave::analysis::{fit_damped_sinusoid, fit_visibility_decay, simulate_tables, tabulate};
use spinwave::montecarlo::{simulate_block, BlockModel, ExperimentConfig};
use spinwave::quantum_state::{
    make_entangled_state, outcome_probabilities, AnalyzerSetting, SourceParams,
};

fn config(trials: u64) -> ExperimentConfig {
    ExperimentConfig {
        storage_times: vec![1.19],
        trials_per_point: trials,
        ..ExperimentConfig::default()
    }
}

fn trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate_block");
    for n in [65_536u64, 1 << 20] {
        let cfg = config(n);
        let block = cfg.plan()[0];
        let model = BlockModel::new(&cfg, block).unwrap();
        group.throughput(Throughput::Elements(n));
        group.bench_with_input(BenchmarkId::from_parameter(n), &model, |b, m| {
            b.iter(|| simulate_block(m, black_box(7)))
        });
    }
    group.finish();

    let cfg = config(1 << 18);
    let mut group = c.benchmark_group("streaming");
    group.throughput(Throughput::Elements(
        cfg.plan().iter().map(|b| b.trials).sum(),
    ));
    group.sample_size(10);
    group.bench_function("simulate_tables", |b| {
        b.iter(|| simulate_tables(&cfg, black_box(7)).unwrap())
    });
    group.finish();
}

fn analysis(c: &mut Criterion) {
    let cfg = config(1 << 16);
    let plan = cfg.plan();
    let events: Vec<_> = plan
        .iter()
        .flat_map(|&b| simulate_block(&BlockModel::new(&cfg, b).unwrap(), 3))
        .collect();
    c.bench_function("tabulate", |b| {
        b.iter(|| tabulate(black_box(&events), &plan).unwrap())
    });

    let osc: Vec<(f64, f64)> = (0..40)
        .map(|i| {
            let t = i as f64 * 0.12;
            (
                t,
                0.5 + 0.4 * (std::f64::consts::TAU * t / 1.19).cos() + 0.01 * ((i * 7) % 5) as f64,
            )
        })
        .collect();
    c.bench_function("fit_damped_sinusoid", |b| {
        b.iter(|| fit_damped_sinusoid(black_box(&osc)).unwrap())
    });

    let decay: Vec<(f64, f64)> = (0..9)
        .map(|i| {
            let t = 5.0 * i as f64;
            (
                t,
                1.0 - 2.0 / (10.8 * (-(t / 33.2).powi(2)).exp() + 1.0)
                    + 0.003 * ((i % 3) as f64 - 1.0),
            )
        })
        .collect();
    c.bench_function("fit_visibility_decay", |b| {
        b.iter(|| fit_visibility_decay(black_box(&decay)).unwrap())
    });
}

fn state(c: &mut Criterion) {
    let source = SourceParams::default().with_noise(0.12);
    let rho = make_entangled_state(&source, 1.19).unwrap();
    let (w, r) = (
        AnalyzerSetting::linear_deg(0.0),
        AnalyzerSetting::linear_deg(22.5),
    );
    c.bench_function("make_entangled_state", |b| {
        b.iter(|| make_entangled_state(&source, black_box(1.19)).unwrap())
    });
    c.bench_function("outcome_probabilities", |b| {
        b.iter(|| outcome_probabilities(black_box(&rho), w, r).unwrap())
    });
}

criterion_group!(benches, trials, analysis, state);
criterion_main!(benches);
