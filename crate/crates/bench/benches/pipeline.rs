use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use trialscope_core::{
    aggregate_trial, build_trial_plan, generate_trial_workload, paa_compress, paa_decompress, predict_long_term,
    run_experiment_with_jobs, Aggregation, ExperimentConfig, LongTermWorkload, LossBudget, PerformanceFingerprint,
    TimeSeries, TrialConstraints, TrialExperience, ZeroWeightPolicy,
};

fn wave(len: usize) -> Vec<f64> {
    (0..len).map(|t| 50.0 + 20.0 * (t as f64 / 7.0).sin() + (t % 11) as f64).collect()
}

fn paa(c: &mut Criterion) {
    let mut group = c.benchmark_group("paa");
    for len in [360usize, 8_760] {
        let s = TimeSeries::from_values(wave(len)).unwrap();
        group.bench_with_input(BenchmarkId::new("round_trip", len), &s, |b, s| {
            b.iter(|| {
                let compressed = paa_compress(black_box(s), 12).unwrap();
                paa_decompress(&compressed, s.len(), 12).unwrap()
            })
        });
    }
    group.finish();
}

fn trial_workload(c: &mut Criterion) {
    let s = TimeSeries::from_values(wave(360)).unwrap();
    c.bench_function("generate_trial_workload/360", |b| {
        b.iter(|| generate_trial_workload(black_box(&s), 30, LossBudget::new(4.0).unwrap()).unwrap())
    });
}

fn prediction(c: &mut Criterion) {
    let workload = LongTermWorkload::from_values(wave(360)).unwrap();
    let constraints = TrialConstraints { vm_count: 12, trial_length: 30, stable_period: 1, slots_per_period: 30 };
    let plan = build_trial_plan(&workload, &constraints, LossBudget::unlimited()).unwrap();
    let qos = ["throughput", "insert_latency", "read_latency"];
    let fp_series = qos.iter().map(|q| (q.to_string(), TimeSeries::from_values(wave(360)).unwrap())).collect();
    let fp = PerformanceFingerprint::from_series("p", 360, &fp_series).unwrap();
    let per_vm = (0..12)
        .map(|_| qos.iter().map(|q| (q.to_string(), TimeSeries::from_values(wave(30)).unwrap())).collect())
        .collect();
    let trial = aggregate_trial(&TrialExperience::new(per_vm).unwrap(), &Aggregation::default());
    c.bench_function("predict_long_term/360x3", |b| {
        b.iter(|| predict_long_term(&workload, black_box(&trial), &plan, &fp, ZeroWeightPolicy::default()).unwrap())
    });
}

fn experiment(c: &mut Criterion) {
    let config = ExperimentConfig::desk_scale(10, 1);
    let mut group = c.benchmark_group("run_experiment");
    group.sample_size(10);
    for jobs in [1usize, 4] {
        group.bench_with_input(BenchmarkId::new("desk_scale", jobs), &jobs, |b, &jobs| {
            b.iter(|| run_experiment_with_jobs(black_box(&config), jobs).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, paa, trial_workload, prediction, experiment);
criterion_main!(benches);
