//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails if any
//! criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trialscope_core::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn series(values: Vec<f64>) -> TimeSeries {
    TimeSeries::from_values(values).unwrap()
}

fn block_means(values: &[f64], width: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < values.len() {
        let end = (i + width).min(values.len());
        let mut sum = 0.0;
        for v in &values[i..end] {
            sum += v;
        }
        out.push(sum / (end - i) as f64);
        i = end;
    }
    out
}

fn paa_oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut checked = 0usize;
    for len in 1..=8u32 {
        for code in 0..3usize.pow(len) {
            let values: Vec<f64> = (0..len).map(|i| ((code / 3usize.pow(i)) % 3) as f64).collect();
            let s = series(values.clone());
            for width in 1..=len as usize {
                let got = paa_compress(&s, width).map_err(|e| e.to_string())?;
                let want = block_means(&values, width);
                ensure(got.values() == want.as_slice(), || {
                    format!("{values:?} width {width}: {:?} != {want:?}", got.values())
                })?;
                checked += 1;
            }
        }
    }
    within(started.elapsed(), Duration::from_secs(1))?;
    Ok(format!("{checked} (series, width) cases exact in {:?}", started.elapsed()))
}

/// Round-trip loss at `rate`, evaluated without the library: block means
/// anchored at block starts, straight lines between them and past the end.
fn round_trip_loss(values: &[f64], rate: usize) -> f64 {
    let anchors = block_means(values, rate);
    let mut err = 0.0;
    for (i, v) in values.iter().enumerate() {
        let rebuilt = match anchors.len() {
            1 => anchors[0],
            n => {
                let j = (i / rate).min(n - 2);
                let (x0, x1) = ((j * rate) as f64, ((j + 1) * rate) as f64);
                anchors[j] + (anchors[j + 1] - anchors[j]) * (i as f64 - x0) / (x1 - x0)
            }
        };
        err += (v - rebuilt).abs();
    }
    err / values.len() as f64
}

fn algorithm_contract() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut feasible, mut borderline) = (0, 0);
    for case in 0..200 {
        let m = rng.random_range(30..=360usize);
        let level = rng.random_range(5.0..100.0);
        let values: Vec<f64> = (0..m).map(|_| (level + rng.random_range(-20.0..20.0f64)).max(0.0)).collect();
        let slots = rng.random_range(1..=m.min(60));
        let budget = LossBudget::new(rng.random_range(0.0..12.0)).unwrap();
        let tw = generate_trial_workload(&series(values.clone()), slots, budget).map_err(|e| e.to_string())?;

        ensure(tw.workload.len() <= slots, || format!("case {case}: {} points > {slots} slots", tw.workload.len()))?;
        if tw.feasible {
            feasible += 1;
            ensure(tw.loss <= budget.get(), || format!("case {case}: loss {} > budget {}", tw.loss, budget.get()))?;
        }
        let min_rate = m.div_ceil(slots);
        let minimal_loss = round_trip_loss(&values, min_rate);
        if (minimal_loss - budget.get()).abs() <= 1e-9 {
            borderline += 1;
            continue;
        }
        ensure(tw.feasible == (minimal_loss <= budget.get()), || {
            format!("case {case}: feasible={} but minimal-rate loss {minimal_loss} vs budget {}", tw.feasible, budget.get())
        })?;
    }
    within(started.elapsed(), Duration::from_secs(5))?;
    Ok(format!("200 workloads, {feasible} feasible, {borderline} on the budget boundary, {:?}", started.elapsed()))
}

fn halving() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let period = rng.random_range(10..=60u64);
        let len = rng.random_range(3..=period as usize);
        let vms = rng.random_range(1..=6usize);
        let mode = if rng.random_bool(0.5) { AggregationMode::Sum } else { AggregationMode::Mean };
        let names = ["throughput", "latency"];
        let mut fp_series = BTreeMap::new();
        for q in names {
            let scale = rng.random_range(1.0..500.0);
            fp_series.insert(q.to_string(), series((0..period).map(|_| scale * rng.random_range(0.5..1.5)).collect()));
        }
        let fp = PerformanceFingerprint::from_series("p", period, &fp_series).unwrap();
        let per_vm: Vec<BTreeMap<String, TimeSeries>> = (0..vms)
            .map(|_| {
                names
                    .iter()
                    .map(|q| (q.to_string(), series((0..len).map(|_| rng.random_range(0.0..800.0)).collect())))
                    .collect()
            })
            .collect();
        let trial = aggregate_trial(&TrialExperience::new(per_vm).unwrap(), &Aggregation::uniform(mode));
        let moved = transform_experience(&trial, &fp).map_err(|e| e.to_string())?;
        for q in names {
            let reference = &fp_series[q].values()[..len];
            let range = reference.iter().cloned().fold(f64::MIN, f64::max) - reference.iter().cloned().fold(f64::MAX, f64::min);
            let score = |x: &[f64]| {
                (x.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / len as f64).sqrt() / range
            };
            let before = score(trial.aggregated(q).unwrap().values());
            let after = score(moved.aggregated(q).unwrap().values());
            let gap = (after - 0.5 * before).abs();
            worst = worst.max(gap);
            ensure(gap <= 1e-9, || format!("case {case} {q}: {after} vs half of {before}"))?;
        }
    }
    Ok(format!("100 pairs, worst |after - before/2| = {worst:.2e}"))
}

fn tick_mapping() -> Outcome {
    let t = map_trial_tick(35, 30).map_err(|e| e.to_string())?;
    ensure(t == 5, || format!("map_trial_tick(35, 30) = {t}"))?;
    Ok("map_trial_tick(35, 30) = 5".into())
}

fn ratio_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let horizon = 120usize;
    let workload =
        LongTermWorkload::from_values((0..horizon).map(|_| rng.random_range(10.0..60.0)).collect()).unwrap();
    let constraints = TrialConstraints { vm_count: 4, trial_length: 20, stable_period: 2, slots_per_period: 5 };
    let plan = build_trial_plan(&workload, &constraints, LossBudget::unlimited()).unwrap();
    let fp_series: BTreeMap<String, TimeSeries> = ["throughput", "latency"]
        .iter()
        .map(|q| (q.to_string(), series((0..horizon).map(|_| rng.random_range(50.0..150.0)).collect())))
        .collect();
    let fp = PerformanceFingerprint::from_series("p", horizon as u64, &fp_series).unwrap();
    let per_vm = (0..4)
        .map(|_| {
            fp_series
                .keys()
                .map(|q| {
                    let values = (0..10).map(|_| rng.random_range(40.0..160.0)).collect();
                    (q.clone(), TimeSeries::new(1, 2, values).unwrap())
                })
                .collect()
        })
        .collect();
    let trial = aggregate_trial(&TrialExperience::new(per_vm).unwrap(), &Aggregation::default());
    let base = predict_long_term(&workload, &trial, &plan, &fp, ZeroWeightPolicy::Strict).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for alpha in [0.5, 2.0, 10.0] {
        let scaled = predict_long_term(&workload, &trial, &plan, &fp.scaled(alpha), ZeroWeightPolicy::Strict)
            .map_err(|e| e.to_string())?;
        for (q, s) in &base.per_qos {
            for (a, b) in s.values().iter().zip(scaled.per_qos[q].values()) {
                worst = worst.max((a - b).abs());
                ensure((a - b).abs() <= 1e-9, || format!("alpha {alpha}, {q}: {a} vs {b}"))?;
            }
        }
    }
    Ok(format!("alpha in {{0.5, 2, 10}}, {} ticks x 2 QoS, worst diff {worst:.2e}", horizon))
}

fn noise_free_identity() -> Outcome {
    let started = Instant::now();
    let mut config = ExperimentConfig::desk_scale(10, 5);
    config.replication_jitter = 0.0;
    for p in &mut config.providers {
        for q in p.qos.values_mut() {
            q.noise_sigma = 0.0;
            q.trial_bias = 0.0;
            q.sensitivity = 0.0;
        }
    }
    let report = run_experiment(&config).map_err(|e| e.to_string())?.report;
    let designated = report.provider(&config.designated_provider).unwrap();
    ensure(designated.nrmse_with_transform <= 1e-9, || format!("NRMSE {}", designated.nrmse_with_transform))?;
    let winner = report.selection.winner().unwrap();
    ensure(winner.provider_id == config.designated_provider, || format!("winner {}", winner.provider_id))?;
    ensure(winner.total_distance <= 1e-9, || format!("distance {}", winner.total_distance))?;
    within(started.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "{} NRMSE {:.1e}, rank 1, distance {:.1e}, {:?}",
        winner.provider_id,
        designated.nrmse_with_transform,
        winner.total_distance,
        started.elapsed()
    ))
}

fn transformation_benefit() -> Outcome {
    let started = Instant::now();
    let (mut with, mut without, mut strictly) = (0.0, 0.0, 0);
    for seed in 0..20 {
        let config = ExperimentConfig::desk_scale(10, 1000 + seed);
        let report = run_experiment_with_jobs(&config, 0).map_err(|e| e.to_string())?.report;
        with += report.mean_nrmse_with_transform / 20.0;
        without += report.mean_nrmse_without_transform / 20.0;
        if report.mean_nrmse_with_transform < report.mean_nrmse_without_transform {
            strictly += 1;
        }
    }
    ensure(with <= without, || format!("mean NRMSE {with} with vs {without} without"))?;
    ensure(strictly >= 14, || format!("strictly lower in {strictly}/20 seeds"))?;
    within(started.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "mean NRMSE {with:.4} with vs {without:.4} without, lower in {strictly}/20 seeds, {:?}",
        started.elapsed()
    ))
}

fn ranking_correctness() -> Outcome {
    let started = Instant::now();
    let mut hits = 0;
    for seed in 0..50u64 {
        let mut config = ExperimentConfig::desk_scale(10, 5000 + seed);
        config.designated_provider = config.providers[(seed % 10) as usize].id.clone();
        let report = run_experiment_with_jobs(&config, 0).map_err(|e| e.to_string())?.report;
        if report.designated_ranked_first {
            hits += 1;
        }
    }
    ensure(hits >= 45, || format!("designated provider first in {hits}/50 seeds"))?;
    within(started.elapsed(), Duration::from_secs(180))?;
    Ok(format!("designated provider first in {hits}/50 seeds, {:?}", started.elapsed()))
}

fn confidence_thresholds() -> Outcome {
    let values: Vec<f64> = (0..30).map(|t| 100.0 + 10.0 * (t as f64 / 3.0).sin() + t as f64).collect();
    let fp = PerformanceFingerprint::from_series("p", 30, &[("tp".to_string(), series(values.clone()))].into()).unwrap();
    let thresholds = Thresholds { correlation: 0.5, nrmse: 1.0 };
    let verdict = |offset: f64| {
        let shifted: Vec<f64> = values[..10].iter().map(|v| v + offset).collect();
        let trial = TrialExperience::new(vec![[("tp".to_string(), series(shifted))].into()]).unwrap();
        let trial = aggregate_trial(&trial, &Aggregation::uniform(AggregationMode::Mean));
        match_fingerprint(&trial, &fp, thresholds).map(|c| c.verdict).map_err(|e| e.to_string())
    };
    // the trial covers ticks 1..=10; NRMSE divides by the range of that slice
    let slice = &values[..10];
    let range = slice.iter().cloned().fold(f64::MIN, f64::max) - slice.iter().cloned().fold(f64::MAX, f64::min);
    let offset = 1.5 * thresholds.nrmse * range;
    let shifted = verdict(offset)?;
    let exact = verdict(0.0)?;
    ensure(shifted == Verdict::PartialMatch, || format!("offset {offset}: {shifted:?}"))?;
    ensure(exact == Verdict::FullMatch, || format!("no offset: {exact:?}"))?;
    Ok(format!("offset {offset:.2} -> {}, no offset -> {}", shifted.as_str(), exact.as_str()))
}

fn determinism() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/experiment.json");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    for (run, jobs) in [("a", "1"), ("b", "4")] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_trialscope"))
            .arg("experiment")
            .arg(&config)
            .args(["--jobs", jobs, "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())?;
        reports.push(std::fs::read(out.join("report.json")).map_err(|e| e.to_string())?);
    }
    ensure(reports[0] == reports[1], || "report.json differs between runs".into())?;
    Ok(format!("two runs, {} identical bytes", reports[0].len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("PAA oracle equivalence", paa_oracle_equivalence),
        ("trial workload generation contract", algorithm_contract),
        ("transformation halving", halving),
        ("tick mapping", tick_mapping),
        ("fingerprint ratio invariance", ratio_invariance),
        ("noise-free end-to-end identity", noise_free_identity),
        ("transformation benefit", transformation_benefit),
        ("ranking correctness", ranking_correctness),
        ("confidence threshold behavior", confidence_thresholds),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
