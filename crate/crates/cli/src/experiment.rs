use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;
use trialscope_core::simharness::TraceSource;
use trialscope_core::{run_experiment_with_jobs, ExperimentConfig, ExperimentOutcome};

use crate::formats::{
    csv_writer, read_json, write_json, write_requirements, write_workload, ProviderTrialDocument, TrialDocument,
};
use crate::Output;

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Experiment config JSON.
    config: PathBuf,
    /// Upper bound on concurrent provider simulations (0: one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    output: Output,
}

/// Reads and validates a config. A relative trace path is taken relative to
/// the config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let mut config: ExperimentConfig = read_json(path).context("invalid config")?;
    config.validate().with_context(|| format!("invalid config {}", path.display()))?;
    if let TraceSource::File { path: trace, .. } = &mut config.trace {
        if trace.is_relative() {
            if let Some(dir) = path.parent() {
                *trace = dir.join(&*trace);
            }
        }
    }
    Ok(config)
}

pub fn run(args: ExperimentArgs) -> Result<ExitCode> {
    let config = load_config(&args.config)?;
    log::info!(
        "{} providers, {} consumers, seed {}",
        config.providers.len(),
        config.consumer_count,
        config.rng_seed
    );
    let outcome = run_experiment_with_jobs(&config, args.jobs)?;
    let dir = &args.output.dir;
    write_json(&dir.join("report.json"), &outcome.report)?;
    write_figures(&dir.join("figures"), &outcome)?;
    write_inputs(&dir.join("inputs"), &config, &outcome)?;

    let report = &outcome.report;
    println!(
        "winner {} (ground truth {}), mean NRMSE {:.4} with transformation, {:.4} without",
        report.selection.winner().map_or("-", |s| s.provider_id.as_str()),
        report.ground_truth_optimal,
        report.mean_nrmse_with_transform,
        report.mean_nrmse_without_transform
    );
    Ok(ExitCode::SUCCESS)
}

fn write_figures(dir: &Path, outcome: &ExperimentOutcome) -> Result<()> {
    let mut series = csv_writer(&dir.join("prediction_series.csv"))?;
    series.write_record(["provider_id", "qos", "tick", "actual", "predicted_with_transform", "predicted_without_transform"])?;
    for (id, s) in &outcome.series {
        for (qos, actual) in &s.actual {
            let with = &s.predicted_with_transform[qos];
            let without = &s.predicted_without_transform[qos];
            for (i, (tick, a)) in actual.points().enumerate() {
                series.write_record([
                    id.clone(),
                    qos.clone(),
                    tick.to_string(),
                    a.to_string(),
                    with.values()[i].to_string(),
                    without.values()[i].to_string(),
                ])?;
            }
        }
    }
    series.flush()?;

    let mut nrmse = csv_writer(&dir.join("prediction_nrmse.csv"))?;
    nrmse.write_record([
        "provider_id",
        "nrmse_with_transform",
        "nrmse_without_transform",
        "transformed",
        "mean_correlation",
        "mean_nrmse",
        "verdict",
    ])?;
    for p in &outcome.report.providers {
        nrmse.write_record([
            p.provider_id.clone(),
            p.nrmse_with_transform.to_string(),
            p.nrmse_without_transform.to_string(),
            p.transformed.to_string(),
            p.confidence.mean_correlation.to_string(),
            p.confidence.mean_nrmse.to_string(),
            p.confidence.verdict.as_str().to_owned(),
        ])?;
    }
    nrmse.flush()?;

    let report = &outcome.report;
    let mut distance = csv_writer(&dir.join("qos_distance.csv"))?;
    distance.write_record(["provider_id", "rank", "qos", "predicted_distance", "actual_distance"])?;
    for score in &report.selection.ranking {
        let actual = report.actual_distances.score(&score.provider_id);
        for (qos, d) in &score.per_qos_distance {
            let a = actual.and_then(|s| s.per_qos_distance.get(qos)).copied().unwrap_or(f64::NAN);
            distance.write_record([
                score.provider_id.clone(),
                score.rank.to_string(),
                qos.clone(),
                d.to_string(),
                a.to_string(),
            ])?;
        }
    }
    distance.flush()?;
    Ok(())
}

/// Writes the new consumer's inputs in the formats `select` reads.
fn write_inputs(dir: &Path, config: &ExperimentConfig, outcome: &ExperimentOutcome) -> Result<()> {
    let inputs = &outcome.inputs;
    let levels = inputs.plan.levels();
    write_workload(&dir.join("workload.csv"), &inputs.workload)?;
    write_requirements(&dir.join("requirements.csv"), &inputs.requirements)?;
    write_json(&dir.join("trial_plan.json"), &inputs.plan)?;
    let fingerprints: Vec<_> = inputs.fingerprints.values().collect();
    write_json(&dir.join("fingerprints.json"), &fingerprints)?;
    let trials = TrialDocument {
        window_start: 1,
        stable_period: config.stable_period,
        aggregation: config.aggregation.clone(),
        providers: inputs
            .trials
            .iter()
            .map(|(id, t)| ProviderTrialDocument::from_experience(id, t, &levels))
            .collect(),
    };
    write_json(&dir.join("trial_observations.json"), &trials)
}
