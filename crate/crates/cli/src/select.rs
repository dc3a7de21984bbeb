use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Args;
use trialscope_core::{
    select_providers, Exclusion, PerformanceFingerprint, ProviderTrial, SelectionOptions, Thresholds,
    TransformPolicy,
};

use crate::formats::{
    read_json, read_requirements, read_workload, write_json, write_ranking, ProviderDiagnostics, SelectionDocument,
    TrialDocument,
};
use crate::Output;

#[derive(Args, Debug)]
pub struct SelectArgs {
    /// Consumer workload CSV.
    workload: PathBuf,
    /// Trial observations JSON.
    trial_observations: PathBuf,
    /// JSON array of provider fingerprints.
    fingerprints: PathBuf,
    /// Requirements CSV (`tick,<qos>,...`).
    requirements: PathBuf,
    /// Workload column; required when the workload file has several.
    #[arg(long)]
    consumer: Option<String>,
    /// Minimum mean correlation for a full match.
    #[arg(long = "r-threshold", default_value_t = 0.5)]
    r_threshold: f64,
    /// Maximum mean NRMSE for a full match.
    #[arg(long = "e-threshold", default_value_t = 1.0)]
    e_threshold: f64,
    /// Rank on raw RMSE instead of range-normalized distances.
    #[arg(long)]
    raw_distance: bool,
    /// Predict from the observed trial even on a partial match.
    #[arg(long)]
    no_transform: bool,
    /// Upper bound on concurrent provider evaluations (0: one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    output: Output,
}

pub fn run(args: SelectArgs) -> Result<ExitCode> {
    let workload = read_workload(&args.workload, args.consumer.as_deref())?;
    let trials: TrialDocument = read_json(&args.trial_observations)?;
    let fingerprints: Vec<PerformanceFingerprint> = read_json(&args.fingerprints)?;
    let requirements = read_requirements(&args.requirements)?;
    if fingerprints.is_empty() {
        bail!("{}: no fingerprints", args.fingerprints.display());
    }

    let mut by_id = BTreeMap::new();
    for fp in fingerprints {
        let id = fp.provider_id().to_owned();
        if by_id.insert(id.clone(), fp).is_some() {
            bail!("{}: provider `{id}` listed twice", args.fingerprints.display());
        }
    }

    let mut inputs = Vec::new();
    let mut unmatched = Vec::new();
    for doc in &trials.providers {
        let (trial, levels) = doc
            .to_experience(trials.window_start, trials.stable_period)
            .with_context(|| format!("{}: provider `{}`", args.trial_observations.display(), doc.provider_id))?;
        match by_id.remove(&doc.provider_id) {
            Some(fingerprint) => inputs.push(ProviderTrial { fingerprint, trial, levels }),
            None => unmatched.push(Exclusion {
                provider_id: doc.provider_id.clone(),
                reason: "no fingerprint".into(),
            }),
        }
    }
    unmatched.extend(by_id.into_keys().map(|provider_id| Exclusion {
        provider_id,
        reason: "no trial observations".into(),
    }));

    let options = SelectionOptions {
        thresholds: Thresholds { correlation: args.r_threshold, nrmse: args.e_threshold },
        aggregation: trials.aggregation.clone(),
        normalize_distance: !args.raw_distance,
        transform: if args.no_transform { TransformPolicy::Never } else { TransformPolicy::OnPartialMatch },
        ..Default::default()
    };
    let selection = select_providers(&workload, &requirements, &inputs, &options, args.jobs)?;

    let mut excluded = selection.report.excluded.clone();
    excluded.extend(unmatched);
    excluded.sort_by(|a, b| a.provider_id.cmp(&b.provider_id));
    for e in &excluded {
        log::warn!("excluded `{}`: {}", e.provider_id, e.reason);
    }
    let document = SelectionDocument {
        thresholds: options.thresholds,
        normalize_distance: options.normalize_distance,
        transform: options.transform,
        providers: selection
            .outcomes
            .values()
            .map(|o| ProviderDiagnostics {
                provider_id: o.provider_id.clone(),
                confidence: o.confidence.clone(),
                transformed: o.transformed,
                warnings: o.prediction.warnings.clone(),
            })
            .collect(),
        ranking: selection.report.ranking.clone(),
        excluded,
    };

    let dir = &args.output.dir;
    write_json(&dir.join("selection_report.json"), &document)?;
    write_ranking(&dir.join("ranking.csv"), &document.ranking)?;
    match document.ranking.first() {
        Some(best) => println!("best provider: {} (distance {})", best.provider_id, best.total_distance),
        None => println!("no provider could be ranked"),
    }
    Ok(ExitCode::SUCCESS)
}
