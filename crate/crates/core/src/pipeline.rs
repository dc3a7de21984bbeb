//! End-to-end evaluation of candidate providers: aggregate the trial, match
//! it against the fingerprint, transform it on a partial match, predict the
//! long-term performance and rank.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{
    aggregate_trial, match_fingerprint, transform_experience, Aggregation, ConfidenceScore,
    PerformanceFingerprint, Thresholds, TrialExperience, Verdict,
};
use crate::predictor::{predict_from_levels, PredictedPerformance, ZeroWeightPolicy};
use crate::selector::{rank_providers, ConsumerRequirements, Exclusion, SelectionReport};
use crate::trialplan::LongTermWorkload;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformPolicy {
    /// Transform once when the verdict is a partial match.
    #[default]
    OnPartialMatch,
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOptions {
    pub thresholds: Thresholds,
    pub aggregation: Aggregation,
    pub normalize_distance: bool,
    pub zero_weight: ZeroWeightPolicy,
    pub transform: TransformPolicy,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        SelectionOptions {
            thresholds: Thresholds::default(),
            aggregation: Aggregation::default(),
            normalize_distance: true,
            zero_weight: ZeroWeightPolicy::default(),
            transform: TransformPolicy::default(),
        }
    }
}

/// Raw trial observations of one provider with the workload level each VM ran.
#[derive(Debug, Clone)]
pub struct ProviderTrial {
    pub fingerprint: PerformanceFingerprint,
    pub trial: TrialExperience,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ProviderOutcome {
    pub provider_id: String,
    pub confidence: ConfidenceScore,
    pub transformed: bool,
    pub prediction: PredictedPerformance,
}

pub fn evaluate_provider(
    workload: &LongTermWorkload,
    input: &ProviderTrial,
    options: &SelectionOptions,
) -> Result<ProviderOutcome> {
    let provider = input.fingerprint.provider_id();
    let aggregated = aggregate_trial(&input.trial, &options.aggregation);
    let confidence = match_fingerprint(&aggregated, &input.fingerprint, options.thresholds)
        .map_err(|e| e.in_stage(provider, "fingerprint matching"))?;
    let transformed = options.transform == TransformPolicy::OnPartialMatch
        && confidence.verdict == Verdict::PartialMatch;
    let experience = if transformed {
        transform_experience(&aggregated, &input.fingerprint)
            .map_err(|e| e.in_stage(provider, "trial transformation"))?
    } else {
        aggregated
    };
    let prediction =
        predict_from_levels(workload, &experience, &input.levels, &input.fingerprint, options.zero_weight)
            .map_err(|e| e.in_stage(provider, "prediction"))?;
    Ok(ProviderOutcome { provider_id: provider.to_owned(), confidence, transformed, prediction })
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub outcomes: BTreeMap<String, ProviderOutcome>,
    pub report: SelectionReport,
}

/// Evaluates every provider on up to `jobs` threads and ranks the ones that
/// could be evaluated. Failing providers end up in `report.excluded`.
pub fn select_providers(
    workload: &LongTermWorkload,
    requirements: &ConsumerRequirements,
    inputs: &[ProviderTrial],
    options: &SelectionOptions,
    jobs: usize,
) -> Result<Selection> {
    let results: Vec<Result<ProviderOutcome>> =
        run_bounded(jobs, || inputs.par_iter().map(|i| evaluate_provider(workload, i, options)).collect())?;

    let mut outcomes = BTreeMap::new();
    let mut failures = Vec::new();
    for (input, result) in inputs.iter().zip(results) {
        let provider_id = input.fingerprint.provider_id().to_owned();
        if outcomes.contains_key(&provider_id) {
            return Err(Error::invalid(format!("provider `{provider_id}` listed twice")));
        }
        match result {
            Ok(outcome) => {
                outcomes.insert(provider_id, outcome);
            }
            Err(e) => failures.push(Exclusion { provider_id, reason: e.to_string() }),
        }
    }

    let predictions: BTreeMap<String, PredictedPerformance> =
        outcomes.iter().map(|(id, o)| (id.clone(), o.prediction.clone())).collect();
    let mut report = rank_providers(requirements, &predictions, options.normalize_distance);
    let confidences: BTreeMap<String, ConfidenceScore> =
        outcomes.iter().map(|(id, o)| (id.clone(), o.confidence.clone())).collect();
    report.attach_confidence(&confidences);
    report.excluded.extend(failures);
    report.excluded.sort_by(|a, b| a.provider_id.cmp(&b.provider_id));
    Ok(Selection { outcomes, report })
}

/// Runs `f` inside a thread pool of `jobs` workers (0 means rayon's default).
pub(crate) fn run_bounded<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}
