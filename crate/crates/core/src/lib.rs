//! Trial-based cloud provider selection.
//!
//! A consumer plans a short trial on a few VMs ([`trialplan`]), checks the
//! trial against each provider's long-term fingerprint ([`fingerprint`]),
//! extrapolates to the whole horizon ([`predictor`]) and ranks the providers
//! against its requirements ([`selector`]). [`simharness`] drives the whole
//! chain on synthetic providers.

pub mod error;
pub mod fingerprint;
pub mod pipeline;
pub mod predictor;
pub mod selector;
pub mod simharness;
pub mod table;
pub mod timeseries;
pub mod trialplan;

pub use error::{Error, Result};
pub use fingerprint::{
    aggregate_trial, match_fingerprint, transform_experience, transform_experience_times, AggregatedSeries,
    Aggregation, AggregationMode, Completeness, ConfidenceScore, PerformanceFingerprint, Thresholds,
    TrialExperience, TrialWindow, Verdict,
};
pub use pipeline::{evaluate_provider, select_providers, ProviderOutcome, ProviderTrial, Selection, SelectionOptions, TransformPolicy};
pub use predictor::{
    map_trial_tick, nearest_trial_workload, predict_from_levels, predict_long_term, relative_weight,
    PredictedPerformance, TickProvenance, ZeroWeightPolicy,
};
pub use selector::{qos_distance, rank_providers, ConsumerRequirements, Exclusion, Polarity, ProviderScore, SelectionReport};
pub use simharness::{
    run_experiment, run_experiment_with_jobs, ExperimentConfig, ExperimentOutcome, ExperimentReport, ProviderSpec,
    QosProfile, SyntheticProvider,
};
pub use timeseries::{mae_loss, nrmse, paa_compress, paa_decompress, pearson, rmse, LossBudget, TimeSeries};
pub use trialplan::{
    build_trial_plan, generate_trial_workload, partition_workload, LongTermWorkload, TrialConstraints, TrialPlan,
    TrialWorkload, VmTrial,
};
