//! Desk-scale experiment harness.
//!
//! Consumers' workloads come from a trace file or a synthetic generator. Each
//! provider is a [`SyntheticProvider`]: a base performance curve, a linear
//! response to workload, gaussian noise and an offset that only shows up while
//! the consumer is on a trial. Fingerprints are the cross-consumer mean of the
//! providers' observed long-term performance, and the full selection pipeline
//! is run for one "new" consumer against every provider, with and without the
//! trial transformation.
//!
//! Everything random is driven by ChaCha8 streams derived from the config
//! seed, so a config fully determines the report.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs::File;
use std::io::BufReader;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{
    aggregate_trial, match_fingerprint, transform_experience, Aggregation, AggregationMode,
    ConfidenceScore, PerformanceFingerprint, Thresholds, TrialExperience, Verdict,
};
use crate::pipeline::run_bounded;
use crate::predictor::{predict_long_term, PredictedPerformance, ZeroWeightPolicy};
use crate::selector::{rank_providers, ConsumerRequirements, SelectionReport};
use crate::table::read_table;
use crate::timeseries::{mean, nrmse, paa_compress, LossBudget, TimeSeries};
use crate::trialplan::{build_trial_plan, LongTermWorkload, TrialConstraints, TrialPlan};

// Stream tags for seed derivation.
const TRACE_STREAM: u64 = 1;
const REPLICATION_STREAM: u64 = 2;
const GROUND_TRUTH_STREAM: u64 = 3;
const TRIAL_STREAM: u64 = 4;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stable 64-bit FNV-1a of a provider id.
fn id_hash(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(seed), |acc, p| splitmix64(acc ^ p))
}

fn rng_for(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

/// Shape and behaviour of one QoS parameter of a synthetic provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosProfile {
    pub level: f64,
    /// Amplitude of a sine spanning the whole horizon.
    #[serde(default)]
    pub seasonal_amplitude: f64,
    /// Amplitude of a 7-tick sine.
    #[serde(default)]
    pub weekly_amplitude: f64,
    /// Shift of the seasonal sine, in ticks.
    #[serde(default)]
    pub phase: f64,
    /// Performance shift per unit of workload above the trace mean.
    #[serde(default)]
    pub sensitivity: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Offset seen only during a trial.
    #[serde(default)]
    pub trial_bias: f64,
}

impl QosProfile {
    fn base(&self, tick: u64, horizon: u64) -> f64 {
        let t = (tick - 1) as f64;
        self.level
            + self.seasonal_amplitude * (TAU * (t + self.phase) / horizon as f64).sin()
            + self.weekly_amplitude * (TAU * t / 7.0).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub id: String,
    pub qos: BTreeMap<String, QosProfile>,
}

impl ProviderSpec {
    pub fn synthesize(&self, horizon: u64) -> Result<SyntheticProvider> {
        let base = self
            .qos
            .iter()
            .map(|(name, profile)| {
                let values = (1..=horizon).map(|t| profile.base(t, horizon)).collect();
                Ok((name.clone(), TimeSeries::from_values(values)?))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        let pick = |f: fn(&QosProfile) -> f64| -> BTreeMap<String, f64> {
            self.qos.iter().map(|(k, p)| (k.clone(), f(p))).collect()
        };
        SyntheticProvider::new(
            PerformanceFingerprint::from_series(&self.id, horizon, &base)?,
            pick(|p| p.sensitivity),
            pick(|p| p.noise_sigma),
            pick(|p| p.trial_bias),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProvider {
    base_fingerprint: PerformanceFingerprint,
    workload_sensitivity: BTreeMap<String, f64>,
    noise_sigma: BTreeMap<String, f64>,
    trial_isolation_bias: BTreeMap<String, f64>,
}

impl SyntheticProvider {
    pub fn new(
        base_fingerprint: PerformanceFingerprint,
        workload_sensitivity: BTreeMap<String, f64>,
        noise_sigma: BTreeMap<String, f64>,
        trial_isolation_bias: BTreeMap<String, f64>,
    ) -> Result<Self> {
        if !base_fingerprint.is_complete() {
            return Err(Error::invalid("synthetic provider needs a complete base fingerprint"));
        }
        for (qos, sigma) in &noise_sigma {
            if !(sigma.is_finite() && *sigma >= 0.0) {
                return Err(Error::invalid(format!("noise_sigma for `{qos}` must be >= 0")));
            }
        }
        for map in [&workload_sensitivity, &noise_sigma, &trial_isolation_bias] {
            if let Some(q) = map.keys().find(|q| !base_fingerprint.has_qos(q)) {
                return Err(Error::invalid(format!("parameter given for unknown QoS `{q}`")));
            }
        }
        Ok(SyntheticProvider { base_fingerprint, workload_sensitivity, noise_sigma, trial_isolation_bias })
    }

    pub fn provider_id(&self) -> &str {
        self.base_fingerprint.provider_id()
    }

    pub fn base_fingerprint(&self) -> &PerformanceFingerprint {
        &self.base_fingerprint
    }
}

/// Performance a provider delivers for a workload series.
///
/// ```text
/// value(q, t) = base(q, t) + sensitivity(q) * (workload(t) - reference_level)
///             + N(0, sigma(q)) [+ trial_bias(q) during a trial]
/// ```
///
/// `base` is read cyclically over the fingerprint period. The noise draw depends only on `(provider, seed)`, so
/// the trial and non-trial observations for one seed differ exactly by the
/// bias.
pub fn observe_performance(
    provider: &SyntheticProvider,
    workload: &TimeSeries,
    reference_level: f64,
    in_trial: bool,
    seed: u64,
) -> Result<BTreeMap<String, TimeSeries>> {
    let fp = &provider.base_fingerprint;
    let period = fp.period();
    let mut rng = rng_for(seed, &[id_hash(provider.provider_id())]);
    fp.qos_names()
        .map(|qos| {
            let sensitivity = provider.workload_sensitivity.get(qos).copied().unwrap_or(0.0);
            let sigma = provider.noise_sigma.get(qos).copied().unwrap_or(0.0);
            let bias = if in_trial { provider.trial_isolation_bias.get(qos).copied().unwrap_or(0.0) } else { 0.0 };
            let noise = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
            let values = workload
                .points()
                .map(|(tick, w)| {
                    let base = fp.value_at(qos, (tick - 1) % period + 1)?;
                    let eps = if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    Ok(base + sensitivity * (w - reference_level) + eps + bias)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((qos.to_owned(), workload.with_values(values)?))
        })
        .collect()
}

/// Concatenates `months` copies of `month`, each value multiplied by an
/// independent factor drawn uniformly from `[1 - jitter, 1 + jitter]`.
pub fn replicate_months(month: &TimeSeries, months: usize, jitter: f64, seed: u64) -> Result<TimeSeries> {
    if months == 0 {
        return Err(Error::invalid("months must be >= 1"));
    }
    if !(0.0..1.0).contains(&jitter) {
        return Err(Error::invalid(format!("jitter must lie in [0, 1), got {jitter}")));
    }
    let mut rng = rng_for(seed, &[REPLICATION_STREAM]);
    let mut values = Vec::with_capacity(month.len() * months);
    for _ in 0..months {
        for &v in month.values() {
            let factor = if jitter > 0.0 { rng.random_range(1.0 - jitter..=1.0 + jitter) } else { 1.0 };
            values.push(v * factor);
        }
    }
    TimeSeries::new(month.start(), month.step(), values)
}

/// Per-tick mean of the observations of several consumers.
pub fn build_fingerprint_from_observations(
    provider_id: &str,
    period: u64,
    observations: &[BTreeMap<String, TimeSeries>],
) -> Result<PerformanceFingerprint> {
    let first = observations.first().ok_or_else(|| Error::invalid("no consumer observations"))?;
    let mut per_qos = BTreeMap::new();
    for (qos, reference) in first {
        let columns = observations
            .iter()
            .enumerate()
            .map(|(c, obs)| {
                let s = obs.get(qos).ok_or_else(|| Error::invalid(format!("consumer {c} lacks QoS `{qos}`")))?;
                if !s.same_grid(reference) {
                    return Err(Error::invalid(format!("consumer {c}: `{qos}` horizon differs from consumer 0")));
                }
                Ok(s.values())
            })
            .collect::<Result<Vec<_>>>()?;
        let values: Vec<f64> = (0..reference.len())
            .map(|i| mean(&columns.iter().map(|col| col[i]).collect::<Vec<_>>()))
            .collect();
        per_qos.insert(qos.clone(), reference.with_values(values)?);
    }
    if observations.iter().any(|o| o.len() != first.len()) {
        return Err(Error::invalid("consumers observed different QoS sets"));
    }
    PerformanceFingerprint::from_series(provider_id, period, &per_qos)
}

/// Which columns of a trace file become workloads.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    /// Column names to keep, in order. All consumer columns when absent.
    #[serde(default)]
    pub columns: Option<Vec<String>>,
    /// Minimum number of ticks the trace must hold.
    #[serde(default)]
    pub min_length: usize,
}

/// Reads a `tick,consumer_1,...` CSV trace into one workload per consumer
/// column.
pub fn ingest_trace(path: &Path, spec: &ColumnSpec) -> Result<Vec<(String, LongTermWorkload)>> {
    let file = File::open(path)?;
    let table = read_table(BufReader::new(file))?;
    let found = table[0].1.len();
    if found < spec.min_length {
        return Err(Error::ShortTrace { required: spec.min_length, found });
    }
    let selected: Vec<(String, TimeSeries)> = match &spec.columns {
        None => table,
        Some(names) => {
            let mut by_name: BTreeMap<String, TimeSeries> = table.into_iter().collect();
            names
                .iter()
                .map(|n| {
                    by_name
                        .remove(n)
                        .map(|s| (n.clone(), s))
                        .ok_or_else(|| Error::invalid(format!("trace has no column `{n}`")))
                })
                .collect::<Result<_>>()?
        }
    };
    selected
        .into_iter()
        .map(|(name, series)| {
            let workload = LongTermWorkload::new(series)
                .map_err(|e| Error::invalid(format!("column `{name}`: {e}")))?;
            Ok((name, workload))
        })
        .collect()
}

/// Parameters of the built-in workload generator. One month per consumer is
/// generated and then replicated across the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTrace {
    pub month_length: u64,
    pub base_level: f64,
    /// Consumers' mean levels spread uniformly over `base_level * (1 ± level_spread)`.
    pub level_spread: f64,
    /// Relative amplitude of the weekly cycle.
    pub weekly_amplitude: f64,
    /// Relative amplitude of uniform day-to-day noise.
    pub daily_noise: f64,
}

impl Default for SyntheticTrace {
    fn default() -> Self {
        SyntheticTrace {
            month_length: 30,
            base_level: 50.0,
            level_spread: 0.4,
            weekly_amplitude: 0.2,
            daily_noise: 0.1,
        }
    }
}

impl SyntheticTrace {
    fn month(&self, rng: &mut ChaCha8Rng) -> Result<TimeSeries> {
        let level = self.base_level * (1.0 + self.level_spread * rng.random_range(-1.0..=1.0));
        let shift = rng.random_range(0.0..7.0);
        let values = (0..self.month_length)
            .map(|t| {
                let weekly = self.weekly_amplitude * (TAU * (t as f64 + shift) / 7.0).sin();
                let daily = self.daily_noise * rng.random_range(-1.0..=1.0);
                (level * (1.0 + weekly + daily)).max(0.0)
            })
            .collect();
        TimeSeries::from_values(values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceSource {
    Synthetic(SyntheticTrace),
    File {
        path: PathBuf,
        #[serde(default)]
        columns: Option<Vec<String>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickRange {
    pub first: u64,
    pub last: u64,
}

impl TickRange {
    pub fn to_range(self) -> RangeInclusive<u64> {
        self.first..=self.last
    }
}

fn default_jitter() -> f64 {
    0.05
}

fn default_true() -> bool {
    true
}

fn default_aggregation() -> Aggregation {
    Aggregation::uniform(AggregationMode::Mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub rng_seed: u64,
    pub consumer_count: usize,
    /// Index of the consumer whose trial is simulated; the others define the
    /// fingerprints.
    #[serde(default)]
    pub new_consumer: usize,
    pub horizon: u64,
    pub trial_length: u64,
    pub vm_count: usize,
    pub stable_period: u64,
    pub slots_per_period: usize,
    pub loss_budget: LossBudget,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default = "default_aggregation")]
    pub aggregation: Aggregation,
    #[serde(default = "default_jitter")]
    pub replication_jitter: f64,
    #[serde(default = "default_true")]
    pub normalize_distance: bool,
    #[serde(default)]
    pub zero_weight: ZeroWeightPolicy,
    /// Provider whose ground truth becomes the consumer's requirements.
    pub designated_provider: String,
    /// Fingerprint ticks withheld from every provider, producing partial
    /// fingerprints.
    #[serde(default)]
    pub withheld_ticks: Vec<TickRange>,
    pub trace: TraceSource,
    pub providers: Vec<ProviderSpec>,
}

impl ExperimentConfig {
    /// Ten-provider, ten-consumer, one-year setup with a 30-day trial on 12
    /// VMs. Providers share three QoS (throughput, insert and read latency) and
    /// are spaced so that each one is distinguishable from its neighbours.
    pub fn desk_scale(provider_count: usize, rng_seed: u64) -> Self {
        let providers = (0..provider_count)
            .map(|i| {
                let f = i as f64;
                let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
                let spread = 1.0 + 0.15 * (i % 3) as f64;
                let qos = |level: f64, seasonal: f64, weekly: f64, sensitivity: f64, bias: f64| QosProfile {
                    level,
                    seasonal_amplitude: seasonal,
                    weekly_amplitude: weekly,
                    phase: 37.0 * f,
                    sensitivity,
                    // 5% of the nominal range 2 * (seasonal + weekly)
                    noise_sigma: 0.05 * 2.0 * (seasonal + weekly),
                    trial_bias: bias,
                };
                let mut profiles = BTreeMap::new();
                profiles.insert("throughput".into(), qos(1000.0 + 120.0 * f, 30.0, 10.0, -0.5, sign * 60.0 * spread));
                profiles.insert("insert_latency".into(), qos(20.0 + 6.0 * f, 1.5, 0.5, 0.05, -sign * 3.0 * spread));
                profiles.insert("read_latency".into(), qos(8.0 + 2.5 * f, 0.6, 0.25, 0.02, -sign * 1.3 * spread));
                ProviderSpec { id: format!("p{:02}", i + 1), qos: profiles }
            })
            .collect();
        ExperimentConfig {
            rng_seed,
            consumer_count: 10,
            new_consumer: 0,
            horizon: 360,
            trial_length: 30,
            vm_count: 12,
            stable_period: 1,
            slots_per_period: 30,
            loss_budget: LossBudget::new(5.0).expect("positive"),
            thresholds: Thresholds::default(),
            aggregation: default_aggregation(),
            replication_jitter: default_jitter(),
            normalize_distance: true,
            zero_weight: ZeroWeightPolicy::default(),
            designated_provider: "p01".into(),
            withheld_ticks: Vec::new(),
            trace: TraceSource::Synthetic(SyntheticTrace::default()),
            providers,
        }
    }

    pub fn constraints(&self) -> TrialConstraints {
        TrialConstraints {
            vm_count: self.vm_count,
            trial_length: self.trial_length,
            stable_period: self.stable_period,
            slots_per_period: self.slots_per_period,
        }
    }

    /// Checks the config; error messages start with the offending field.
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: String| Err(Error::invalid(format!("{name}: {msg}")));
        if let Err(e) = self.constraints().validate() {
            return field("constraints", e.to_string());
        }
        if self.consumer_count < 2 {
            return field("consumer_count", "need at least 2 consumers".into());
        }
        if self.new_consumer >= self.consumer_count {
            return field("new_consumer", format!("must be < consumer_count ({})", self.consumer_count));
        }
        if self.horizon < self.trial_length {
            return field("horizon", format!("shorter than trial_length {}", self.trial_length));
        }
        if self.vm_count as u64 > self.horizon {
            return field("vm_count", format!("exceeds horizon {}", self.horizon));
        }
        if !(0.0..1.0).contains(&self.replication_jitter) {
            return field("replication_jitter", "must lie in [0, 1)".into());
        }
        if let TraceSource::Synthetic(t) = &self.trace {
            if t.month_length == 0 || !self.horizon.is_multiple_of(t.month_length) {
                return field("trace.month_length", format!("must divide horizon {}", self.horizon));
            }
            if t.base_level < 0.0 || !(0.0..=1.0).contains(&t.level_spread) {
                return field("trace", "base_level must be >= 0 and level_spread in [0, 1]".into());
            }
        }
        if self.providers.is_empty() {
            return field("providers", "at least one provider required".into());
        }
        let qos_set: Vec<&String> = self.providers[0].qos.keys().collect();
        if qos_set.is_empty() {
            return field("providers[0].qos", "no QoS defined".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, p) in self.providers.iter().enumerate() {
            if !seen.insert(&p.id) {
                return field(&format!("providers[{i}].id"), format!("duplicate id `{}`", p.id));
            }
            if !p.qos.keys().eq(qos_set.iter().copied()) {
                return field(&format!("providers[{i}].qos"), "QoS set differs from providers[0]".into());
            }
            for (q, profile) in &p.qos {
                if !(profile.noise_sigma.is_finite() && profile.noise_sigma >= 0.0) {
                    return field(&format!("providers[{i}].qos.{q}.noise_sigma"), "must be >= 0".into());
                }
            }
        }
        if !seen.contains(&self.designated_provider) {
            return field("designated_provider", format!("no provider `{}`", self.designated_provider));
        }
        for (i, r) in self.withheld_ticks.iter().enumerate() {
            if r.first == 0 || r.first > r.last || r.last >= self.horizon {
                return field(
                    &format!("withheld_ticks[{i}]"),
                    "needs 1 <= first <= last < horizon so the fingerprint keeps both ends".into(),
                );
            }
        }
        Ok(())
    }

    fn workloads(&self) -> Result<Vec<LongTermWorkload>> {
        let horizon = self.horizon as usize;
        match &self.trace {
            TraceSource::Synthetic(spec) => {
                let mut rng = rng_for(self.rng_seed, &[TRACE_STREAM]);
                let months = (self.horizon / spec.month_length) as usize;
                (0..self.consumer_count)
                    .map(|c| {
                        let month = spec.month(&mut rng)?;
                        let seed = derive_seed(self.rng_seed, &[c as u64]);
                        LongTermWorkload::new(replicate_months(&month, months, self.replication_jitter, seed)?)
                    })
                    .collect()
            }
            TraceSource::File { path, columns } => {
                let spec = ColumnSpec { columns: columns.clone(), min_length: 0 };
                let trace = ingest_trace(path, &spec)?;
                if trace.len() < self.consumer_count {
                    return Err(Error::invalid(format!(
                        "trace has {} consumer columns, consumer_count is {}",
                        trace.len(),
                        self.consumer_count
                    )));
                }
                trace
                    .into_iter()
                    .take(self.consumer_count)
                    .enumerate()
                    .map(|(c, (_, w))| {
                        let s = w.series();
                        let len = s.len();
                        let values = if len >= horizon {
                            s.values()[..horizon].to_vec()
                        } else if horizon.is_multiple_of(len) {
                            let seed = derive_seed(self.rng_seed, &[c as u64]);
                            replicate_months(s, horizon / len, self.replication_jitter, seed)?.into_values()
                        } else {
                            return Err(Error::ShortTrace { required: horizon, found: len });
                        };
                        LongTermWorkload::from_values(values)
                    })
                    .collect()
            }
        }
    }
}

/// Everything the experiment fed into the selection for the new consumer, in
/// the shape the CLI `select` command reads back.
#[derive(Debug, Clone)]
pub struct ExperimentInputs {
    pub workload: LongTermWorkload,
    pub plan: TrialPlan,
    /// Raw, unaggregated trial observations per provider.
    pub trials: BTreeMap<String, TrialExperience>,
    pub fingerprints: BTreeMap<String, PerformanceFingerprint>,
    pub requirements: ConsumerRequirements,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSeries {
    pub actual: BTreeMap<String, TimeSeries>,
    pub predicted_with_transform: BTreeMap<String, TimeSeries>,
    pub predicted_without_transform: BTreeMap<String, TimeSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResult {
    pub provider_id: String,
    pub confidence: ConfidenceScore,
    /// Confidence of the transformed experience, when a transformation ran.
    pub confidence_after_transform: Option<ConfidenceScore>,
    pub transformed: bool,
    pub nrmse_with_transform: f64,
    pub nrmse_without_transform: f64,
    pub per_qos_nrmse_with_transform: BTreeMap<String, f64>,
    pub per_qos_nrmse_without_transform: BTreeMap<String, f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rng_seed: u64,
    pub horizon: u64,
    pub trial_length: u64,
    pub vm_count: usize,
    pub new_consumer: usize,
    pub designated_provider: String,
    pub plan_feasible: bool,
    pub plan_total_loss: f64,
    pub fingerprints_complete: bool,
    pub providers: Vec<ProviderResult>,
    pub mean_nrmse_with_transform: f64,
    pub mean_nrmse_without_transform: f64,
    /// Ranking from the predictions that went through the transformation path.
    pub selection: SelectionReport,
    pub selection_without_transform: SelectionReport,
    /// Distances of each provider's actual performance to the requirements.
    pub actual_distances: SelectionReport,
    pub ground_truth_optimal: String,
    pub optimal_ranked_first: bool,
    pub designated_ranked_first: bool,
}

impl ExperimentReport {
    pub fn provider(&self, id: &str) -> Option<&ProviderResult> {
        self.providers.iter().find(|p| p.provider_id == id)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub series: BTreeMap<String, ProviderSeries>,
    pub inputs: ExperimentInputs,
}

struct ProviderRun {
    result: ProviderResult,
    series: ProviderSeries,
    trial: TrialExperience,
    fingerprint: PerformanceFingerprint,
}

fn mean_of(values: &BTreeMap<String, f64>) -> f64 {
    values.values().sum::<f64>() / values.len() as f64
}

fn prediction_errors(
    predicted: &PredictedPerformance,
    actual: &BTreeMap<String, TimeSeries>,
) -> Result<BTreeMap<String, f64>> {
    predicted
        .per_qos
        .iter()
        .map(|(q, p)| {
            let truth = actual.get(q).ok_or_else(|| Error::MissingQos(q.clone()))?;
            Ok((q.clone(), nrmse(p, truth)?))
        })
        .collect()
}

struct World<'a> {
    config: &'a ExperimentConfig,
    workloads: &'a [LongTermWorkload],
    reference_level: f64,
    plan: &'a TrialPlan,
}

impl World<'_> {
    fn run_provider(&self, spec: &ProviderSpec) -> Result<ProviderRun> {
        let config = self.config;
        let provider = spec.synthesize(config.horizon)?;
        let provider_hash = id_hash(&spec.id);

        let mut truths = self
            .workloads
            .iter()
            .enumerate()
            .map(|(c, w)| {
                let seed = derive_seed(config.rng_seed, &[GROUND_TRUTH_STREAM, c as u64, provider_hash]);
                observe_performance(&provider, w.series(), self.reference_level, false, seed)
            })
            .collect::<Result<Vec<_>>>()?;
        let actual = truths.remove(config.new_consumer);

        let mut fingerprint = build_fingerprint_from_observations(&spec.id, config.horizon, &truths)?;
        for range in &config.withheld_ticks {
            fingerprint = fingerprint.without_ticks(range.to_range())?;
        }

        let per_vm = self
            .plan
            .per_vm
            .iter()
            .enumerate()
            .map(|(vm, class)| {
                let load = TimeSeries::from_values(vec![class.level; config.trial_length as usize])?;
                let seed = derive_seed(config.rng_seed, &[TRIAL_STREAM, vm as u64, provider_hash]);
                let observed = observe_performance(&provider, &load, self.reference_level, true, seed)?;
                observed
                    .into_iter()
                    .map(|(q, s)| Ok((q, paa_compress(&s, config.stable_period as usize)?)))
                    .collect::<Result<BTreeMap<_, _>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let trial = TrialExperience::new(per_vm)?;

        let workload = &self.workloads[config.new_consumer];
        let aggregated = aggregate_trial(&trial, &config.aggregation);
        let confidence = match_fingerprint(&aggregated, &fingerprint, config.thresholds)
            .map_err(|e| e.in_stage(&spec.id, "fingerprint matching"))?;
        let raw = predict_long_term(workload, &aggregated, self.plan, &fingerprint, config.zero_weight)
            .map_err(|e| e.in_stage(&spec.id, "prediction"))?;

        let transformed = confidence.verdict == Verdict::PartialMatch;
        let (with_transform, confidence_after_transform) = if transformed {
            let moved = transform_experience(&aggregated, &fingerprint)
                .map_err(|e| e.in_stage(&spec.id, "trial transformation"))?;
            let after = match_fingerprint(&moved, &fingerprint, config.thresholds)?;
            let prediction = predict_long_term(workload, &moved, self.plan, &fingerprint, config.zero_weight)
                .map_err(|e| e.in_stage(&spec.id, "prediction"))?;
            (prediction, Some(after))
        } else {
            (raw.clone(), None)
        };

        let per_qos_with = prediction_errors(&with_transform, &actual)?;
        let per_qos_without = prediction_errors(&raw, &actual)?;
        let mut warnings = raw.warnings.clone();
        if transformed {
            warnings.extend(with_transform.warnings.iter().cloned());
        }
        let result = ProviderResult {
            provider_id: spec.id.clone(),
            confidence,
            confidence_after_transform,
            transformed,
            nrmse_with_transform: mean_of(&per_qos_with),
            nrmse_without_transform: mean_of(&per_qos_without),
            per_qos_nrmse_with_transform: per_qos_with,
            per_qos_nrmse_without_transform: per_qos_without,
            warnings,
        };
        let series = ProviderSeries {
            actual,
            predicted_with_transform: with_transform.per_qos,
            predicted_without_transform: raw.per_qos,
        };
        Ok(ProviderRun { result, series, trial, fingerprint })
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    run_experiment_with_jobs(config, 1)
}

/// Runs the experiment with provider evaluations spread over at most `jobs`
/// threads (0 lets rayon decide). The outcome does not depend on `jobs`.
pub fn run_experiment_with_jobs(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutcome> {
    config.validate()?;
    let workloads = config.workloads()?;
    let all_values: Vec<f64> = workloads.iter().flat_map(|w| w.series().values().iter().copied()).collect();
    let reference_level = all_values.iter().sum::<f64>() / all_values.len() as f64;
    let workload = workloads[config.new_consumer].clone();
    let plan = build_trial_plan(&workload, &config.constraints(), config.loss_budget)?;

    let world = World { config, workloads: &workloads, reference_level, plan: &plan };
    let runs: Vec<Result<ProviderRun>> =
        run_bounded(jobs, || config.providers.par_iter().map(|p| world.run_provider(p)).collect())?;
    let mut runs = runs
        .into_iter()
        .zip(&config.providers)
        .map(|(r, spec)| r.map_err(|e| if matches!(e, Error::Stage { .. }) { e } else { e.in_stage(&spec.id, "simulation") }))
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by(|a, b| a.result.provider_id.cmp(&b.result.provider_id));

    let designated = runs
        .iter()
        .find(|r| r.result.provider_id == config.designated_provider)
        .expect("validated designated provider");
    let requirements = ConsumerRequirements::new(designated.series.actual.clone())?;

    let as_prediction = |per_qos: &BTreeMap<String, TimeSeries>| PredictedPerformance {
        per_qos: per_qos.clone(),
        provenance: Vec::new(),
        warnings: Vec::new(),
    };
    let collect = |pick: fn(&ProviderSeries) -> &BTreeMap<String, TimeSeries>| -> BTreeMap<String, PredictedPerformance> {
        runs.iter().map(|r| (r.result.provider_id.clone(), as_prediction(pick(&r.series)))).collect()
    };
    let confidences: BTreeMap<String, ConfidenceScore> =
        runs.iter().map(|r| (r.result.provider_id.clone(), r.result.confidence.clone())).collect();

    let mut selection = rank_providers(&requirements, &collect(|s| &s.predicted_with_transform), config.normalize_distance);
    selection.attach_confidence(&confidences);
    let mut selection_without_transform =
        rank_providers(&requirements, &collect(|s| &s.predicted_without_transform), config.normalize_distance);
    selection_without_transform.attach_confidence(&confidences);
    let actual_distances = rank_providers(&requirements, &collect(|s| &s.actual), config.normalize_distance);

    let ground_truth_optimal = actual_distances.winner().map(|s| s.provider_id.clone()).unwrap_or_default();
    let winner = selection.winner().map(|s| s.provider_id.as_str());
    let providers: Vec<ProviderResult> = runs.iter().map(|r| r.result.clone()).collect();
    let provider_count = providers.len() as f64;
    let report = ExperimentReport {
        rng_seed: config.rng_seed,
        horizon: config.horizon,
        trial_length: config.trial_length,
        vm_count: config.vm_count,
        new_consumer: config.new_consumer,
        designated_provider: config.designated_provider.clone(),
        plan_feasible: plan.feasible,
        plan_total_loss: plan.total_loss(),
        fingerprints_complete: runs.iter().all(|r| r.fingerprint.is_complete()),
        mean_nrmse_with_transform: providers.iter().map(|p| p.nrmse_with_transform).sum::<f64>() / provider_count,
        mean_nrmse_without_transform: providers.iter().map(|p| p.nrmse_without_transform).sum::<f64>()
            / provider_count,
        providers,
        optimal_ranked_first: winner == Some(ground_truth_optimal.as_str()),
        designated_ranked_first: winner == Some(config.designated_provider.as_str()),
        ground_truth_optimal,
        selection,
        selection_without_transform,
        actual_distances,
    };

    let mut series = BTreeMap::new();
    let mut trials = BTreeMap::new();
    let mut fingerprints = BTreeMap::new();
    for run in runs {
        let id = run.result.provider_id;
        series.insert(id.clone(), run.series);
        trials.insert(id.clone(), run.trial);
        fingerprints.insert(id, run.fingerprint);
    }
    Ok(ExperimentOutcome {
        report,
        series,
        inputs: ExperimentInputs { workload, plan, trials, fingerprints, requirements },
    })
}
