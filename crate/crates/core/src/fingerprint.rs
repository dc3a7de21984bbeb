//! Provider performance fingerprints, trial experience aggregation, the
//! (correlation, NRMSE) confidence pair and the midpoint transformation applied
//! to trial experiences that only partially match a fingerprint.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{mean, nrmse, pearson, TimeSeries};

/// Average per-QoS performance of one provider over a reference period
/// `[1, period]`. A fingerprint may have gaps, in which case it is partial.
///
/// JSON form: `{"provider_id": .., "period_T": .., "qos": {"name": [[tick, value], ..]}}`
/// with ticks ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FingerprintDocument", into = "FingerprintDocument")]
pub struct PerformanceFingerprint {
    provider_id: String,
    period: u64,
    qos: BTreeMap<String, BTreeMap<u64, f64>>,
}

#[derive(Serialize, Deserialize)]
struct FingerprintDocument {
    provider_id: String,
    #[serde(rename = "period_T")]
    period: u64,
    qos: BTreeMap<String, Vec<(u64, f64)>>,
}

impl TryFrom<FingerprintDocument> for PerformanceFingerprint {
    type Error = Error;

    fn try_from(doc: FingerprintDocument) -> Result<Self> {
        PerformanceFingerprint::new(doc.provider_id, doc.period, doc.qos)
    }
}

impl From<PerformanceFingerprint> for FingerprintDocument {
    fn from(fp: PerformanceFingerprint) -> Self {
        FingerprintDocument {
            provider_id: fp.provider_id,
            period: fp.period,
            qos: fp.qos.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state")]
pub enum Completeness {
    Complete,
    Partial { missing: BTreeMap<String, Vec<u64>> },
}

impl PerformanceFingerprint {
    pub fn new(
        provider_id: impl Into<String>,
        period: u64,
        qos: BTreeMap<String, Vec<(u64, f64)>>,
    ) -> Result<Self> {
        let provider_id = provider_id.into();
        if period == 0 {
            return Err(Error::invalid("fingerprint period must be >= 1"));
        }
        if qos.is_empty() {
            return Err(Error::invalid(format!("fingerprint `{provider_id}` has no QoS")));
        }
        let mut checked = BTreeMap::new();
        for (name, points) in qos {
            if points.is_empty() {
                return Err(Error::invalid(format!("QoS `{name}` has no points")));
            }
            let mut series = BTreeMap::new();
            for (tick, value) in points {
                if tick == 0 || tick > period {
                    return Err(Error::invalid(format!(
                        "QoS `{name}`: tick {tick} outside [1, {period}]"
                    )));
                }
                if !value.is_finite() {
                    return Err(Error::invalid(format!("QoS `{name}`: non-finite value at tick {tick}")));
                }
                if series.insert(tick, value).is_some() {
                    return Err(Error::invalid(format!("QoS `{name}`: duplicate tick {tick}")));
                }
            }
            checked.insert(name, series);
        }
        Ok(PerformanceFingerprint { provider_id, period, qos: checked })
    }

    /// Builds a fingerprint from series whose ticks lie in `[1, period]`.
    pub fn from_series(
        provider_id: impl Into<String>,
        period: u64,
        series: &BTreeMap<String, TimeSeries>,
    ) -> Result<Self> {
        let qos = series.iter().map(|(name, s)| (name.clone(), s.points().collect())).collect();
        PerformanceFingerprint::new(provider_id, period, qos)
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn qos_names(&self) -> impl Iterator<Item = &str> {
        self.qos.keys().map(String::as_str)
    }

    pub fn has_qos(&self, qos: &str) -> bool {
        self.qos.contains_key(qos)
    }

    pub fn points(&self, qos: &str) -> Option<impl Iterator<Item = (u64, f64)> + '_> {
        self.qos.get(qos).map(|m| m.iter().map(|(t, v)| (*t, *v)))
    }

    pub fn completeness(&self) -> Completeness {
        let missing: BTreeMap<String, Vec<u64>> = self
            .qos
            .iter()
            .filter(|(_, points)| points.len() as u64 != self.period)
            .map(|(name, points)| {
                let gaps = (1..=self.period).filter(|t| !points.contains_key(t)).collect();
                (name.clone(), gaps)
            })
            .collect();
        if missing.is_empty() {
            Completeness::Complete
        } else {
            Completeness::Partial { missing }
        }
    }

    pub fn is_complete(&self) -> bool {
        self.completeness() == Completeness::Complete
    }

    /// Value at `tick`, linearly interpolated across gaps inside the covered
    /// range. Ticks before the first or after the last known point are not
    /// covered.
    pub fn value_at(&self, qos: &str, tick: u64) -> Result<f64> {
        let points = self.qos.get(qos).ok_or_else(|| Error::MissingQos(qos.to_owned()))?;
        if let Some(v) = points.get(&tick) {
            return Ok(*v);
        }
        let gap = || Error::FingerprintGap { qos: qos.to_owned(), tick };
        let (t0, v0) = points.range(..tick).next_back().ok_or_else(gap)?;
        let (t1, v1) = points.range(tick..).next().ok_or_else(gap)?;
        let frac = (tick - t0) as f64 / (t1 - t0) as f64;
        Ok(v0 + (v1 - v0) * frac)
    }

    /// Unit-step series over `ticks`, gaps interpolated.
    pub fn series(&self, qos: &str, ticks: RangeInclusive<u64>) -> Result<TimeSeries> {
        let start = *ticks.start();
        let values = ticks.map(|t| self.value_at(qos, t)).collect::<Result<Vec<_>>>()?;
        TimeSeries::new(start, 1, values)
    }

    /// Fingerprint values on an observation grid. An observation at tick `s`
    /// with step `d` stands for the period `[s, s + d - 1]`, so the fingerprint
    /// is averaged over that period.
    pub fn reference_on(&self, qos: &str, grid: &TimeSeries) -> Result<TimeSeries> {
        let d = grid.step();
        let values = grid
            .ticks()
            .map(|s| {
                let period = (s..s + d).map(|t| self.value_at(qos, t)).collect::<Result<Vec<_>>>()?;
                Ok(mean(&period))
            })
            .collect::<Result<Vec<_>>>()?;
        grid.with_values(values)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        for points in out.qos.values_mut() {
            for v in points.values_mut() {
                *v *= alpha;
            }
        }
        out
    }

    /// Copy with the given ticks removed from every QoS, e.g. to model a
    /// provider that did not publish part of its history.
    pub fn without_ticks(&self, ticks: RangeInclusive<u64>) -> Result<Self> {
        let mut out = self.clone();
        for (name, points) in out.qos.iter_mut() {
            points.retain(|t, _| !ticks.contains(t));
            if points.is_empty() {
                return Err(Error::invalid(format!("removing {ticks:?} empties QoS `{name}`")));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    #[default]
    Sum,
    Mean,
}

/// Per-QoS choice of how VM observations are combined.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregation {
    #[serde(default)]
    pub default: AggregationMode,
    #[serde(default)]
    pub per_qos: BTreeMap<String, AggregationMode>,
}

impl Aggregation {
    pub fn uniform(mode: AggregationMode) -> Self {
        Aggregation { default: mode, per_qos: BTreeMap::new() }
    }

    pub fn mode_for(&self, qos: &str) -> AggregationMode {
        self.per_qos.get(qos).copied().unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedSeries {
    pub mode: AggregationMode,
    pub series: TimeSeries,
}

/// First and last tick covered by a trial experience.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialWindow {
    pub start: u64,
    pub end: u64,
}

impl TrialWindow {
    pub fn len(&self) -> u64 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }
}

/// Per-VM, per-QoS trial observations plus, once aggregated, the cross-VM
/// series per QoS. All series share one grid: the trial window sampled every
/// stable period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialExperience {
    per_vm: Vec<BTreeMap<String, TimeSeries>>,
    aggregated: BTreeMap<String, AggregatedSeries>,
}

impl TrialExperience {
    pub fn new(per_vm: Vec<BTreeMap<String, TimeSeries>>) -> Result<Self> {
        let first = per_vm.first().ok_or_else(|| Error::invalid("trial has no VMs"))?;
        let (_, reference) =
            first.iter().next().ok_or_else(|| Error::invalid("trial VM 0 observed no QoS"))?;
        for (vm, observations) in per_vm.iter().enumerate() {
            if !observations.keys().eq(first.keys()) {
                return Err(Error::invalid(format!("VM {vm} observed a different QoS set than VM 0")));
            }
            for (name, series) in observations {
                if !series.same_grid(reference) {
                    return Err(Error::invalid(format!(
                        "VM {vm}, QoS `{name}`: series not aligned with the trial window"
                    )));
                }
            }
        }
        Ok(TrialExperience { per_vm, aggregated: BTreeMap::new() })
    }

    pub fn vm_count(&self) -> usize {
        self.per_vm.len()
    }

    pub fn qos_names(&self) -> impl Iterator<Item = &str> {
        self.per_vm[0].keys().map(String::as_str)
    }

    pub fn per_vm(&self) -> &[BTreeMap<String, TimeSeries>] {
        &self.per_vm
    }

    pub fn observation(&self, vm: usize, qos: &str) -> Option<&TimeSeries> {
        self.per_vm.get(vm)?.get(qos)
    }

    pub fn aggregated(&self, qos: &str) -> Option<&TimeSeries> {
        self.aggregated.get(qos).map(|a| &a.series)
    }

    pub fn aggregated_all(&self) -> &BTreeMap<String, AggregatedSeries> {
        &self.aggregated
    }

    pub fn is_aggregated(&self) -> bool {
        self.qos_names().all(|q| self.aggregated.contains_key(q))
    }

    fn grid(&self) -> &TimeSeries {
        self.per_vm[0].values().next().expect("validated non-empty")
    }

    pub fn stable_period(&self) -> u64 {
        self.grid().step()
    }

    pub fn window(&self) -> TrialWindow {
        let grid = self.grid();
        TrialWindow { start: grid.start(), end: grid.last_tick() + grid.step() - 1 }
    }

    fn aggregated_series(&self, qos: &str) -> Result<&AggregatedSeries> {
        self.aggregated.get(qos).ok_or_else(|| Error::NotAggregated(qos.to_owned()))
    }
}

/// Combines the VM series of every QoS tick by tick.
pub fn aggregate_trial(experience: &TrialExperience, aggregation: &Aggregation) -> TrialExperience {
    let grid = experience.grid();
    let vms = experience.vm_count() as f64;
    let aggregated = experience
        .qos_names()
        .map(|qos| {
            let mode = aggregation.mode_for(qos);
            let mut values = vec![0.0; grid.len()];
            for vm in &experience.per_vm {
                for (acc, v) in values.iter_mut().zip(vm[qos].values()) {
                    *acc += v;
                }
            }
            if mode == AggregationMode::Mean {
                values.iter_mut().for_each(|v| *v /= vms);
            }
            let series = grid.with_values(values).expect("same length as grid");
            (qos.to_owned(), AggregatedSeries { mode, series })
        })
        .collect();
    TrialExperience { per_vm: experience.per_vm.clone(), aggregated }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Minimum mean correlation `R_t`.
    pub correlation: f64,
    /// Maximum mean NRMSE `E_t`.
    pub nrmse: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { correlation: 0.5, nrmse: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    FullMatch,
    PartialMatch,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::FullMatch => "full_match",
            Verdict::PartialMatch => "partial_match",
        }
    }
}

/// The confidence pair of a trial experience against a fingerprint. Kept as a
/// pair: the two components are never folded into one number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceScore {
    pub mean_correlation: f64,
    pub mean_nrmse: f64,
    pub per_qos_correlation: BTreeMap<String, f64>,
    pub per_qos_nrmse: BTreeMap<String, f64>,
    /// QoS whose correlation was undefined (a flat series) and recorded as 0.
    #[serde(default)]
    pub degenerate_qos: Vec<String>,
    pub verdict: Verdict,
}

impl ConfidenceScore {
    pub fn from_parts(
        per_qos_correlation: BTreeMap<String, f64>,
        per_qos_nrmse: BTreeMap<String, f64>,
        degenerate_qos: Vec<String>,
        thresholds: Thresholds,
    ) -> Self {
        let avg = |m: &BTreeMap<String, f64>| m.values().sum::<f64>() / m.len() as f64;
        let mean_correlation = avg(&per_qos_correlation);
        let mean_nrmse = avg(&per_qos_nrmse);
        let verdict =
            if mean_correlation >= thresholds.correlation && mean_nrmse <= thresholds.nrmse {
                Verdict::FullMatch
            } else {
                Verdict::PartialMatch
            };
        ConfidenceScore {
            mean_correlation,
            mean_nrmse,
            per_qos_correlation,
            per_qos_nrmse,
            degenerate_qos,
            verdict,
        }
    }
}

/// Scores an aggregated trial experience against the fingerprint over the
/// trial window.
pub fn match_fingerprint(
    experience: &TrialExperience,
    fp: &PerformanceFingerprint,
    thresholds: Thresholds,
) -> Result<ConfidenceScore> {
    let mut correlation = BTreeMap::new();
    let mut distance = BTreeMap::new();
    let mut degenerate = Vec::new();
    for qos in experience.qos_names() {
        let trial = &experience.aggregated_series(qos)?.series;
        let reference = fp.reference_on(qos, trial)?;
        let r = match pearson(trial, &reference) {
            Ok(r) => r,
            Err(Error::DegenerateCorrelation) => {
                degenerate.push(qos.to_owned());
                0.0
            }
            Err(e) => return Err(e),
        };
        correlation.insert(qos.to_owned(), r);
        distance.insert(qos.to_owned(), nrmse(trial, &reference)?);
    }
    Ok(ConfidenceScore::from_parts(correlation, distance, degenerate, thresholds))
}

fn midpoint(series: &TimeSeries, target: &TimeSeries) -> TimeSeries {
    let values = series.values().iter().zip(target.values()).map(|(q, f)| q + (f - q) / 2.0).collect();
    series.with_values(values).expect("same grid")
}

/// Moves the trial experience halfway towards the fingerprint.
///
/// The aggregated series become `q + (F - q) / 2`. Each VM series moves
/// halfway towards its share of the fingerprint (`F` for mean aggregation,
/// `F / v` for sum), so re-aggregating the transformed VMs reproduces the
/// transformed aggregate.
pub fn transform_experience(
    experience: &TrialExperience,
    fp: &PerformanceFingerprint,
) -> Result<TrialExperience> {
    let vms = experience.vm_count() as f64;
    let mut out = experience.clone();
    for qos in experience.qos_names() {
        let aggregated = experience.aggregated_series(qos)?;
        let reference = fp.reference_on(qos, &aggregated.series)?;
        let share = match aggregated.mode {
            AggregationMode::Mean => reference.clone(),
            AggregationMode::Sum => reference.map(|f| f / vms)?,
        };
        for vm in out.per_vm.iter_mut() {
            let moved = midpoint(&vm[qos], &share);
            vm.insert(qos.to_owned(), moved);
        }
        out.aggregated.insert(
            qos.to_owned(),
            AggregatedSeries { mode: aggregated.mode, series: midpoint(&aggregated.series, &reference) },
        );
    }
    Ok(out)
}

/// Applies [`transform_experience`] `times` times; each pass halves every
/// remaining gap to the fingerprint.
pub fn transform_experience_times(
    experience: &TrialExperience,
    fp: &PerformanceFingerprint,
    times: usize,
) -> Result<TrialExperience> {
    let mut out = experience.clone();
    for _ in 0..times {
        out = transform_experience(&out, fp)?;
    }
    Ok(out)
}
