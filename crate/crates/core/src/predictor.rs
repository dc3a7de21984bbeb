//! Long-term performance discovery.
//!
//! For every tick `t'` of the consumer horizon the predictor picks the trial
//! workload class whose level is closest to the consumer workload, reads that
//! class's observation at the cyclically mapped trial tick `t_i`, and scales it
//! by the fingerprint ratio `P(t') / P(t_i)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{PerformanceFingerprint, TrialExperience};
use crate::timeseries::TimeSeries;
use crate::trialplan::{LongTermWorkload, TrialPlan};

/// Index of the level closest to `workload`; ties go to the lower index.
pub fn nearest_trial_workload(workload: f64, levels: &[f64]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, level) in levels.iter().enumerate() {
        let gap = (workload - level).abs();
        if best.is_none_or(|(_, g)| gap < g) {
            best = Some((i, gap));
        }
    }
    best.map(|(i, _)| i).ok_or_else(|| Error::invalid("no trial workload classes"))
}

/// Position of a long-term tick inside the repeating trial window, 1-based:
/// `((t' - 1) mod Tr) + 1`.
pub fn map_trial_tick(tick: u64, trial_length: u64) -> Result<u64> {
    if tick == 0 {
        return Err(Error::invalid("ticks are 1-based"));
    }
    if trial_length == 0 {
        return Err(Error::invalid("trial length must be >= 1"));
    }
    Ok((tick - 1) % trial_length + 1)
}

/// `P(target) / P(trial)` on a fingerprint series.
pub fn relative_weight(fp: &TimeSeries, target_tick: u64, trial_tick: u64) -> Result<f64> {
    let lookup = |tick| {
        fp.value_at(tick)
            .ok_or_else(|| Error::invalid(format!("fingerprint series has no value at tick {tick}")))
    };
    let target = lookup(target_tick)?;
    let trial = lookup(trial_tick)?;
    if trial == 0.0 {
        return Err(Error::ZeroFingerprint { tick: trial_tick });
    }
    Ok(target / trial)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroWeightPolicy {
    /// Use a weight of 1 and record a warning.
    #[default]
    Substitute,
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickProvenance {
    pub tick: u64,
    pub class: usize,
    pub trial_tick: u64,
    pub weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedPerformance {
    pub per_qos: BTreeMap<String, TimeSeries>,
    pub provenance: Vec<TickProvenance>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl PredictedPerformance {
    pub fn horizon(&self) -> usize {
        self.provenance.len()
    }
}

pub fn predict_long_term(
    workload: &LongTermWorkload,
    trial: &TrialExperience,
    plan: &TrialPlan,
    fp: &PerformanceFingerprint,
    policy: ZeroWeightPolicy,
) -> Result<PredictedPerformance> {
    predict_from_levels(workload, trial, &plan.levels(), fp, policy)
}

/// Same as [`predict_long_term`], with the workload level of each trial VM
/// given directly instead of through a plan.
pub fn predict_from_levels(
    workload: &LongTermWorkload,
    trial: &TrialExperience,
    levels: &[f64],
    fp: &PerformanceFingerprint,
    policy: ZeroWeightPolicy,
) -> Result<PredictedPerformance> {
    if levels.len() != trial.vm_count() {
        return Err(Error::invalid(format!(
            "plan has {} workload classes but the trial observed {} VMs",
            levels.len(),
            trial.vm_count()
        )));
    }
    let series = workload.series();
    let horizon = series.len() as u64;
    if series.start() != 1 || series.step() != 1 {
        return Err(Error::invalid("long-term workload must sit on the unit grid starting at tick 1"));
    }
    let window = trial.window();
    let trial_length = window.len();
    let stable_period = trial.stable_period();

    let qos_names: Vec<&str> = trial.qos_names().collect();
    let fp_series = qos_names
        .iter()
        .map(|q| {
            let last = horizon.max(window.end);
            fp.series(q, 1..=last).map(|s| (*q, s))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;

    let mut values: BTreeMap<&str, Vec<f64>> =
        qos_names.iter().map(|q| (*q, Vec::with_capacity(horizon as usize))).collect();
    let mut provenance = Vec::with_capacity(horizon as usize);
    let mut warnings = Vec::new();

    for (tick, level) in series.points() {
        let class = nearest_trial_workload(level, levels)?;
        let trial_tick = map_trial_tick(tick, trial_length)?;
        let fp_trial_tick = window.start + trial_tick - 1;
        let observation_index = ((trial_tick - 1) / stable_period) as usize;
        let mut weights = BTreeMap::new();
        for qos in &qos_names {
            let observed = trial
                .observation(class, qos)
                .and_then(|s| s.values().get(observation_index).copied())
                .ok_or_else(|| Error::MissingObservation {
                    class,
                    qos: (*qos).to_owned(),
                    tick: trial_tick,
                })?;
            let weight = match relative_weight(&fp_series[qos], tick, fp_trial_tick) {
                Ok(w) => w,
                Err(Error::ZeroFingerprint { tick: zero }) if policy == ZeroWeightPolicy::Substitute => {
                    warnings.push(format!(
                        "QoS `{qos}`: fingerprint is zero at tick {zero}, relative weight set to 1 for tick {tick}"
                    ));
                    1.0
                }
                Err(e) => return Err(e),
            };
            weights.insert((*qos).to_owned(), weight);
            values.get_mut(qos).expect("initialised above").push(weight * observed);
        }
        provenance.push(TickProvenance { tick, class, trial_tick, weights });
    }

    let per_qos = values
        .into_iter()
        .map(|(q, v)| Ok((q.to_owned(), TimeSeries::from_values(v)?)))
        .collect::<Result<_>>()?;
    Ok(PredictedPerformance { per_qos, provenance, warnings })
}
