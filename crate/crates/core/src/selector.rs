//! Distance between predicted long-term performance and the consumer's
//! requirements, and the resulting provider ranking.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::ConfidenceScore;
use crate::predictor::PredictedPerformance;
use crate::timeseries::{rmse, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    #[default]
    HigherBetter,
    LowerBetter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsumerRequirements {
    pub per_qos: BTreeMap<String, TimeSeries>,
    /// Carried for reporting only; distances ignore it.
    #[serde(default)]
    pub polarity: BTreeMap<String, Polarity>,
}

impl ConsumerRequirements {
    pub fn new(per_qos: BTreeMap<String, TimeSeries>) -> Result<Self> {
        let mut lengths = per_qos.values().map(TimeSeries::len);
        let first = lengths.next().ok_or_else(|| Error::invalid("requirements name no QoS"))?;
        if lengths.any(|l| l != first) {
            return Err(Error::invalid("requirement series differ in length"));
        }
        Ok(ConsumerRequirements { per_qos, polarity: BTreeMap::new() })
    }

    pub fn with_polarity(mut self, qos: impl Into<String>, polarity: Polarity) -> Self {
        self.polarity.insert(qos.into(), polarity);
        self
    }

    pub fn horizon(&self) -> usize {
        self.per_qos.values().next().map_or(0, TimeSeries::len)
    }
}

/// RMSE between requirement and prediction. With `normalize`, both series are
/// first min-max scaled by the range of the two series taken together, which
/// bounds the distance to `[0, 1]` and makes QoS with different units
/// summable.
pub fn qos_distance(requirement: &TimeSeries, predicted: &TimeSeries, normalize: bool) -> Result<f64> {
    if requirement.len() != predicted.len() {
        return Err(Error::invalid(format!(
            "length mismatch: requirement {} vs prediction {}",
            requirement.len(),
            predicted.len()
        )));
    }
    let raw = rmse(requirement, predicted)?;
    if !normalize {
        return Ok(raw);
    }
    let lo = requirement.min().min(predicted.min());
    let hi = requirement.max().max(predicted.max());
    if hi > lo {
        Ok((raw / (hi - lo)).min(1.0))
    } else {
        Ok(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderScore {
    pub provider_id: String,
    pub rank: usize,
    pub per_qos_distance: BTreeMap<String, f64>,
    pub total_distance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<ConfidenceScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub provider_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Ranked providers, best (smallest total distance) first.
    pub ranking: Vec<ProviderScore>,
    #[serde(default)]
    pub excluded: Vec<Exclusion>,
}

impl SelectionReport {
    pub fn ranked_order(&self) -> Vec<&str> {
        self.ranking.iter().map(|s| s.provider_id.as_str()).collect()
    }

    pub fn winner(&self) -> Option<&ProviderScore> {
        self.ranking.first()
    }

    pub fn score(&self, provider_id: &str) -> Option<&ProviderScore> {
        self.ranking.iter().find(|s| s.provider_id == provider_id)
    }

    pub fn attach_confidence(&mut self, confidences: &BTreeMap<String, ConfidenceScore>) {
        for score in &mut self.ranking {
            score.confidence = confidences.get(&score.provider_id).cloned();
        }
    }
}

fn score_provider(
    requirements: &ConsumerRequirements,
    prediction: &PredictedPerformance,
    normalize: bool,
) -> std::result::Result<BTreeMap<String, f64>, String> {
    requirements
        .per_qos
        .iter()
        .map(|(qos, required)| {
            let predicted = prediction
                .per_qos
                .get(qos)
                .ok_or_else(|| format!("no prediction for required QoS `{qos}`"))?;
            let d = qos_distance(required, predicted, normalize).map_err(|e| format!("QoS `{qos}`: {e}"))?;
            Ok((qos.clone(), d))
        })
        .collect()
}

/// Orders providers by total distance, ties by provider id. Providers that
/// cannot be scored against every required QoS are listed in `excluded`.
pub fn rank_providers(
    requirements: &ConsumerRequirements,
    predictions: &BTreeMap<String, PredictedPerformance>,
    normalize: bool,
) -> SelectionReport {
    let mut ranking = Vec::new();
    let mut excluded = Vec::new();
    for (provider_id, prediction) in predictions {
        match score_provider(requirements, prediction, normalize) {
            Ok(per_qos_distance) => ranking.push(ProviderScore {
                provider_id: provider_id.clone(),
                rank: 0,
                total_distance: per_qos_distance.values().sum(),
                per_qos_distance,
                confidence: None,
            }),
            Err(reason) => excluded.push(Exclusion { provider_id: provider_id.clone(), reason }),
        }
    }
    ranking.sort_by(|a, b| {
        a.total_distance.total_cmp(&b.total_distance).then_with(|| a.provider_id.cmp(&b.provider_id))
    });
    for (i, score) in ranking.iter_mut().enumerate() {
        score.rank = i + 1;
    }
    SelectionReport { ranking, excluded }
}
