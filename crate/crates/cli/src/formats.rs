//! File formats read and written by the subcommands.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use trialscope_core::table::{read_table, write_table};
use trialscope_core::{
    Aggregation, ConfidenceScore, ConsumerRequirements, Exclusion, LongTermWorkload, ProviderScore,
    TimeSeries, TransformPolicy, Thresholds, TrialExperience,
};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut de = serde_json::Deserializer::from_reader(BufReader::new(file));
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let at = e.path().to_string();
        let inner = e.into_inner();
        if at == "." {
            anyhow::anyhow!("{}: {inner}", path.display())
        } else {
            anyhow::anyhow!("{}: at `{at}`: {inner}", path.display())
        }
    })?;
    de.end().with_context(|| format!("{}: trailing data", path.display()))?;
    Ok(value)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn read_series_table(path: &Path) -> Result<Vec<(String, TimeSeries)>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_table(BufReader::new(file)).with_context(|| format!("{}", path.display()))
}

/// Reads one workload column (`tick,<name>,...`). Without `column` the file
/// must hold exactly one series.
pub fn read_workload(path: &Path, column: Option<&str>) -> Result<LongTermWorkload> {
    let table = read_series_table(path)?;
    let (name, series) = match column {
        Some(c) => table
            .into_iter()
            .find(|(n, _)| n == c)
            .with_context(|| format!("{}: no column `{c}`", path.display()))?,
        None if table.len() == 1 => table.into_iter().next().expect("one column"),
        None => bail!(
            "{}: {} workload columns, choose one with --consumer",
            path.display(),
            table.len()
        ),
    };
    if series.start() != 1 || series.step() != 1 {
        bail!("{}: workload ticks must be 1, 2, 3, ...", path.display());
    }
    LongTermWorkload::new(series).with_context(|| format!("{}: column `{name}`", path.display()))
}

pub fn write_workload(path: &Path, workload: &LongTermWorkload) -> Result<()> {
    let mut buf = Vec::new();
    write_table(&mut buf, &[("workload", workload.series())])?;
    write_file(path, &buf)
}

/// Requirements table: `tick,<qos>,...` covering the whole horizon.
pub fn read_requirements(path: &Path) -> Result<ConsumerRequirements> {
    let per_qos: BTreeMap<String, TimeSeries> = read_series_table(path)?.into_iter().collect();
    ConsumerRequirements::new(per_qos).with_context(|| format!("{}", path.display()))
}

pub fn write_requirements(path: &Path, requirements: &ConsumerRequirements) -> Result<()> {
    let columns: Vec<(&str, &TimeSeries)> =
        requirements.per_qos.iter().map(|(q, s)| (q.as_str(), s)).collect();
    let mut buf = Vec::new();
    write_table(&mut buf, &columns)?;
    write_file(path, &buf)
}

fn default_window_start() -> u64 {
    1
}

/// Raw trial observations of every provider.
///
/// Each VM lists the workload level it ran and, per QoS, one value per stable
/// period starting at `window_start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialDocument {
    #[serde(default = "default_window_start")]
    pub window_start: u64,
    pub stable_period: u64,
    #[serde(default)]
    pub aggregation: Aggregation,
    pub providers: Vec<ProviderTrialDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderTrialDocument {
    pub provider_id: String,
    pub vms: Vec<VmDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VmDocument {
    pub level: f64,
    pub qos: BTreeMap<String, Vec<f64>>,
}

impl ProviderTrialDocument {
    pub fn from_experience(provider_id: &str, trial: &TrialExperience, levels: &[f64]) -> Self {
        let vms = trial
            .per_vm()
            .iter()
            .zip(levels)
            .map(|(obs, &level)| VmDocument {
                level,
                qos: obs.iter().map(|(q, s)| (q.clone(), s.values().to_vec())).collect(),
            })
            .collect();
        ProviderTrialDocument { provider_id: provider_id.to_owned(), vms }
    }

    pub fn to_experience(&self, window_start: u64, stable_period: u64) -> Result<(TrialExperience, Vec<f64>)> {
        let per_vm = self
            .vms
            .iter()
            .map(|vm| {
                vm.qos
                    .iter()
                    .map(|(q, values)| Ok((q.clone(), TimeSeries::new(window_start, stable_period, values.clone())?)))
                    .collect::<Result<BTreeMap<_, _>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let levels = self.vms.iter().map(|vm| vm.level).collect();
        Ok((TrialExperience::new(per_vm)?, levels))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderDiagnostics {
    pub provider_id: String,
    pub confidence: ConfidenceScore,
    pub transformed: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Contents of `selection_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDocument {
    pub thresholds: Thresholds,
    pub normalize_distance: bool,
    pub transform: TransformPolicy,
    pub providers: Vec<ProviderDiagnostics>,
    pub ranking: Vec<ProviderScore>,
    pub excluded: Vec<Exclusion>,
}

/// One row of `ranking.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub rank: usize,
    pub provider_id: String,
    pub total_distance: f64,
    pub mean_correlation: f64,
    pub mean_nrmse: f64,
    pub verdict: String,
}

impl RankingRow {
    pub fn from_score(score: &ProviderScore) -> Self {
        let confidence = score.confidence.as_ref();
        RankingRow {
            rank: score.rank,
            provider_id: score.provider_id.clone(),
            total_distance: score.total_distance,
            mean_correlation: confidence.map_or(f64::NAN, |c| c.mean_correlation),
            mean_nrmse: confidence.map_or(f64::NAN, |c| c.mean_nrmse),
            verdict: confidence.map_or(String::new(), |c| c.verdict.as_str().to_owned()),
        }
    }
}

pub fn write_ranking(path: &Path, ranking: &[ProviderScore]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for score in ranking {
        w.serialize(RankingRow::from_score(score))?;
    }
    if ranking.is_empty() {
        w.write_record(["rank", "provider_id", "total_distance", "mean_correlation", "mean_nrmse", "verdict"])?;
    }
    w.flush()?;
    Ok(())
}
