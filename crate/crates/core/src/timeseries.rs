//! Uniformly spaced time series and the numeric kernels shared by the rest of
//! the crate: piecewise aggregate approximation (PAA), its linear
//! reconstruction, mean absolute error, Pearson correlation and normalized RMSE.
//!
//! Ticks are unitless integers. A series starts at `start` (1-based) and every
//! following value sits `step` ticks after the previous one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSeries")]
pub struct TimeSeries {
    start: u64,
    step: u64,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSeries {
    start: u64,
    step: u64,
    values: Vec<f64>,
}

impl TryFrom<RawSeries> for TimeSeries {
    type Error = Error;

    fn try_from(raw: RawSeries) -> Result<Self> {
        TimeSeries::new(raw.start, raw.step, raw.values)
    }
}

impl TimeSeries {
    pub fn new(start: u64, step: u64, values: Vec<f64>) -> Result<Self> {
        if start == 0 {
            return Err(Error::invalid("series start tick must be >= 1"));
        }
        if step == 0 {
            return Err(Error::invalid("series step must be >= 1"));
        }
        if values.is_empty() {
            return Err(Error::invalid("series must contain at least one value"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at index {i}")));
        }
        Ok(TimeSeries { start, step, values })
    }

    /// Series on the unit grid `1, 2, ..., n`.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        TimeSeries::new(1, 1, values)
    }

    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false; a valid series holds at least one value.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last_tick(&self) -> u64 {
        self.start + (self.values.len() as u64 - 1) * self.step
    }

    pub fn ticks(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.values.len() as u64).map(move |i| self.start + i * self.step)
    }

    pub fn points(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.ticks().zip(self.values.iter().copied())
    }

    /// Value at an exact grid tick.
    pub fn value_at(&self, tick: u64) -> Option<f64> {
        if tick < self.start || !(tick - self.start).is_multiple_of(self.step) {
            return None;
        }
        self.values.get(((tick - self.start) / self.step) as usize).copied()
    }

    /// Same grid, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::invalid(format!(
                "expected {} values, got {}",
                self.values.len(),
                values.len()
            )));
        }
        TimeSeries::new(self.start, self.step, values)
    }

    pub fn same_grid(&self, other: &TimeSeries) -> bool {
        self.start == other.start && self.step == other.step && self.len() == other.len()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn range(&self) -> f64 {
        self.max() - self.min()
    }
}

/// Arithmetic mean, computed as offsets from the first value so that a block
/// of identical values averages back to exactly that value.
pub(crate) fn mean(values: &[f64]) -> f64 {
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return first;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Maximum tolerated loss of a compressed workload, in workload units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct LossBudget(f64);

impl LossBudget {
    pub fn new(max_loss: f64) -> Result<Self> {
        if max_loss.is_nan() || max_loss < 0.0 {
            return Err(Error::invalid(format!("loss budget must be >= 0, got {max_loss}")));
        }
        Ok(LossBudget(max_loss))
    }

    pub fn unlimited() -> Self {
        LossBudget(f64::INFINITY)
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn admits(self, loss: f64) -> bool {
        loss <= self.0
    }
}

impl TryFrom<f64> for LossBudget {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        LossBudget::new(value)
    }
}

impl From<LossBudget> for f64 {
    fn from(budget: LossBudget) -> f64 {
        budget.0
    }
}

/// Piecewise aggregate approximation: the mean of each block of
/// `segment_width` consecutive values. A ragged final block is averaged over
/// the values it actually holds.
pub fn paa_compress(series: &TimeSeries, segment_width: usize) -> Result<TimeSeries> {
    if segment_width == 0 || segment_width > series.len() {
        return Err(Error::invalid(format!(
            "segment width {segment_width} outside 1..={}",
            series.len()
        )));
    }
    let values = series.values.chunks(segment_width).map(mean).collect();
    TimeSeries::new(series.start, series.step * segment_width as u64, values)
}

/// Rebuilds `original_length` points from a PAA series.
///
/// Every compressed value is anchored on the first tick of its source block.
/// Ticks between anchors are linearly interpolated; ticks after the last anchor
/// are extrapolated along the line through the last two anchors (or held flat
/// when there is only one). The output grid step is the compressed step divided
/// by the width when that division is exact, and 1 otherwise.
pub fn paa_decompress(
    compressed: &TimeSeries,
    original_length: usize,
    segment_width: usize,
) -> Result<TimeSeries> {
    let k = compressed.len();
    if original_length < k {
        return Err(Error::invalid(format!(
            "original length {original_length} shorter than compressed length {k}"
        )));
    }
    if segment_width == 0 {
        return Err(Error::invalid("segment width must be >= 1"));
    }
    if (k - 1) * segment_width >= original_length {
        return Err(Error::invalid(format!(
            "{k} blocks of width {segment_width} do not fit in {original_length} points"
        )));
    }

    let anchors = compressed.values();
    let width = segment_width as f64;
    let mut out = Vec::with_capacity(original_length);
    for i in 0..original_length {
        let block = i / segment_width;
        let value = if k == 1 {
            anchors[0]
        } else if block + 1 < k {
            let offset = (i % segment_width) as f64 / width;
            anchors[block] + (anchors[block + 1] - anchors[block]) * offset
        } else {
            let last = k - 1;
            let slope = (anchors[last] - anchors[last - 1]) / width;
            anchors[last] + slope * (i - last * segment_width) as f64
        };
        out.push(value);
    }

    let step = if compressed.step.is_multiple_of(segment_width as u64) {
        compressed.step / segment_width as u64
    } else {
        1
    };
    TimeSeries::new(compressed.start, step, out)
}

/// Mean absolute error between two equally long series.
pub fn mae_loss(original: &TimeSeries, reconstructed: &TimeSeries) -> Result<f64> {
    check_lengths(original, reconstructed)?;
    let total: f64 = original
        .values
        .iter()
        .zip(&reconstructed.values)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(total / original.len() as f64)
}

/// Sample Pearson correlation over aligned points.
pub fn pearson(a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
    check_lengths(a, b)?;
    if a.len() < 2 {
        return Err(Error::invalid("correlation needs at least two points"));
    }
    let (mean_a, mean_b) = (a.mean(), b.mean());
    let (mut cov, mut var_a, mut var_b) = (0.0, 0.0, 0.0);
    for (x, y) in a.values.iter().zip(&b.values) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::DegenerateCorrelation);
    }
    Ok((cov / (var_a.sqrt() * var_b.sqrt())).clamp(-1.0, 1.0))
}

pub fn rmse(a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
    check_lengths(a, b)?;
    let sum_sq: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).powi(2)).sum();
    Ok((sum_sq / a.len() as f64).sqrt())
}

/// RMSE normalized by the reference range, falling back to `|mean(reference)|`
/// for a flat reference and to the raw RMSE when that is zero as well.
pub fn nrmse(observed: &TimeSeries, reference: &TimeSeries) -> Result<f64> {
    let error = rmse(observed, reference)?;
    let range = reference.range();
    if range > 0.0 {
        return Ok(error / range);
    }
    let level = reference.mean().abs();
    if level > 0.0 {
        Ok(error / level)
    } else {
        Ok(error)
    }
}

fn check_lengths(a: &TimeSeries, b: &TimeSeries) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}
