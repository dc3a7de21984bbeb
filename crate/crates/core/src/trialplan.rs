//! Equivalence-partitioned trial planning.
//!
//! The long-term workload is cut into one contiguous slice per trial VM. Each
//! slice is compressed with PAA until it fits the `k` slots of one stable
//! period `d`, and the VM replays that compressed workload in every period of
//! the trial so that workload effects and temporal drift can be told apart.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{mae_loss, paa_compress, paa_decompress, LossBudget, TimeSeries};

/// The consumer's demand trace over the whole horizon `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TimeSeries", into = "TimeSeries")]
pub struct LongTermWorkload {
    series: TimeSeries,
}

impl LongTermWorkload {
    pub fn new(series: TimeSeries) -> Result<Self> {
        if let Some((tick, v)) = series.points().find(|(_, v)| *v < 0.0) {
            return Err(Error::invalid(format!("negative workload {v} at tick {tick}")));
        }
        Ok(LongTermWorkload { series })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        LongTermWorkload::new(TimeSeries::from_values(values)?)
    }

    pub fn series(&self) -> &TimeSeries {
        &self.series
    }

    pub fn horizon(&self) -> usize {
        self.series.len()
    }
}

impl TryFrom<TimeSeries> for LongTermWorkload {
    type Error = Error;

    fn try_from(series: TimeSeries) -> Result<Self> {
        LongTermWorkload::new(series)
    }
}

impl From<LongTermWorkload> for TimeSeries {
    fn from(w: LongTermWorkload) -> TimeSeries {
        w.series
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialConstraints {
    pub vm_count: usize,
    pub trial_length: u64,
    pub stable_period: u64,
    pub slots_per_period: usize,
}

impl TrialConstraints {
    pub fn validate(&self) -> Result<()> {
        if self.vm_count == 0 {
            return Err(Error::invalid("vm_count must be >= 1"));
        }
        if self.slots_per_period == 0 {
            return Err(Error::invalid("slots_per_period must be >= 1"));
        }
        if self.trial_length == 0 || self.stable_period == 0 {
            return Err(Error::invalid("trial_length and stable_period must be >= 1"));
        }
        if self.stable_period > self.trial_length {
            return Err(Error::invalid(format!(
                "stable_period {} exceeds trial_length {}",
                self.stable_period, self.trial_length
            )));
        }
        if !self.trial_length.is_multiple_of(self.stable_period) {
            return Err(Error::invalid(format!(
                "trial_length {} is not a multiple of stable_period {}",
                self.trial_length, self.stable_period
            )));
        }
        Ok(())
    }

    pub fn repetitions(&self) -> u64 {
        self.trial_length / self.stable_period
    }
}

/// Outcome of compressing one partition into a single stable period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialWorkload {
    pub workload: TimeSeries,
    pub loss: f64,
    pub rate: usize,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmTrial {
    pub partition: TimeSeries,
    pub trial_workload: TimeSeries,
    pub achieved_loss: f64,
    pub sampling_rate: usize,
    pub feasible: bool,
    /// Scalar workload level of this class, the mean of `trial_workload`.
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub constraints: TrialConstraints,
    pub loss_budget: LossBudget,
    pub per_vm: Vec<VmTrial>,
    pub repetitions: u64,
    pub feasible: bool,
}

impl TrialPlan {
    pub fn levels(&self) -> Vec<f64> {
        self.per_vm.iter().map(|vm| vm.level).collect()
    }

    pub fn total_loss(&self) -> f64 {
        self.per_vm.iter().map(|vm| vm.achieved_loss).sum()
    }

    /// `(period, vm, workload)` for every period of the trial. Each VM runs the
    /// same compressed workload in every period.
    pub fn schedule(&self) -> impl Iterator<Item = (u64, usize, &TimeSeries)> + '_ {
        (0..self.repetitions).flat_map(move |period| {
            self.per_vm.iter().enumerate().map(move |(vm, t)| (period, vm, &t.trial_workload))
        })
    }
}

/// Splits the workload into `vm_count` contiguous slices in temporal order.
/// The first `n % vm_count` slices take one extra point.
pub fn partition_workload(workload: &LongTermWorkload, vm_count: usize) -> Result<Vec<TimeSeries>> {
    let series = workload.series();
    let n = series.len();
    if vm_count == 0 || vm_count > n {
        return Err(Error::invalid(format!("cannot split {n} points across {vm_count} VMs")));
    }
    let (base, extra) = (n / vm_count, n % vm_count);
    let mut parts = Vec::with_capacity(vm_count);
    let mut offset = 0;
    for j in 0..vm_count {
        let size = base + usize::from(j < extra);
        let start = series.start() + offset as u64 * series.step();
        parts.push(TimeSeries::new(
            start,
            series.step(),
            series.values()[offset..offset + size].to_vec(),
        )?);
        offset += size;
    }
    Ok(parts)
}

/// Number of distinct workload values.
pub fn summarize_workload(w: &TimeSeries) -> usize {
    w.values()
        .iter()
        .map(|v| if *v == 0.0 { 0.0f64.to_bits() } else { v.to_bits() })
        .collect::<BTreeSet<_>>()
        .len()
}

fn compress_candidate(w: &TimeSeries, rate: usize) -> Result<(TimeSeries, f64)> {
    let tw = paa_compress(w, rate)?;
    let rebuilt = paa_decompress(&tw, w.len(), rate)?;
    let loss = mae_loss(w, &rebuilt)?;
    Ok((tw, loss))
}

/// Compresses one partition so that it fits `slots` points, as coarsely as the
/// loss budget allows.
///
/// The smallest admissible rate `ceil(m / slots)` decides feasibility. When it
/// fits the budget, the search starts from the summary-derived rate and keeps
/// raising the rate while the loss stays within budget, returning the last
/// candidate that did. If the summary-derived start already breaks the budget
/// the search walks back down towards the smallest rate instead.
pub fn generate_trial_workload(
    w: &TimeSeries,
    slots: usize,
    budget: LossBudget,
) -> Result<TrialWorkload> {
    if slots == 0 {
        return Err(Error::invalid("slots per period must be >= 1"));
    }
    let m = w.len();
    if m <= slots {
        return Ok(TrialWorkload { workload: w.clone(), loss: 0.0, rate: 1, feasible: true });
    }

    let min_rate = m.div_ceil(slots);
    let (tw, loss) = compress_candidate(w, min_rate)?;
    let mut best = TrialWorkload { workload: tw, loss, rate: min_rate, feasible: true };
    if !budget.admits(loss) {
        best.feasible = false;
        return Ok(best);
    }

    let start_rate = m.div_ceil(summarize_workload(w).min(slots)).max(min_rate);
    if start_rate > min_rate {
        let (tw, loss) = compress_candidate(w, start_rate)?;
        if budget.admits(loss) {
            best = TrialWorkload { workload: tw, loss, rate: start_rate, feasible: true };
        } else {
            for rate in (min_rate + 1..start_rate).rev() {
                let (tw, loss) = compress_candidate(w, rate)?;
                if budget.admits(loss) {
                    return Ok(TrialWorkload { workload: tw, loss, rate, feasible: true });
                }
            }
            return Ok(best);
        }
    }

    for rate in best.rate + 1..=m {
        let (tw, loss) = compress_candidate(w, rate)?;
        if !budget.admits(loss) {
            break;
        }
        best = TrialWorkload { workload: tw, loss, rate, feasible: true };
    }
    Ok(best)
}

pub fn build_trial_plan(
    workload: &LongTermWorkload,
    constraints: &TrialConstraints,
    budget: LossBudget,
) -> Result<TrialPlan> {
    constraints.validate()?;
    let parts = partition_workload(workload, constraints.vm_count)?;
    let per_vm = parts
        .into_iter()
        .map(|partition| {
            let tw = generate_trial_workload(&partition, constraints.slots_per_period, budget)?;
            Ok(VmTrial {
                level: tw.workload.mean(),
                partition,
                trial_workload: tw.workload,
                achieved_loss: tw.loss,
                sampling_rate: tw.rate,
                feasible: tw.feasible,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let feasible = per_vm.iter().all(|vm| vm.feasible);
    Ok(TrialPlan {
        constraints: *constraints,
        loss_budget: budget,
        per_vm,
        repetitions: constraints.repetitions(),
        feasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(values: &[f64]) -> TimeSeries {
        TimeSeries::from_values(values.to_vec()).unwrap()
    }

    fn budget(x: f64) -> LossBudget {
        LossBudget::new(x).unwrap()
    }

    /// Independent loss of a width-`rate` PAA round trip: block means, anchors
    /// at block starts, straight lines between and past them.
    fn round_trip_loss_oracle(values: &[f64], rate: usize) -> f64 {
        let anchors: Vec<f64> =
            values.chunks(rate).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        let mut total = 0.0;
        for (i, v) in values.iter().enumerate() {
            let rebuilt = if anchors.len() == 1 {
                anchors[0]
            } else {
                let j = (i / rate).min(anchors.len() - 2);
                let frac = (i - j * rate) as f64 / rate as f64;
                anchors[j] + (anchors[j + 1] - anchors[j]) * frac
            };
            total += (v - rebuilt).abs();
        }
        total / values.len() as f64
    }

    #[test]
    fn partition_sizes() {
        let sizes = |n: usize, v: usize| -> Vec<usize> {
            let w = LongTermWorkload::from_values(vec![1.0; n]).unwrap();
            partition_workload(&w, v).unwrap().iter().map(TimeSeries::len).collect()
        };
        assert_eq!(sizes(12, 12), vec![1; 12]);
        assert_eq!(sizes(360, 12), vec![30; 12]);
        assert_eq!(sizes(7, 3), vec![3, 2, 2]);
    }

    #[test]
    fn partition_keeps_original_ticks() {
        let w = LongTermWorkload::from_values((1..=7).map(f64::from).collect()).unwrap();
        let parts = partition_workload(&w, 3).unwrap();
        assert_eq!(parts.iter().map(TimeSeries::start).collect::<Vec<_>>(), vec![1, 4, 6]);
        assert_eq!(parts[2].values(), &[6.0, 7.0]);
    }

    #[test]
    fn partition_rejects_too_many_vms() {
        let w = LongTermWorkload::from_values(vec![1.0; 3]).unwrap();
        assert!(partition_workload(&w, 4).is_err());
        assert!(partition_workload(&w, 0).is_err());
    }

    #[test]
    fn workload_rejects_negative_values() {
        assert!(LongTermWorkload::from_values(vec![1.0, -0.5]).is_err());
    }

    #[test]
    fn summary_counts_distinct_values() {
        assert_eq!(summarize_workload(&ts(&[5.0, 5.0, 5.0])), 1);
        assert_eq!(summarize_workload(&ts(&[1.0, 2.0, 2.0, 3.0])), 3);
        let values: [f64; 5] = [1.0, 1.5, 1.0, 2.0, 1.5];
        let oracle: std::collections::HashSet<u64> = values.iter().map(|v| v.to_bits()).collect();
        assert_eq!(summarize_workload(&ts(&values)), oracle.len());
        assert_eq!(summarize_workload(&ts(&[0.0, -0.0])), 1);
    }

    #[test]
    fn constraint_validation() {
        let ok = TrialConstraints { vm_count: 12, trial_length: 30, stable_period: 1, slots_per_period: 30 };
        assert!(ok.validate().is_ok());
        assert_eq!(ok.repetitions(), 30);
        assert!(TrialConstraints { stable_period: 31, ..ok }.validate().is_err());
        assert!(TrialConstraints { stable_period: 7, ..ok }.validate().is_err());
        assert!(TrialConstraints { slots_per_period: 0, ..ok }.validate().is_err());
        assert!(TrialConstraints { vm_count: 0, ..ok }.validate().is_err());
    }

    #[test]
    fn constant_workload_compresses_losslessly() {
        let tw = generate_trial_workload(&ts(&[5.0; 6]), 2, budget(0.1)).unwrap();
        assert!(tw.feasible);
        assert_eq!(tw.loss, 0.0);
        assert!(tw.workload.values().iter().all(|&v| v == 5.0));
        assert!(tw.workload.len() <= 2);
    }

    #[test]
    fn short_partition_runs_unchanged() {
        let w = ts(&[1.0, 2.0, 3.0, 4.0]);
        let tw = generate_trial_workload(&w, 4, budget(0.0)).unwrap();
        assert_eq!(tw, TrialWorkload { workload: w, loss: 0.0, rate: 1, feasible: true });
    }

    #[test]
    fn ramp_with_three_slots() {
        let values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let loss_rate2 = round_trip_loss_oracle(&values, 2);
        let loss_rate3 = round_trip_loss_oracle(&values, 3);
        assert!((loss_rate2 - 0.5).abs() < 1e-12);
        assert!((loss_rate3 - 1.0).abs() < 1e-12);

        let tw = generate_trial_workload(&ts(&values), 3, budget(0.5)).unwrap();
        assert!(tw.feasible);
        assert_eq!(tw.rate, 2);
        assert_eq!(tw.workload.values(), &[1.5, 3.5, 5.5]);
        assert!((tw.loss - loss_rate2).abs() < 1e-9);

        let tight = generate_trial_workload(&ts(&values), 3, budget(0.4)).unwrap();
        assert!(!tight.feasible);
        assert_eq!(tight.rate, 2);

        let loose = generate_trial_workload(&ts(&values), 3, budget(1.0)).unwrap();
        assert!(loose.feasible);
        assert!(loose.rate >= 3);
        assert!(loose.loss <= 1.0);
    }

    #[test]
    fn unlimited_budget_compresses_to_one_point() {
        let w = ts(&[3.0, 9.0, 1.0, 4.0, 4.0, 7.0, 2.0]);
        let tw = generate_trial_workload(&w, 3, LossBudget::unlimited()).unwrap();
        assert!(tw.feasible);
        assert_eq!(tw.workload.len(), 1);
        assert_eq!(tw.rate, 7);
    }

    #[test]
    fn plan_for_one_year_on_twelve_vms() {
        let values: Vec<f64> = (0..360).map(|t| 50.0 + (t % 17) as f64).collect();
        let w = LongTermWorkload::from_values(values).unwrap();
        let c = TrialConstraints { vm_count: 12, trial_length: 30, stable_period: 1, slots_per_period: 30 };
        let plan = build_trial_plan(&w, &c, budget(0.0)).unwrap();
        assert_eq!(plan.per_vm.len(), 12);
        assert_eq!(plan.repetitions, 30);
        assert!(plan.feasible);
        assert!(plan.per_vm.iter().all(|vm| vm.trial_workload.len() <= 30));
        assert_eq!(plan.schedule().count(), 360);
        assert!(plan
            .schedule()
            .all(|(_, vm, tw)| tw == &plan.per_vm[vm].trial_workload));
    }

    #[test]
    fn plan_with_one_point_per_vm() {
        let w = LongTermWorkload::from_values(vec![4.0, 8.0, 15.0, 16.0]).unwrap();
        let c = TrialConstraints { vm_count: 4, trial_length: 10, stable_period: 5, slots_per_period: 1 };
        let plan = build_trial_plan(&w, &c, budget(0.0)).unwrap();
        assert_eq!(plan.levels(), vec![4.0, 8.0, 15.0, 16.0]);
        assert_eq!(plan.total_loss(), 0.0);
        assert_eq!(plan.repetitions, 2);
    }

    #[test]
    fn constant_year_plan_is_lossless() {
        let w = LongTermWorkload::from_values(vec![42.0; 360]).unwrap();
        let c = TrialConstraints { vm_count: 12, trial_length: 30, stable_period: 1, slots_per_period: 30 };
        let plan = build_trial_plan(&w, &c, budget(0.0)).unwrap();
        assert_eq!(plan.total_loss(), 0.0);
        assert!(plan.per_vm.iter().all(|vm| vm.trial_workload.values().iter().all(|&v| v == 42.0)));
    }

    #[test]
    fn infeasible_vm_marks_plan() {
        let w = LongTermWorkload::from_values((0..20).map(|t| ((t * 7) % 11) as f64).collect())
            .unwrap();
        let c = TrialConstraints { vm_count: 2, trial_length: 4, stable_period: 2, slots_per_period: 2 };
        let plan = build_trial_plan(&w, &c, budget(0.0)).unwrap();
        assert!(!plan.feasible);
    }

    proptest! {
        #[test]
        fn partitions_concatenate_to_workload(values in prop::collection::vec(0.0f64..100.0, 1..200), v in 1usize..50) {
            let v = v.min(values.len());
            let w = LongTermWorkload::from_values(values.clone()).unwrap();
            let parts = partition_workload(&w, v).unwrap();
            prop_assert_eq!(parts.len(), v);
            let joined: Vec<f64> = parts.iter().flat_map(|p| p.values().to_vec()).collect();
            prop_assert_eq!(joined, values);
        }

        #[test]
        fn generator_contract(
            values in prop::collection::vec(0.0f64..100.0, 1..120),
            slots in 1usize..40,
            max_loss in 0.0f64..30.0,
        ) {
            let w = ts(&values);
            let out = generate_trial_workload(&w, slots, budget(max_loss)).unwrap();
            prop_assert!(out.workload.len() <= slots);
            let min_rate = values.len().div_ceil(slots);
            let minimal_loss = round_trip_loss_oracle(&values, min_rate);
            if out.feasible {
                prop_assert!(out.loss <= max_loss);
            }
            if (minimal_loss - max_loss).abs() > 1e-9 {
                prop_assert_eq!(out.feasible, minimal_loss <= max_loss || values.len() <= slots);
            }

            // larger budget never flips feasible -> infeasible
            let wider = generate_trial_workload(&w, slots, budget(max_loss * 2.0 + 1.0)).unwrap();
            prop_assert!(!out.feasible || wider.feasible);

            // deterministic
            prop_assert_eq!(generate_trial_workload(&w, slots, budget(max_loss)).unwrap(), out);
        }
    }
}
