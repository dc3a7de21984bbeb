use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;
use trialscope_core::{build_trial_plan, LossBudget, TrialConstraints};

use crate::formats::{read_workload, write_json};
use crate::Output;

#[derive(Args, Debug)]
pub struct PlanArgs {
    /// Workload CSV (`tick,<consumer>,...`).
    workload: PathBuf,
    /// Workload column to plan for; required when the file has several.
    #[arg(long)]
    consumer: Option<String>,
    /// Number of trial VMs.
    #[arg(long)]
    vms: usize,
    /// Trial length in ticks.
    #[arg(long = "trial-days")]
    trial_days: u64,
    /// Stable period d in ticks.
    #[arg(long = "period-d", default_value_t = 1)]
    period_d: u64,
    /// Workload slots per stable period.
    #[arg(long = "slots-k")]
    slots_k: usize,
    /// Maximum mean absolute loss per VM (omit for no limit).
    #[arg(long = "loss-budget")]
    loss_budget: Option<f64>,
    #[command(flatten)]
    output: Output,
}

pub fn run(args: PlanArgs) -> Result<ExitCode> {
    let workload = read_workload(&args.workload, args.consumer.as_deref())?;
    let constraints = TrialConstraints {
        vm_count: args.vms,
        trial_length: args.trial_days,
        stable_period: args.period_d,
        slots_per_period: args.slots_k,
    };
    let budget = match args.loss_budget {
        Some(b) => LossBudget::new(b)?,
        None => LossBudget::unlimited(),
    };
    let plan = build_trial_plan(&workload, &constraints, budget).context("cannot build trial plan")?;

    let path = args.output.dir.join("trial_plan.json");
    write_json(&path, &plan)?;
    println!(
        "{} VMs, total loss {:.6}, {} -> {}",
        plan.per_vm.len(),
        plan.total_loss(),
        if plan.feasible { "feasible" } else { "infeasible" },
        path.display()
    );
    if plan.feasible {
        Ok(ExitCode::SUCCESS)
    } else {
        for (vm, t) in plan.per_vm.iter().enumerate().filter(|(_, t)| !t.feasible) {
            log::warn!("VM {vm}: loss {} exceeds budget {}", t.achieved_loss, budget.get());
        }
        Ok(ExitCode::from(2))
    }
}
