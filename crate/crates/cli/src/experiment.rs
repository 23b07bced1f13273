//! Seeded experiment environments and the per-grid-point pipeline shared by
//! `simulate` and `sweep`.
//!
//! Every random stream is `jsam::seed::derive(root, [tag(purpose), ...])`.
//! Data, partition, cost profile and initial weights depend on the seed
//! index only, so all mechanisms face the same clients. Schedules and noise
//! also mix in the mechanism name. Payment curves depend on the mechanism
//! (and the seed index for `bbm`, whose rule depends on the data) but not on
//! the grid point, giving common random numbers along a sweep.

use std::collections::HashMap;

use jsam::flsim::{
    baseline_plan, client_losses, initial_weights, match_total_payment, partition_noniid, payment_schedule, train,
    MechanismContext, MechanismKind, Partition, PaymentSettings, RunLabel, RunRecord, RunSeeds, SelectionPlan,
    SyntheticTask,
};
use jsam::payments::PaymentSchedule;
use jsam::seed::{derive, tag};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::Result;

pub fn stream(root: u64, purpose: &str, seed_index: u64, mechanism: Option<MechanismKind>) -> u64 {
    match mechanism {
        Some(kind) => derive(root, &[tag(purpose), seed_index, tag(&kind.name())]),
        None => derive(root, &[tag(purpose), seed_index]),
    }
}

fn payment_stream(root: u64, kind: MechanismKind, seed_index: u64) -> u64 {
    match kind {
        MechanismKind::Bbm => derive(root, &[tag("payments"), tag(&kind.name()), seed_index]),
        _ => derive(root, &[tag("payments"), tag(&kind.name())]),
    }
}

/// Reported cost profile for a seed index, or the configured one.
pub fn cost_profile(cfg: &ExperimentConfig, seed_index: u64) -> Result<Vec<f64>> {
    if let Some(costs) = &cfg.costs {
        return Ok(costs.clone());
    }
    let dist = cfg.distribution.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream(cfg.seed, "costs", seed_index, None));
    Ok((0..cfg.clients).map(|_| dist.sample(&mut rng)).collect())
}

/// Everything about one seed index that every mechanism shares.
#[derive(Debug, Clone)]
pub struct Environment {
    pub seed_index: u64,
    pub task: SyntheticTask,
    pub partition: Partition,
    pub costs: Vec<f64>,
    pub init: Vec<f64>,
    pub losses: Vec<f64>,
}

impl Environment {
    pub fn build(cfg: &ExperimentConfig, seed_index: u64) -> Result<Self> {
        let task = SyntheticTask::generate(&cfg.task, cfg.clients, stream(cfg.seed, "task", seed_index, None))?;
        let partition = partition_noniid(&task, cfg.clients, cfg.fl.similarity, stream(cfg.seed, "partition", seed_index, None))?;
        let init = initial_weights(task.parameter_count(), cfg.fl.init_scale, stream(cfg.seed, "init", seed_index, None));
        let losses = client_losses(&init, &task, &partition);
        let costs = cost_profile(cfg, seed_index)?;
        Ok(Self { seed_index, task, partition, costs, init, losses })
    }
}

/// A sweep coordinate: the loss weight, or a pinned total budget at the
/// configured weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridPoint {
    Eta(f64),
    Budget(f64),
}

impl GridPoint {
    pub fn eta(&self, cfg: &ExperimentConfig) -> f64 {
        match *self {
            GridPoint::Eta(eta) => eta,
            GridPoint::Budget(_) => cfg.server.eta,
        }
    }

    fn budget(&self) -> Option<f64> {
        match *self {
            GridPoint::Eta(_) => None,
            GridPoint::Budget(b) => Some(b),
        }
    }

    pub fn axis(&self) -> &'static str {
        match self {
            GridPoint::Eta(_) => "eta",
            GridPoint::Budget(_) => "budget",
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            GridPoint::Eta(v) | GridPoint::Budget(v) => v,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub seed_index: u64,
    pub plan: SelectionPlan,
    pub record: Option<RunRecord>,
}

pub fn environments(cfg: &ExperimentConfig) -> Result<Vec<Environment>> {
    cfg.seeds.par_iter().map(|s| Environment::build(cfg, *s)).collect()
}

fn settings(cfg: &ExperimentConfig, kind: MechanismKind, seed_index: u64) -> PaymentSettings {
    PaymentSettings {
        grid_points: cfg.payments.grid_points,
        samples: cfg.payments.samples,
        seed: payment_stream(cfg.seed, kind, seed_index),
    }
}

/// What planning needs from one seed index.
#[derive(Debug, Clone, Copy)]
pub struct Profile<'a> {
    pub seed_index: u64,
    pub costs: &'a [f64],
    pub losses: Option<&'a [f64]>,
}

impl<'a> From<&'a Environment> for Profile<'a> {
    fn from(env: &'a Environment) -> Self {
        Profile { seed_index: env.seed_index, costs: &env.costs, losses: Some(&env.losses) }
    }
}

/// Plans of every configured mechanism for each profile at one grid point,
/// in configuration order. With `matched_cost`, budget-linear baselines are
/// rescaled to JSAM's total payment on the same profile.
pub fn plans_at(cfg: &ExperimentConfig, profiles: &[Profile<'_>], point: GridPoint) -> Result<Vec<Vec<SelectionPlan>>> {
    let server = cfg.server_config(point.eta(cfg))?;
    let dist = cfg.distribution.build()?;
    let mut base = MechanismContext::new(dist, server, cfg.clients);
    base.budget = point.budget();
    let kinds = &cfg.mechanisms;
    let shared: HashMap<MechanismKind, Option<PaymentSchedule>> = kinds
        .par_iter()
        .filter(|k| **k != MechanismKind::Bbm)
        .map(|k| payment_schedule(*k, &base, &settings(cfg, *k, 0)).map(|s| (*k, s)))
        .collect::<jsam::Result<_>>()?;

    profiles
        .par_iter()
        .map(|profile| -> Result<Vec<_>> {
            let mut ctx = base;
            ctx.losses = profile.losses;
            let mut out = Vec::with_capacity(kinds.len());
            for &kind in kinds {
                let plan = if kind == MechanismKind::Bbm {
                    let sched = payment_schedule(kind, &ctx, &settings(cfg, kind, profile.seed_index))?;
                    baseline_plan(kind, &ctx, profile.costs, sched.as_ref())?
                } else {
                    baseline_plan(kind, &ctx, profile.costs, shared[&kind].as_ref())?
                };
                out.push(plan);
            }
            if cfg.matched_cost {
                let target = kinds.iter().position(|k| *k == MechanismKind::Jsam).map(|i| out[i].total_payment());
                if let Some(target) = target.filter(|t| *t > 0.0) {
                    for (kind, plan) in kinds.iter().zip(out.iter_mut()) {
                        if kind.budget_linear() {
                            *plan = match_total_payment(plan, *kind, target)?;
                        }
                    }
                }
            }
            Ok(out)
        })
        .collect()
}

/// Plans (and, if `train_runs`, training records) for every configured
/// mechanism and seed at one grid point, ordered by seed then mechanism.
pub fn run_point(
    cfg: &ExperimentConfig,
    envs: &[Environment],
    point: GridPoint,
    train_runs: bool,
) -> Result<Vec<Outcome>> {
    let profiles: Vec<Profile<'_>> = envs.iter().map(Profile::from).collect();
    let plans = plans_at(cfg, &profiles, point)?;
    let jobs: Vec<(&Environment, MechanismKind, SelectionPlan)> = envs
        .iter()
        .zip(plans)
        .flat_map(|(env, ps)| cfg.mechanisms.iter().copied().zip(ps).map(move |(k, p)| (env, k, p)))
        .collect();
    let run = cfg.fl.run_config();
    let eta = point.eta(cfg);
    jobs.into_par_iter()
        .map(|(env, kind, plan)| {
            let record = if train_runs {
                let label = RunLabel {
                    run_id: format!("{kind}-seed{}-{}{}", env.seed_index, point.axis(), point.value()),
                    seed: env.seed_index,
                    similarity: cfg.fl.similarity,
                    eta,
                };
                let seeds = RunSeeds {
                    schedule: stream(cfg.seed, "schedule", env.seed_index, Some(kind)),
                    noise: stream(cfg.seed, "noise", env.seed_index, Some(kind)),
                };
                Some(train(&env.task, &env.partition, &plan, &run, env.init.clone(), label, seeds)?)
            } else {
                None
            };
            Ok(Outcome { seed_index: env.seed_index, plan, record })
        })
        .collect()
}

/// Per-mechanism averages over seeds at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: &'static str,
    pub value: f64,
    pub mechanism: String,
    pub total_budget: f64,
    pub total_payment: f64,
    pub selected_clients: f64,
    pub final_accuracy: Option<f64>,
}

pub const SWEEP_HEADER: &str = "axis,value,mechanism,total_budget,total_payment,selected_clients,final_accuracy";

impl SweepRow {
    pub fn csv(&self) -> String {
        let acc = self.final_accuracy.map_or(String::new(), |a| a.to_string());
        format!(
            "{},{},{},{},{},{},{}",
            self.axis, self.value, self.mechanism, self.total_budget, self.total_payment, self.selected_clients, acc
        )
    }
}

pub fn summarize(cfg: &ExperimentConfig, point: GridPoint, outcomes: &[Outcome]) -> Vec<SweepRow> {
    cfg.mechanisms
        .iter()
        .map(|kind| {
            let name = kind.name();
            let mine: Vec<&Outcome> = outcomes.iter().filter(|o| o.plan.mechanism == name).collect();
            let n = mine.len().max(1) as f64;
            let mean = |f: &dyn Fn(&Outcome) -> f64| mine.iter().map(|o| f(o)).sum::<f64>() / n;
            let accuracy = if mine.iter().all(|o| o.record.is_some()) && !mine.is_empty() {
                Some(mean(&|o| o.record.as_ref().map_or(f64::NAN, RunRecord::final_accuracy)))
            } else {
                None
            };
            SweepRow {
                axis: point.axis(),
                value: point.value(),
                mechanism: name,
                total_budget: mean(&|o| o.plan.total_budget),
                total_payment: mean(&|o| o.plan.total_payment()),
                selected_clients: mean(&|o| o.plan.selected_count() as f64),
                final_accuracy: accuracy,
            }
        })
        .collect()
}
