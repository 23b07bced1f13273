use jsam::flsim::{MechanismKind, RunRecord, CSV_HEADER};
use jsam::mechanism::{jsam_solve, verify_structure, ObjectiveForm};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::experiment::{
    cost_profile, environments, plans_at, run_point, summarize, Environment, GridPoint, Profile, SweepRow, SWEEP_HEADER,
};

/// One mechanism's plan for the first configured seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanArtifact {
    pub mechanism: String,
    pub clients: usize,
    pub eta: f64,
    pub q: f64,
    pub objective_form: ObjectiveForm,
    pub costs: Vec<f64>,
    pub virtual_costs: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub budgets: Vec<f64>,
    pub payments: Vec<f64>,
    pub total_budget: f64,
    pub total_payment: f64,
    pub selected_clients: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degenerate: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structure_passed: Option<bool>,
}

pub fn solve(cfg: &ExperimentConfig) -> Result<Vec<PlanArtifact>> {
    let seed_index = cfg.seeds[0];
    let server = cfg.server_config(cfg.server.eta)?;
    let dist = cfg.distribution.build()?;
    // Only the loss-proportional baseline needs data to plan.
    let (costs, losses) = if cfg.mechanisms.contains(&MechanismKind::Bbm) {
        let env = Environment::build(cfg, seed_index)?;
        (env.costs, Some(env.losses))
    } else {
        (cost_profile(cfg, seed_index)?, None)
    };
    let virtual_costs = costs.iter().map(|c| dist.virtual_cost(*c)).collect::<jsam::Result<Vec<_>>>()?;
    let profile = Profile { seed_index, costs: &costs, losses: losses.as_deref() };
    let plans = plans_at(cfg, &[profile], GridPoint::Eta(cfg.server.eta))?.remove(0);
    cfg.mechanisms
        .iter()
        .zip(plans)
        .map(|(kind, plan)| {
            let detail = match kind {
                MechanismKind::Jsam => Some(jsam_solve(&virtual_costs, &server)?),
                MechanismKind::JsamCi => Some(jsam_solve(&costs, &server)?),
                _ => None,
            };
            Ok(PlanArtifact {
                mechanism: plan.mechanism.clone(),
                clients: cfg.clients,
                eta: server.eta,
                q: server.q(),
                objective_form: server.objective_form,
                costs: costs.clone(),
                virtual_costs: virtual_costs.clone(),
                total_payment: plan.total_payment(),
                selected_clients: plan.selected_count(),
                threshold: detail.as_ref().map(|d| d.threshold),
                threshold_probability: detail.as_ref().map(|d| d.threshold_probability),
                objective: detail.as_ref().map(|d| d.objective),
                degenerate: detail.as_ref().map(|d| d.degenerate),
                structure_passed: detail.as_ref().map(|d| verify_structure(&d.probabilities, &d.order).passed),
                probabilities: plan.probabilities,
                budgets: plan.budgets,
                payments: plan.payments,
                total_budget: plan.total_budget,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()
}

pub fn solve_json(cfg: &ExperimentConfig) -> Result<String> {
    let plans = solve(cfg)?;
    Ok(serde_json::to_string_pretty(&plans).expect("plans serialise") + "\n")
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let envs = environments(cfg)?;
    let outcomes = run_point(cfg, &envs, GridPoint::Eta(cfg.server.eta), true)?;
    Ok(outcomes.into_iter().filter_map(|o| o.record).collect())
}

pub fn runs_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_rows());
    }
    out
}

/// Final accuracy, payment and divergence of every run.
pub fn runs_summary(records: &[RunRecord]) -> String {
    let mut out = String::from("run_id,final_accuracy,total_payment,diverged\n");
    for r in records {
        out.push_str(&format!("{},{},{},{}\n", r.label.run_id, r.final_accuracy(), r.total_payment, r.diverged));
    }
    out
}

pub fn grid_points(cfg: &ExperimentConfig) -> Result<Vec<GridPoint>> {
    let points: Vec<GridPoint> = cfg
        .sweep
        .eta_grid
        .iter()
        .map(|e| GridPoint::Eta(*e))
        .chain(cfg.sweep.budget_grid.iter().map(|b| GridPoint::Budget(*b)))
        .collect();
    if points.is_empty() {
        return Err(CliError::invalid("eta_grid", "sweep needs a non-empty eta_grid or budget_grid"));
    }
    Ok(points)
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let points = grid_points(cfg)?;
    let envs = environments(cfg)?;
    let mut rows = Vec::new();
    for point in points {
        let outcomes = run_point(cfg, &envs, point, cfg.sweep.train)?;
        rows.extend(summarize(cfg, point, &outcomes));
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}
