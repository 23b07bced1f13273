use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::{
    dp_concentration, jsam_solve, jsam_solve_with_budget, minimize_budget, optimal_epsilon, unbiased_deviation,
};
use crate::payments::{interim_allocation_for, AllocationRule, JsamRule, PaymentSchedule};
use crate::{CostDistribution, ServerConfig};

use super::train::SelectionPlan;

/// Mechanisms compared by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MechanismKind {
    Jsam,
    /// Uniform selection over every client.
    Usbm,
    /// Uniform selection over the `M` clients with the lowest costs.
    Fsbm(usize),
    /// Selection proportional to each client's loss under the initial model.
    Bbm,
    /// The threshold search run on true rather than virtual costs, paying
    /// each client exactly its privacy cost.
    JsamCi,
}

impl MechanismKind {
    pub fn name(&self) -> String {
        self.to_string()
    }

    /// Whether the selection rule ignores the total budget, so scaling the
    /// budget scales every privacy budget and payment by the same factor.
    pub fn budget_linear(&self) -> bool {
        matches!(self, MechanismKind::Usbm | MechanismKind::Fsbm(_) | MechanismKind::Bbm)
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MechanismKind::Jsam => f.write_str("jsam"),
            MechanismKind::Usbm => f.write_str("usbm"),
            MechanismKind::Fsbm(m) => write!(f, "fsbm-{m}"),
            MechanismKind::Bbm => f.write_str("bbm"),
            MechanismKind::JsamCi => f.write_str("jsam-ci"),
        }
    }
}

impl FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "jsam" => Ok(MechanismKind::Jsam),
            "usbm" => Ok(MechanismKind::Usbm),
            "bbm" => Ok(MechanismKind::Bbm),
            "jsam-ci" | "jsam_ci" => Ok(MechanismKind::JsamCi),
            other => other
                .strip_prefix("fsbm-")
                .or_else(|| other.strip_prefix("fsbm_"))
                .and_then(|m| m.parse().ok())
                .map(MechanismKind::Fsbm)
                .ok_or_else(|| {
                    Error::config(
                        "mechanism",
                        format!("unknown mechanism {s:?}; expected jsam, usbm, fsbm-<M>, bbm or jsam-ci"),
                    )
                }),
        }
    }
}

impl TryFrom<String> for MechanismKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MechanismKind> for String {
    fn from(k: MechanismKind) -> Self {
        k.to_string()
    }
}

/// Everything a mechanism needs besides the reported profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanismContext<'a> {
    pub distribution: CostDistribution,
    pub config: ServerConfig,
    pub clients: usize,
    /// Per-client losses under the initial model, used by `bbm`.
    pub losses: Option<&'a [f64]>,
    /// Pins the total budget instead of optimising it.
    pub budget: Option<f64>,
}

impl<'a> MechanismContext<'a> {
    pub fn new(distribution: CostDistribution, config: ServerConfig, clients: usize) -> Self {
        Self { distribution, config, clients, losses: None, budget: None }
    }

    pub fn with_losses(mut self, losses: &'a [f64]) -> Self {
        self.losses = Some(losses);
        self
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = Some(budget);
        self
    }

    fn jsam_rule(&self) -> JsamRule {
        JsamRule { distribution: self.distribution, config: self.config, clients: self.clients, budget: self.budget }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Selection {
    Uniform,
    Cheapest(usize),
    Weighted(Vec<f64>),
}

/// A baseline whose selection probabilities are fixed before budgets are
/// chosen; budgets then follow the closed form on virtual costs.
#[derive(Debug, Clone)]
pub struct FixedSelectionRule {
    selection: Selection,
    pub distribution: CostDistribution,
    pub config: ServerConfig,
    pub clients: usize,
    /// Total budget; `None` optimises it for the chosen probabilities.
    pub budget: Option<f64>,
}

impl FixedSelectionRule {
    pub fn new(kind: MechanismKind, ctx: &MechanismContext<'_>) -> Result<Self> {
        let clients = ctx.clients;
        let selection = match kind {
            MechanismKind::Usbm => Selection::Uniform,
            MechanismKind::Fsbm(m) => {
                if m == 0 || m > clients {
                    return Err(Error::config("fsbm", format!("subset size must lie in 1..={clients}, got {m}")));
                }
                Selection::Cheapest(m)
            }
            MechanismKind::Bbm => {
                let losses = ctx.losses.ok_or_else(|| Error::domain("bbm needs the clients' initial losses"))?;
                if losses.len() != clients {
                    return Err(Error::domain("one initial loss per client required"));
                }
                let total: f64 = losses.iter().sum();
                if !(total > 0.0 && total.is_finite()) || losses.iter().any(|l| !(*l >= 0.0)) {
                    return Err(Error::domain("initial losses must be finite, non-negative and not all zero"));
                }
                Selection::Weighted(losses.iter().map(|l| l / total).collect())
            }
            MechanismKind::Jsam | MechanismKind::JsamCi => {
                return Err(Error::domain(format!("{kind} is not a fixed-selection baseline")))
            }
        };
        Ok(Self { selection, distribution: ctx.distribution, config: ctx.config, clients, budget: ctx.budget })
    }

    pub fn probabilities(&self, sensitivities: &[f64]) -> Vec<f64> {
        let n = sensitivities.len();
        match &self.selection {
            Selection::Uniform => vec![1.0 / n as f64; n],
            Selection::Cheapest(m) => {
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| sensitivities[a].total_cmp(&sensitivities[b]).then(a.cmp(&b)));
                let mut p = vec![0.0; n];
                for &k in &order[..*m] {
                    p[k] = 1.0 / *m as f64;
                }
                p
            }
            Selection::Weighted(w) => w.clone(),
        }
    }

    /// Probabilities, budgets and total budget for a reported profile.
    pub fn plan(&self, sensitivities: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        if sensitivities.len() != self.clients {
            return Err(Error::domain("profile length differs from the client count"));
        }
        let v = sensitivities
            .iter()
            .map(|c| self.distribution.virtual_cost(*c))
            .collect::<Result<Vec<_>>>()?;
        let p = self.probabilities(sensitivities);
        let total = match self.budget {
            Some(b) => b,
            None => {
                let qc = self.config.q() * dp_concentration(&p, &v);
                minimize_budget(self.config.eta, qc, unbiased_deviation(&p)).budget
            }
        };
        let eps = optimal_epsilon(&p, total, &v)?;
        Ok((p, eps, total))
    }
}

impl AllocationRule for FixedSelectionRule {
    fn clients(&self) -> usize {
        self.clients
    }

    fn budgets(&self, sensitivities: &[f64]) -> Result<Vec<f64>> {
        self.plan(sensitivities).map(|(_, eps, _)| eps)
    }

    // With report-independent probabilities only the client's own term of
    // the normaliser moves along the grid.
    fn budget_curve(&self, profile: &mut [f64], client: usize, grid: &[f64]) -> Result<Vec<f64>> {
        if matches!(self.selection, Selection::Cheapest(_)) {
            return grid
                .iter()
                .map(|z| {
                    profile[client] = *z;
                    self.budgets(profile).map(|eps| eps[client])
                })
                .collect();
        }
        if profile.len() != self.clients {
            return Err(Error::domain("profile length differs from the client count"));
        }
        let p = self.probabilities(profile);
        let pk = p[client];
        let dev = unbiased_deviation(&p);
        let mut rest = 0.0;
        for (i, (pi, c)) in p.iter().zip(profile.iter()).enumerate() {
            if i != client && *pi > 0.0 {
                let v = self.distribution.virtual_cost(*c)?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::domain(format!("selected client needs a positive virtual cost, got {v}")));
                }
                rest += (v * pi).cbrt().powi(2);
            }
        }
        grid.iter()
            .map(|z| {
                let v = self.distribution.virtual_cost(*z)?;
                let own = if pk > 0.0 {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(Error::domain(format!("selected client needs a positive virtual cost, got {v}")));
                    }
                    (v * pk).cbrt().powi(2)
                } else {
                    0.0
                };
                let norm = rest + own;
                let total = match self.budget {
                    Some(b) => b,
                    None => minimize_budget(self.config.eta, self.config.q() * norm * norm * norm, dev).budget,
                };
                Ok(if pk > 0.0 { pk.cbrt().powi(2) * total / (norm * v.cbrt()) } else { 0.0 })
            })
            .collect()
    }
}

/// Monte-Carlo settings for interim allocations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentSettings {
    pub grid_points: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for PaymentSettings {
    fn default() -> Self {
        Self { grid_points: 200, samples: 500, seed: 0 }
    }
}

/// Interim curves backing the payments of `kind`. `None` for the
/// cost-reimbursing variant, which needs no curve.
pub fn payment_schedule(
    kind: MechanismKind,
    ctx: &MechanismContext<'_>,
    settings: &PaymentSettings,
) -> Result<Option<PaymentSchedule>> {
    let PaymentSettings { grid_points, samples, seed } = *settings;
    let dist = &ctx.distribution;
    match kind {
        MechanismKind::JsamCi => Ok(None),
        MechanismKind::Jsam => {
            let curve = interim_allocation_for(&ctx.jsam_rule(), 0, dist, grid_points, samples, seed)?;
            Ok(Some(PaymentSchedule::Exchangeable(curve)))
        }
        MechanismKind::Usbm | MechanismKind::Fsbm(_) => {
            let rule = FixedSelectionRule::new(kind, ctx)?;
            let curve = interim_allocation_for(&rule, 0, dist, grid_points, samples, seed)?;
            Ok(Some(PaymentSchedule::Exchangeable(curve)))
        }
        MechanismKind::Bbm => {
            let rule = FixedSelectionRule::new(kind, ctx)?;
            let curves = (0..ctx.clients)
                .map(|k| interim_allocation_for(&rule, k, dist, grid_points, samples, seed))
                .collect::<Result<Vec<_>>>()?;
            Ok(Some(PaymentSchedule::PerClient(curves)))
        }
    }
}

/// Plan of any mechanism for a reported cost profile. JSAM itself is
/// accepted so that callers can treat every mechanism alike. `schedule`
/// must come from [`payment_schedule`] with the same context.
pub fn baseline_plan(
    kind: MechanismKind,
    ctx: &MechanismContext<'_>,
    costs: &[f64],
    schedule: Option<&PaymentSchedule>,
) -> Result<SelectionPlan> {
    if costs.len() != ctx.clients {
        return Err(Error::domain(format!("expected {} costs, got {}", ctx.clients, costs.len())));
    }
    let solve = |v: &[f64]| match ctx.budget {
        Some(b) => jsam_solve_with_budget(v, &ctx.config, b),
        None => jsam_solve(v, &ctx.config),
    };
    let need_schedule = || Error::domain(format!("{kind} needs a payment schedule"));
    let (probabilities, budgets, total_budget, payments) = match kind {
        MechanismKind::Jsam => {
            let v = costs.iter().map(|c| ctx.distribution.virtual_cost(*c)).collect::<Result<Vec<_>>>()?;
            let out = solve(&v)?;
            let pay = schedule.ok_or_else(need_schedule)?.payments(costs)?;
            (out.probabilities, out.budgets, out.total_budget, pay)
        }
        MechanismKind::JsamCi => {
            let out = solve(costs)?;
            let pay = costs.iter().zip(&out.budgets).map(|(c, e)| c * e).collect();
            (out.probabilities, out.budgets, out.total_budget, pay)
        }
        MechanismKind::Usbm | MechanismKind::Fsbm(_) | MechanismKind::Bbm => {
            let (p, eps, total) = FixedSelectionRule::new(kind, ctx)?.plan(costs)?;
            let pay = schedule.ok_or_else(need_schedule)?.payments(costs)?;
            (p, eps, total, pay)
        }
    };
    Ok(SelectionPlan { mechanism: kind.name(), probabilities, budgets, total_budget, payments })
}

/// Rescales a budget-linear plan so its total payment equals `target`.
pub fn match_total_payment(plan: &SelectionPlan, kind: MechanismKind, target: f64) -> Result<SelectionPlan> {
    if !kind.budget_linear() {
        return Err(Error::domain(format!("{kind} payments are not linear in the total budget")));
    }
    let current = plan.total_payment();
    if !(current > 0.0 && target > 0.0) {
        return Err(Error::domain("payment matching needs positive totals"));
    }
    let factor = target / current;
    Ok(SelectionPlan {
        mechanism: plan.mechanism.clone(),
        probabilities: plan.probabilities.clone(),
        budgets: plan.budgets.iter().map(|e| e * factor).collect(),
        total_budget: plan.total_budget * factor,
        payments: plan.payments.iter().map(|p| p * factor).collect(),
    })
}
