use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::budget::{minimize_budget, objective_at_budget, optimal_epsilon, two_thirds};
use super::{BudgetSolution, ClientType, MechanismOutcome, ObjectiveForm, ServerConfig};

/// Positions of `v` in ascending order; ties keep the smaller position first.
pub fn sort_by_virtual_cost<T: Scalar>(v: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| {
        v[a].partial_cmp(&v[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// A selection plan with the threshold structure, parameterised by the
/// one-based threshold rank `h` and the threshold client's probability.
///
/// Rank 1 takes `(2 + N - h)/N - p_h`, ranks `2..h-1` take `1/N`, rank `h`
/// takes `p_h` and the rest are excluded. When `h = 1` the threshold client
/// is rank 1 itself and the plan is the point mass on it; `p_h` must then be
/// `1/N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPlan<T> {
    pub threshold: usize,
    pub threshold_probability: T,
}

impl<T: Scalar> ThresholdPlan<T> {
    pub fn new(threshold: usize, threshold_probability: T) -> Self {
        Self {
            threshold,
            threshold_probability,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let h = self.threshold;
        if n == 0 {
            return Err(Error::domain("no clients"));
        }
        if h == 0 || h > n {
            return Err(Error::domain(format!("threshold {h} outside [1, {n}]")));
        }
        let u = unbiased::<T>(n);
        let tol = T::lit(T::CHECK_TOL);
        let ph = self.threshold_probability;
        if !(ph >= -tol && ph <= u + tol) {
            return Err(Error::domain(format!("threshold probability {ph} outside [0, 1/{n}]")));
        }
        if h == 1 && (ph - u).abs() > tol {
            return Err(Error::domain(
                "threshold 1 is the point mass on the cheapest client; p_h must be 1/N",
            ));
        }
        Ok(())
    }

    pub fn first_probability(&self, n: usize) -> T {
        if self.threshold == 1 {
            return T::one();
        }
        T::lit((2 + n - self.threshold) as f64) / T::lit(n as f64) - self.threshold_probability
    }

    /// Deviation term entering the objective.
    pub fn deviation(&self, n: usize, form: ObjectiveForm) -> T {
        let p1 = self.first_probability(n);
        let two = T::lit(2.0);
        match form {
            ObjectiveForm::ExactL1 => two * (p1 - unbiased::<T>(n)),
            ObjectiveForm::PaperLiteral if self.threshold == 1 => two * (p1 - unbiased::<T>(n)),
            ObjectiveForm::PaperLiteral => two * (p1 - self.threshold_probability),
        }
    }

    /// Probabilities by rank (ascending virtual cost).
    pub fn ranked_probabilities(&self, n: usize) -> Vec<T> {
        let mut p = vec![T::zero(); n];
        p[0] = self.first_probability(n);
        if self.threshold >= 2 {
            let u = unbiased::<T>(n);
            for pk in p.iter_mut().take(self.threshold - 1).skip(1) {
                *pk = u;
            }
            p[self.threshold - 1] = self.threshold_probability.max(T::zero());
        }
        p
    }
}

#[inline]
fn unbiased<T: Scalar>(n: usize) -> T {
    T::one() / T::lit(n as f64)
}

/// `(sum over selected ranks of (v p)^(2/3))^3` for a threshold plan, with
/// `middle` the sum of `v_i^(2/3)` over ranks `2..h-1`.
fn plan_concentration<T: Scalar>(plan: &ThresholdPlan<T>, v_sorted: &[T], middle: T) -> T {
    let n = v_sorted.len();
    let p1 = plan.first_probability(n);
    let s = if plan.threshold == 1 {
        two_thirds(v_sorted[0] * p1)
    } else {
        let ph = plan.threshold_probability.max(T::zero());
        two_thirds(v_sorted[0] * p1)
            + two_thirds(v_sorted[plan.threshold - 1] * ph)
            + middle / two_thirds(T::lit(n as f64))
    };
    s * s * s
}

fn middle_sum<T: Scalar>(v_sorted: &[T], h: usize) -> T {
    if h <= 2 {
        return T::zero();
    }
    v_sorted[1..h - 1].iter().fold(T::zero(), |acc, v| acc + two_thirds(*v))
}

fn check_sorted_costs<T: Scalar>(v_sorted: &[T]) -> Result<()> {
    if v_sorted.is_empty() {
        return Err(Error::domain("empty client list"));
    }
    if v_sorted.iter().any(|v| !(v.is_finite() && *v > T::zero())) {
        return Err(Error::domain("virtual costs must be finite and positive"));
    }
    if v_sorted.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::domain("virtual costs must be sorted ascending"));
    }
    Ok(())
}

/// Objective after substituting optimal budgets, as a function of the
/// threshold plan and the total cost `B > 0`.
///
/// `eta sqrt(dev^2 + Q c / B^2) + eta dev + B`, where `c` is the budget
/// concentration of the plan and `dev` follows `cfg.objective_form`.
pub fn reduced_objective<T: Scalar>(
    threshold: usize,
    threshold_probability: T,
    budget: T,
    v_sorted: &[T],
    cfg: &ServerConfig<T>,
) -> Result<T> {
    check_sorted_costs(v_sorted)?;
    let plan = ThresholdPlan::new(threshold, threshold_probability);
    plan.validate(v_sorted.len())?;
    if !(budget.is_finite() && budget > T::zero()) {
        return Err(Error::domain(format!("budget must be > 0, got {budget}")));
    }
    let n = v_sorted.len();
    let c = plan_concentration(&plan, v_sorted, middle_sum(v_sorted, threshold));
    let dev = plan.deviation(n, cfg.objective_form);
    Ok(objective_at_budget(cfg.eta, cfg.q() * c, dev, budget))
}

/// Optimal total cost `B*` for a fixed threshold plan.
pub fn solve_inner_budget<T: Scalar>(
    threshold: usize,
    threshold_probability: T,
    v_sorted: &[T],
    cfg: &ServerConfig<T>,
) -> Result<BudgetSolution<T>> {
    check_sorted_costs(v_sorted)?;
    let plan = ThresholdPlan::new(threshold, threshold_probability);
    plan.validate(v_sorted.len())?;
    let c = plan_concentration(&plan, v_sorted, middle_sum(v_sorted, threshold));
    let dev = plan.deviation(v_sorted.len(), cfg.objective_form);
    Ok(minimize_budget(cfg.eta, cfg.q() * c, dev))
}

#[derive(Debug, Clone, Copy)]
enum BudgetRule<T> {
    Optimize,
    Fixed(T),
}

#[derive(Debug, Clone, Copy)]
struct Candidate<T> {
    objective: T,
    threshold: usize,
    step: usize,
    threshold_probability: T,
    budget: T,
    degenerate: bool,
}

impl<T: Scalar> Candidate<T> {
    /// Smaller objective wins; exact ties go to smaller `h`, then smaller `m`.
    fn beats(&self, other: &Self) -> bool {
        match self.objective.partial_cmp(&other.objective) {
            Some(Ordering::Less) => true,
            Some(Ordering::Equal) => {
                (self.threshold, self.step) < (other.threshold, other.step)
            }
            _ => false,
        }
    }
}

/// Grid search over `(h, p_h)` with the inner budget solved exactly for
/// every pair, followed by plan assembly and closed-form budgets.
pub fn jsam_solve<T: Scalar>(v: &[T], cfg: &ServerConfig<T>) -> Result<MechanismOutcome<T>> {
    search(v, cfg, BudgetRule::Optimize)
}

/// Same search with the total cost pinned to `budget`.
pub fn jsam_solve_with_budget<T: Scalar>(
    v: &[T],
    cfg: &ServerConfig<T>,
    budget: T,
) -> Result<MechanismOutcome<T>> {
    if !(budget.is_finite() && budget > T::zero()) {
        return Err(Error::domain(format!("budget must be > 0, got {budget}")));
    }
    search(v, cfg, BudgetRule::Fixed(budget))
}

pub fn jsam_solve_clients<T: Scalar>(
    clients: &[ClientType<T>],
    cfg: &ServerConfig<T>,
) -> Result<MechanismOutcome<T>> {
    let v: Vec<T> = clients.iter().map(|c| c.virtual_cost).collect();
    jsam_solve(&v, cfg)
}

fn search<T: Scalar>(
    v: &[T],
    cfg: &ServerConfig<T>,
    rule: BudgetRule<T>,
) -> Result<MechanismOutcome<T>> {
    cfg.validate()?;
    let n = v.len();
    if n == 0 {
        return Err(Error::domain("empty client list"));
    }
    let u = unbiased::<T>(n);
    if cfg.grid_delta > u * (T::one() + T::lit(T::CHECK_TOL)) {
        return Err(Error::config(
            "grid_delta",
            format!("must lie in (0, 1/N] = (0, {u}], got {}", cfg.grid_delta),
        ));
    }
    let order = sort_by_virtual_cost(v);
    let v_sorted: Vec<T> = order.iter().map(|&k| v[k]).collect();
    check_sorted_costs(&v_sorted)?;

    let q = cfg.q();
    let steps = (u / cfg.grid_delta + T::lit(1e-9)).floor().to_usize().unwrap_or(0);

    // prefix[j] = sum of v^(2/3) over ranks 0..j.
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(T::zero());
    for vk in &v_sorted {
        let last = *prefix.last().unwrap();
        prefix.push(last + two_thirds(*vk));
    }

    let mut best: Option<Candidate<T>> = None;
    for i in 1..=n {
        let h = n + 1 - i;
        let middle = if h > 2 { prefix[h - 1] - prefix[1] } else { T::zero() };
        let last_step = if h == 1 { 0 } else { steps };
        for m in 0..=last_step {
            let ph = if h == 1 {
                u
            } else {
                (u - T::lit(m as f64) * cfg.grid_delta).max(T::zero())
            };
            let plan = ThresholdPlan::new(h, ph);
            let qc = q * plan_concentration(&plan, &v_sorted, middle);
            let dev = plan.deviation(n, cfg.objective_form);
            let sol = match rule {
                BudgetRule::Optimize => minimize_budget(cfg.eta, qc, dev),
                BudgetRule::Fixed(b) => BudgetSolution {
                    budget: b,
                    objective: objective_at_budget(cfg.eta, qc, dev, b),
                    degenerate: false,
                },
            };
            let cand = Candidate {
                objective: sol.objective,
                threshold: h,
                step: m,
                threshold_probability: ph,
                budget: sol.budget,
                degenerate: sol.degenerate,
            };
            if cand.objective.is_nan() {
                continue;
            }
            if best.as_ref().is_none_or(|b| cand.beats(b)) {
                best = Some(cand);
            }
        }
    }
    let best = best.ok_or_else(|| Error::domain("no finite objective on the search grid"))?;

    let plan = ThresholdPlan::new(best.threshold, best.threshold_probability);
    let ranked = plan.ranked_probabilities(n);
    let mut probabilities = vec![T::zero(); n];
    for (rank, &k) in order.iter().enumerate() {
        probabilities[k] = ranked[rank];
    }
    let budgets = optimal_epsilon(&probabilities, best.budget, v)?;
    Ok(MechanismOutcome {
        probabilities,
        budgets,
        total_budget: best.budget,
        threshold: best.threshold,
        threshold_probability: best.threshold_probability,
        objective: best.objective,
        order,
        degenerate: best.degenerate,
        payments: None,
    })
}
