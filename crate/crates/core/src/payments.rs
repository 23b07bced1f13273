//! Incentive-compatible payments.
//!
//! A client's interim allocation is its expected privacy budget as a
//! function of its own report, averaged over the other clients' types. It is
//! estimated by Monte Carlo with common random numbers across report grid
//! points. The payment for report `c` is
//! `integral_c^cmax ebar(z) dz + c ebar(c)`, truncated at the support's upper
//! bound and integrated with the trapezoid rule on the report grid.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mechanism::{jsam_solve, jsam_solve_with_budget};
use crate::scalar::pairwise_sum;
use crate::{CostDistribution, ServerConfig};

/// Offset of the first report grid point when the support's lower end has
/// zero virtual cost, as a fraction of the support width.
const LOWER_EDGE_NUDGE: f64 = 1e-6;

/// Maps a full profile of reported sensitivities to privacy budgets.
pub trait AllocationRule: Sync {
    fn clients(&self) -> usize;
    fn budgets(&self, sensitivities: &[f64]) -> Result<Vec<f64>>;

    /// Budget of `client` as its own report sweeps `grid`, the rest of
    /// `profile` held fixed.
    fn budget_curve(&self, profile: &mut [f64], client: usize, grid: &[f64]) -> Result<Vec<f64>> {
        grid.iter()
            .map(|z| {
                profile[client] = *z;
                self.budgets(profile).map(|eps| eps[client])
            })
            .collect()
    }
}

/// The threshold-search mechanism run on virtual costs.
#[derive(Debug, Clone)]
pub struct JsamRule {
    pub distribution: CostDistribution,
    pub config: ServerConfig,
    pub clients: usize,
    /// Pins the total budget instead of optimising it.
    pub budget: Option<f64>,
}

impl AllocationRule for JsamRule {
    fn clients(&self) -> usize {
        self.clients
    }

    fn budgets(&self, sensitivities: &[f64]) -> Result<Vec<f64>> {
        let v = sensitivities
            .iter()
            .map(|c| self.distribution.virtual_cost(*c))
            .collect::<Result<Vec<_>>>()?;
        let out = match self.budget {
            Some(b) => jsam_solve_with_budget(&v, &self.config, b)?,
            None => jsam_solve(&v, &self.config)?,
        };
        Ok(out.budgets)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterimAllocation {
    pub client: usize,
    /// Ascending report grid spanning the support.
    pub grid: Vec<f64>,
    /// Estimated expected budget at each grid point.
    pub budgets: Vec<f64>,
    /// Monte-Carlo standard error at each grid point.
    pub std_errors: Vec<f64>,
    /// Zero for curves given in closed form.
    pub samples: usize,
    pub seed: u64,
}

impl InterimAllocation {
    /// Wraps an exactly known allocation curve.
    pub fn from_curve(client: usize, grid: Vec<f64>, budgets: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != budgets.len() {
            return Err(Error::domain("curve needs at least two matching grid points"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("report grid must be strictly increasing"));
        }
        let n = grid.len();
        Ok(Self {
            client,
            grid,
            budgets,
            std_errors: vec![0.0; n],
            samples: 0,
            seed: 0,
        })
    }

    /// `3 / sqrt(S)`, or zero for an exact curve.
    pub fn mc_tolerance(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            3.0 / (self.samples as f64).sqrt()
        }
    }

    pub fn range(&self) -> (f64, f64) {
        (self.grid[0], self.grid[self.grid.len() - 1])
    }

    fn covers(&self, c: f64) -> bool {
        let (lo, hi) = self.range();
        let slack = 1e-12 * (hi - lo);
        c >= lo - slack && c <= hi + slack
    }

    /// Index `j` of the cell `[z_j, z_{j+1}]` holding `c`.
    fn cell(&self, c: f64) -> usize {
        let j = self.grid.partition_point(|z| *z <= c);
        j.saturating_sub(1).min(self.grid.len() - 2)
    }

    /// Linear interpolation of the allocation curve.
    pub fn at(&self, c: f64) -> Result<f64> {
        if !self.covers(c) {
            let (lo, hi) = self.range();
            return Err(Error::domain(format!("report {c} outside interim grid [{lo}, {hi}]")));
        }
        let j = self.cell(c);
        let (z0, z1) = (self.grid[j], self.grid[j + 1]);
        let t = ((c - z0) / (z1 - z0)).clamp(0.0, 1.0);
        Ok(self.budgets[j] * (1.0 - t) + self.budgets[j + 1] * t)
    }
}

fn report_grid(dist: &CostDistribution, points: usize) -> Vec<f64> {
    let (lo, hi) = dist.support();
    let mut grid: Vec<f64> = (0..points)
        .map(|j| lo + (hi - lo) * j as f64 / (points - 1) as f64)
        .collect();
    grid[points - 1] = hi;
    if dist.virtual_cost(lo).map_or(true, |v| v <= 0.0) {
        grid[0] = lo + LOWER_EDGE_NUDGE * (hi - lo);
    }
    grid
}

/// Monte-Carlo interim allocation of `client` under an arbitrary rule.
///
/// Sample `s` uses its own ChaCha stream derived from `seed`, and the same
/// draw of the other clients' types is reused at every grid point. Results
/// do not depend on the rayon thread count.
pub fn interim_allocation_for<R: AllocationRule>(
    rule: &R,
    client: usize,
    dist: &CostDistribution,
    grid_points: usize,
    samples: usize,
    seed: u64,
) -> Result<InterimAllocation> {
    let n = rule.clients();
    if client >= n {
        return Err(Error::domain(format!("client {client} out of range for {n} clients")));
    }
    if grid_points < 2 {
        return Err(Error::domain("grid needs at least two points"));
    }
    if samples == 0 {
        return Err(Error::domain("need at least one Monte-Carlo sample"));
    }
    let grid = report_grid(dist, grid_points);
    let rows: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let mut profile: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
            rule.budget_curve(&mut profile, client, &grid)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut budgets = Vec::with_capacity(grid_points);
    let mut std_errors = Vec::with_capacity(grid_points);
    let mut column = vec![0.0; samples];
    for j in 0..grid_points {
        for (slot, row) in column.iter_mut().zip(&rows) {
            *slot = row[j];
        }
        let mean = pairwise_sum(&column) / samples as f64;
        for x in column.iter_mut() {
            *x = (*x - mean) * (*x - mean);
        }
        let var = if samples > 1 {
            pairwise_sum(&column) / (samples - 1) as f64
        } else {
            0.0
        };
        budgets.push(mean);
        std_errors.push((var / samples as f64).sqrt());
    }
    Ok(InterimAllocation {
        client,
        grid,
        budgets,
        std_errors,
        samples,
        seed,
    })
}

/// Interim allocation of `client` among `clients` i.i.d. clients under the
/// threshold-search mechanism.
pub fn interim_allocation(
    client: usize,
    clients: usize,
    dist: &CostDistribution,
    config: &ServerConfig,
    grid_points: usize,
    samples: usize,
    seed: u64,
) -> Result<InterimAllocation> {
    let rule = JsamRule {
        distribution: *dist,
        config: *config,
        clients,
        budget: None,
    };
    interim_allocation_for(&rule, client, dist, grid_points, samples, seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Payment {
    pub value: f64,
    /// Richardson estimate of the trapezoid error of the integral term.
    pub quadrature_error: f64,
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Integral of the interpolated curve from `c` to the top of the grid.
fn tail_integral(interim: &InterimAllocation, c: f64) -> Result<(f64, f64)> {
    let at_c = interim.at(c)?;
    let j = interim.cell(c);
    let g = &interim.grid;
    let e = &interim.budgets;
    let head = 0.5 * (g[j + 1] - c) * (at_c + e[j + 1]);
    let fine = trapezoid(&g[j + 1..], &e[j + 1..]);
    // Coarse pass over every other node of the same tail.
    let idx: Vec<usize> = (j + 1..g.len()).step_by(2).collect();
    let error = if idx.len() >= 2 && *idx.last().unwrap() == g.len() - 1 {
        let xs: Vec<f64> = idx.iter().map(|&i| g[i]).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| e[i]).collect();
        (fine - trapezoid(&xs, &ys)).abs() / 3.0
    } else {
        0.0
    };
    Ok((head + fine, error))
}

/// Payment `integral_c^cmax ebar(z) dz + c ebar(c)` (the additive constant is zero).
pub fn payment(c: f64, interim: &InterimAllocation) -> Result<Payment> {
    let (integral, quadrature_error) = tail_integral(interim, c)?;
    Ok(Payment {
        value: integral + c * interim.at(c)?,
        quadrature_error,
    })
}

/// Expected utility of reporting `report` with true sensitivity `truth`.
fn utility(
    truth: f64,
    report: f64,
    interim: &InterimAllocation,
    rule: &dyn Fn(f64, &InterimAllocation) -> Result<Payment>,
) -> Result<(f64, f64)> {
    let pay = rule(report, interim)?;
    Ok((pay.value - truth * interim.at(report)?, pay.quadrature_error))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcReport {
    pub passed: bool,
    pub truthful_utility: f64,
    /// Largest `U(misreport) - U(truth) - tolerance` seen; positive means a violation.
    pub worst_margin: f64,
    pub worst_report: Option<f64>,
    pub violations: usize,
}

/// Truthful reporting is checked against every misreport with tolerance
/// `3/sqrt(S)` plus the quadrature error estimates of both payments.
pub fn verify_ic(c_true: f64, misreports: &[f64], interim: &InterimAllocation) -> Result<IcReport> {
    verify_ic_with(c_true, misreports, interim, &payment)
}

/// [`verify_ic`] with a caller-supplied payment rule.
pub fn verify_ic_with(
    c_true: f64,
    misreports: &[f64],
    interim: &InterimAllocation,
    rule: &dyn Fn(f64, &InterimAllocation) -> Result<Payment>,
) -> Result<IcReport> {
    let (truthful, q_true) = utility(c_true, c_true, interim, rule)?;
    let mut worst_margin = f64::NEG_INFINITY;
    let mut worst_report = None;
    let mut violations = 0;
    for &r in misreports {
        let (u, q) = utility(c_true, r, interim, rule)?;
        let tol = interim.mc_tolerance() + q_true + q + 1e-12;
        let margin = u - truthful - tol;
        if margin > 0.0 {
            violations += 1;
        }
        if margin > worst_margin {
            worst_margin = margin;
            worst_report = Some(r);
        }
    }
    Ok(IcReport {
        passed: violations == 0,
        truthful_utility: truthful,
        worst_margin,
        worst_report,
        violations,
    })
}

/// Individual rationality: `payment - c eps >= -1e-6`.
pub fn verify_ir(c: f64, payment: f64, budget: f64) -> bool {
    payment - c * budget >= -1e-6
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    pub passed: bool,
    /// Largest `ebar(z_{j+1}) - ebar(z_j)` over the grid.
    pub worst_increase: f64,
    pub at: Option<usize>,
    pub tolerance: f64,
}

/// Allocation must be weakly decreasing in the report, up to `tol`.
pub fn verify_monotone_allocation(interim: &InterimAllocation, tol: f64) -> MonotoneReport {
    let mut worst = f64::NEG_INFINITY;
    let mut at = None;
    for (j, w) in interim.budgets.windows(2).enumerate() {
        let rise = w[1] - w[0];
        if rise > worst {
            worst = rise;
            at = Some(j);
        }
    }
    MonotoneReport {
        passed: worst <= tol,
        worst_increase: worst,
        at,
        tolerance: tol,
    }
}

/// Interim curves for every client of a mechanism.
#[derive(Debug, Clone)]
pub enum PaymentSchedule {
    /// One curve serves every client; valid when types are i.i.d. and the
    /// rule treats clients symmetrically.
    Exchangeable(InterimAllocation),
    PerClient(Vec<InterimAllocation>),
}

impl PaymentSchedule {
    pub fn curve(&self, client: usize) -> &InterimAllocation {
        match self {
            PaymentSchedule::Exchangeable(c) => c,
            PaymentSchedule::PerClient(cs) => &cs[client],
        }
    }

    /// Payment for every client of a reported profile. Reports below the
    /// first grid node are priced at that node.
    pub fn payments(&self, sensitivities: &[f64]) -> Result<Vec<f64>> {
        sensitivities
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let curve = self.curve(k);
                let (lo, hi) = curve.range();
                payment(c.clamp(lo, hi), curve).map(|p| p.value)
            })
            .collect()
    }

    /// Expected budget of every client at its own report.
    pub fn interim_budgets(&self, sensitivities: &[f64]) -> Result<Vec<f64>> {
        sensitivities
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let curve = self.curve(k);
                let (lo, hi) = curve.range();
                curve.at(c.clamp(lo, hi))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_rule(points: usize) -> InterimAllocation {
        let grid: Vec<f64> = (0..points).map(|j| j as f64 / (points - 1) as f64).collect();
        let budgets = grid.iter().map(|z| 1.0 - z).collect();
        InterimAllocation::from_curve(0, grid, budgets).unwrap()
    }

    #[test]
    fn linear_rule_payment() {
        let curve = linear_rule(101);
        let p = payment(0.5, &curve).unwrap();
        assert!((p.value - 0.375).abs() < 1e-12);
        assert!(p.quadrature_error < 1e-12);
    }

    #[test]
    fn payment_between_nodes() {
        let curve = linear_rule(11);
        let p = payment(0.237, &curve).unwrap();
        let expected = 0.5 * (1.0 - 0.237f64).powi(2) + 0.237 * (1.0 - 0.237);
        assert!((p.value - expected).abs() < 1e-12);
    }

    #[test]
    fn top_of_support_pays_nothing() {
        let curve = linear_rule(11);
        assert!(payment(1.0, &curve).unwrap().value.abs() < 1e-15);
        assert!(payment(1.2, &curve).is_err());
        assert!(payment(-0.1, &curve).is_err());
    }

    #[test]
    fn constant_rule_is_indifferent() {
        let grid: Vec<f64> = (0..21).map(|j| j as f64 / 20.0).collect();
        let curve = InterimAllocation::from_curve(0, grid, vec![0.7; 21]).unwrap();
        let r = verify_ic(0.3, &[0.0, 0.1, 0.6, 1.0], &curve).unwrap();
        assert!(r.passed);
        assert!(r.worst_margin.abs() < 1e-9);
        assert!(verify_monotone_allocation(&curve, 0.0).passed);
    }

    #[test]
    fn linear_rule_misreport() {
        let curve = linear_rule(101);
        let r = verify_ic(0.5, &[0.8], &curve).unwrap();
        assert!(r.passed);
        assert!((r.truthful_utility - 0.125).abs() < 1e-12);
        // Misreport utility: 0.02 + (0.8 - 0.5) 0.2 = 0.08.
        assert!((r.worst_margin + 0.045).abs() < 1e-9);
    }

    #[test]
    fn negated_integral_breaks_ic() {
        let curve = linear_rule(101);
        let sabotaged = |c: f64, i: &InterimAllocation| {
            let honest = payment(c, i)?;
            let ebar = i.at(c)?;
            Ok(Payment {
                value: 2.0 * c * ebar - honest.value,
                quadrature_error: honest.quadrature_error,
            })
        };
        let r = verify_ic_with(0.2, &[0.3, 0.6, 0.9], &curve, &sabotaged).unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn ir_examples() {
        assert!(verify_ir(0.5, 0.375, 0.5));
        assert!(verify_ir(0.5, 0.0, 0.0));
        assert!(!verify_ir(0.5, 0.2, 0.5));
    }

    #[test]
    fn increasing_rule_fails_monotonicity() {
        let grid: Vec<f64> = (0..11).map(|j| j as f64 / 10.0).collect();
        let budgets = grid.clone();
        let curve = InterimAllocation::from_curve(0, grid, budgets).unwrap();
        let r = verify_monotone_allocation(&curve, 0.01);
        assert!(!r.passed);
        assert!((r.worst_increase - 0.1).abs() < 1e-12);
    }

    #[test]
    fn single_client_interim_is_deterministic_rule() {
        let dist = CostDistribution::uniform(0.0, 1.0).unwrap();
        let cfg = ServerConfig::new(1.0, 1.0, 1e-3).unwrap();
        let curve = interim_allocation(0, 1, &dist, &cfg, 6, 3, 7).unwrap();
        for (z, e) in curve.grid.iter().zip(&curve.budgets) {
            let direct = jsam_solve(&[2.0 * z], &cfg).unwrap().budgets[0];
            assert!((e - direct).abs() < 1e-12);
        }
        assert!(curve.std_errors.iter().all(|s| *s < 1e-12));
    }

    #[test]
    fn grid_nudges_off_zero_virtual_cost() {
        let dist = CostDistribution::uniform(0.0, 1.0).unwrap();
        let g = report_grid(&dist, 5);
        assert!(g[0] > 0.0 && g[0] < 1e-5);
        assert_eq!(g[4], 1.0);
        let shifted = CostDistribution::uniform(0.5, 1.5).unwrap();
        assert_eq!(report_grid(&shifted, 3)[0], 0.5);
    }

    #[test]
    fn interim_rejects_bad_arguments() {
        let dist = CostDistribution::uniform(0.0, 1.0).unwrap();
        let cfg = ServerConfig::new(1.0, 1.0, 1e-3).unwrap();
        assert!(interim_allocation(0, 2, &dist, &cfg, 1, 10, 0).is_err());
        assert!(interim_allocation(0, 2, &dist, &cfg, 5, 0, 0).is_err());
        assert!(interim_allocation(3, 2, &dist, &cfg, 5, 10, 0).is_err());
    }
}
