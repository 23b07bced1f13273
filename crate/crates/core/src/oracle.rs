//! Brute-force reference solvers.
//!
//! Nothing here calls the closed-form budget rule or the threshold search;
//! the point is to check them from the outside. Budgets come from a
//! Lagrangian scan with per-coordinate derivative bisection, and selection
//! plans from exhaustive enumeration of a simplex grid.

use crate::error::{Error, Result};
use crate::mechanism::{
    jsam_solve, problem_objective, sort_by_virtual_cost, unbiased_deviation,
    verify_structure_with_tol, StructureReport,
};
use crate::{MechanismOutcome, ServerConfig};

const MAX_CLIENTS: usize = 5;
const MIN_STEP: f64 = 1e-3;

/// Root of `lambda v e^3 = 2 p^2` by Newton's method from `start > 0`.
///
/// This is the stationarity condition of `p^2/e^2 + lambda v e`; the map is
/// convex and increasing in `e`, so the iteration stays positive and
/// converges from either side.
fn coordinate_minimizer(pk: f64, vk: f64, lambda: f64, start: f64) -> f64 {
    let target = 2.0 * pk * pk;
    let slope = lambda * vk;
    let mut e = start;
    for _ in 0..200 {
        let next = (2.0 * slope * e * e * e + target) / (3.0 * slope * e * e);
        if (next - e).abs() <= 1e-15 * e {
            return next;
        }
        e = next;
    }
    e
}

/// Numeric minimiser of `sum_k p_k^2 / eps_k^2` subject to
/// `sum_k v_k eps_k = budget`.
///
/// For a multiplier `lambda`, each selected coordinate minimises
/// `p^2/eps^2 + lambda v eps` on its own; the multiplier is bisected (in log
/// space) until the spend matches `budget`. Returns the budgets and the
/// attained loss.
pub fn min_dp_loss(p: &[f64], v: &[f64], budget: f64) -> Result<(Vec<f64>, f64)> {
    if p.len() != v.len() || p.is_empty() {
        return Err(Error::domain("probability and cost vectors must match and be non-empty"));
    }
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::domain(format!("budget must be > 0, got {budget}")));
    }
    if p.iter().any(|x| !(*x >= 0.0)) || p.iter().all(|x| *x == 0.0) {
        return Err(Error::domain("selection probabilities must be non-negative, not all zero"));
    }
    for (pk, vk) in p.iter().zip(v) {
        if *pk > 0.0 && !(*vk > 0.0 && vk.is_finite()) {
            return Err(Error::domain("selected client needs a positive virtual cost"));
        }
    }
    let mut eps: Vec<f64> = p.iter().map(|pk| if *pk > 0.0 { 1.0 } else { 0.0 }).collect();
    // Spend is decreasing in lambda.
    let spend = |lambda: f64, eps: &mut [f64]| -> f64 {
        let mut total = 0.0;
        for ((e, pk), vk) in eps.iter_mut().zip(p).zip(v) {
            if *pk > 0.0 {
                *e = coordinate_minimizer(*pk, *vk, lambda, *e);
                total += vk * *e;
            }
        }
        total
    };
    let (mut lo, mut hi) = (1.0, 1.0);
    while spend(lo, &mut eps) < budget {
        lo *= 1e-3;
    }
    while spend(hi, &mut eps) > budget {
        hi *= 1e3;
    }
    while hi / lo - 1.0 > 1e-12 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if spend(mid, &mut eps) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    spend((lo * hi).sqrt(), &mut eps);
    // Put the iterate exactly on the constraint.
    let spent: f64 = eps.iter().zip(v).map(|(e, vk)| e * vk).sum();
    for e in eps.iter_mut() {
        *e *= budget / spent;
    }
    let loss = p
        .iter()
        .zip(&eps)
        .filter(|(pk, _)| **pk > 0.0)
        .map(|(pk, e)| pk * pk / (e * e))
        .sum();
    Ok((eps, loss))
}

/// Golden-section search for the minimiser of a unimodal `f` on `[lo, hi]`
/// in log coordinates.
fn golden_log(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c.exp()), f(d.exp()));
    while b - a > 1e-12 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d.exp());
        }
    }
    (0.5 * (a + b)).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub probabilities: Vec<f64>,
    pub budgets: Vec<f64>,
    pub total_budget: f64,
    pub objective: f64,
    pub grid_step: f64,
    pub evaluations: usize,
}

/// Best budget and objective for a fixed plan `p`, using the homogeneity
/// `min loss(B) = min loss(1) / B^2`.
fn best_for_plan(p: &[f64], v: &[f64], cfg: &ServerConfig) -> Result<(f64, f64, Vec<f64>)> {
    let (unit_eps, unit_loss) = min_dp_loss(p, v, 1.0)?;
    let dev = unbiased_deviation(p);
    let qd = cfg.q() * unit_loss;
    if cfg.eta == 0.0 {
        return Ok((0.0, 0.0, vec![0.0; p.len()]));
    }
    let objective = |b: f64| cfg.eta * (dev + (dev * dev + qd / (b * b)).sqrt()) + b;
    // The objective exceeds B, so the minimiser lies below objective(1).
    let hi = objective(1.0) + 1.0;
    let b = golden_log(objective, 1e-10, hi);
    let eps = unit_eps.iter().map(|e| e * b).collect();
    Ok((b, objective(b), eps))
}

/// Visits every vector of `parts` non-negative integers summing to `total`,
/// in ascending lexicographic order.
fn for_each_composition(total: usize, parts: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(buf: &mut Vec<usize>, left: usize, parts: usize, visit: &mut impl FnMut(&[usize])) {
        if buf.len() + 1 == parts {
            buf.push(left);
            visit(buf);
            buf.pop();
            return;
        }
        for k in 0..=left {
            buf.push(k);
            rec(buf, left - k, parts, visit);
            buf.pop();
        }
    }
    let mut buf = Vec::with_capacity(parts);
    rec(&mut buf, total, parts, visit);
}

/// Exhaustive search over simplex points whose coordinates are multiples of
/// `step`, each with its budgets optimised numerically.
pub fn brute_force_solve(v: &[f64], cfg: &ServerConfig, step: f64) -> Result<BruteForceResult> {
    cfg.validate()?;
    let n = v.len();
    if n == 0 {
        return Err(Error::domain("empty client list"));
    }
    if n > MAX_CLIENTS {
        return Err(Error::Guard(format!("{n} clients, at most {MAX_CLIENTS} supported")));
    }
    if !(MIN_STEP..=1.0).contains(&step) {
        return Err(Error::Guard(format!("grid step {step} must lie in [{MIN_STEP}, 1]")));
    }
    let units = (1.0 / step).round() as usize;
    if ((units as f64) * step - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("1/step must be an integer, got step {step}")));
    }
    if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::domain("virtual costs must be finite and positive"));
    }

    let mut best: Option<BruteForceResult> = None;
    let mut evaluations = 0usize;
    let mut failure: Option<Error> = None;
    let mut p = vec![0.0; n];
    for_each_composition(units, n, &mut |counts| {
        if failure.is_some() {
            return;
        }
        for (pk, c) in p.iter_mut().zip(counts) {
            *pk = *c as f64 / units as f64;
        }
        evaluations += 1;
        match best_for_plan(&p, v, cfg) {
            Ok((b, f, eps)) => {
                if best.as_ref().is_none_or(|cur| f < cur.objective) {
                    best = Some(BruteForceResult {
                        probabilities: p.clone(),
                        budgets: eps,
                        total_budget: b,
                        objective: f,
                        grid_step: step,
                        evaluations: 0,
                    });
                }
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let mut best = best.expect("simplex grid is non-empty");
    best.evaluations = evaluations;
    Ok(best)
}

/// `4 (g + delta) (eta + max v)`, an empirical Lipschitz-style allowance for
/// the two grid resolutions.
pub fn grid_slack(step: f64, cfg: &ServerConfig, v: &[f64]) -> f64 {
    let vmax = v.iter().cloned().fold(0.0, f64::max);
    4.0 * (step + cfg.grid_delta) * (cfg.eta + vmax)
}

#[derive(Debug, Clone)]
pub struct CrossCheckReport {
    pub passed: bool,
    /// Full objective of the threshold-search plan, exact L1 deviation.
    pub jsam_objective: f64,
    pub brute_objective: f64,
    pub tolerance: f64,
    pub jsam: MechanismOutcome,
    pub brute: BruteForceResult,
    /// Threshold structure of the brute-force optimum, tolerance one grid step.
    pub brute_structure: StructureReport,
}

/// Runs the threshold search and the brute-force oracle on the same
/// instance and compares objectives.
pub fn cross_check(v: &[f64], cfg: &ServerConfig, step: f64) -> Result<CrossCheckReport> {
    if v.len() > 4 {
        return Err(Error::Guard(format!("cross check supports N <= 4, got {}", v.len())));
    }
    let jsam = jsam_solve(v, cfg)?;
    let brute = brute_force_solve(v, cfg, step)?;
    let jsam_objective = problem_objective(&jsam.probabilities, &jsam.budgets, v, cfg);
    let tolerance = (0.01 * brute.objective).max(grid_slack(step, cfg, v));
    let order = sort_by_virtual_cost(v);
    let brute_structure = verify_structure_with_tol(&brute.probabilities, &order, step);
    Ok(CrossCheckReport {
        passed: (jsam_objective - brute.objective).abs() <= tolerance,
        jsam_objective,
        brute_objective: brute.objective,
        tolerance,
        jsam,
        brute,
        brute_structure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::{minimize_budget, optimal_epsilon};

    fn cfg(eta: f64) -> ServerConfig {
        ServerConfig::new(eta, 1.0, 1e-3).unwrap()
    }

    #[test]
    fn compositions_cover_simplex() {
        let mut count = 0;
        let mut first = None;
        for_each_composition(4, 3, &mut |c| {
            assert_eq!(c.iter().sum::<usize>(), 4);
            if first.is_none() {
                first = Some(c.to_vec());
            }
            count += 1;
        });
        assert_eq!(count, 15);
        assert_eq!(first, Some(vec![0, 0, 4]));
    }

    #[test]
    fn numeric_budgets_match_closed_form() {
        let p = [0.5, 0.3, 0.2, 0.0];
        let v = [0.4, 1.0, 1.7, 0.9];
        let (eps, _) = min_dp_loss(&p, &v, 2.0).unwrap();
        let closed = optimal_epsilon(&p, 2.0, &v).unwrap();
        for (a, b) in eps.iter().zip(&closed) {
            assert!((a - b).abs() <= 1e-9 * b.max(1e-12), "{a} vs {b}");
        }
    }

    #[test]
    fn single_client_matches_unbiased_budget() {
        let c = ServerConfig::new(1.5, 2.0, 1e-3).unwrap();
        let r = brute_force_solve(&[0.7], &c, 0.01).unwrap();
        assert_eq!(r.probabilities, vec![1.0]);
        assert_eq!(r.evaluations, 1);
        let expected = minimize_budget(1.5, 2.0 * 0.49, 0.0).budget;
        assert!((r.total_budget - expected).abs() < 1e-6 * expected);
    }

    #[test]
    fn zero_weight() {
        let c = ServerConfig { eta: 0.0, ..cfg(1.0) };
        let r = brute_force_solve(&[0.4, 1.0], &c, 0.1).unwrap();
        assert_eq!(r.objective, 0.0);
        assert_eq!(r.total_budget, 0.0);
    }

    #[test]
    fn guards() {
        assert!(matches!(brute_force_solve(&[1.0; 6], &cfg(1.0), 0.1), Err(Error::Guard(_))));
        assert!(matches!(brute_force_solve(&[1.0; 2], &cfg(1.0), 1e-4), Err(Error::Guard(_))));
        assert!(brute_force_solve(&[1.0; 2], &cfg(1.0), 0.3).is_err());
    }

    #[test]
    fn two_clients_against_search() {
        let v = [0.4, 2.0];
        let c = cfg(1.0);
        let report = cross_check(&v, &c, 0.01).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.brute_objective <= report.jsam_objective + grid_slack(0.01, &c, &v));
        assert!(report.brute_structure.passed, "{:?}", report.brute_structure);
    }

    #[test]
    fn single_client_exact() {
        let report = cross_check(&[0.9], &cfg(2.0), 0.01).unwrap();
        assert!((report.jsam_objective - report.brute_objective).abs() < 1e-9);
    }
}
