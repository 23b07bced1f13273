use std::fmt;

use jsam::mechanism::{jsam_solve, optimal_epsilon, verify_structure};
use jsam::oracle::{cross_check, min_dp_loss};
use jsam::flsim::{implied_epsilon, noise_sigma};
use jsam::payments::{
    interim_allocation, payment, verify_ic_with, verify_ir, verify_monotone_allocation, InterimAllocation, Payment,
};
use jsam::seed::{derive, tag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, Injection};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditReport {
    pub checks: Vec<Check>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.checks.push(Check { name, passed, detail });
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

fn negated_integral(c: f64, curve: &InterimAllocation) -> jsam::Result<Payment> {
    let honest = payment(c, curve)?;
    let own = c * curve.at(c)?;
    Ok(Payment { value: own - (honest.value - own), quadrature_error: honest.quadrature_error })
}

/// Mechanism, oracle, payment and privacy-accounting checks on small
/// instances drawn from the configured distribution.
pub fn run_audit(cfg: &ExperimentConfig) -> Result<AuditReport> {
    let spec = &cfg.audit;
    let n = spec.clients;
    let dist = cfg.distribution.build()?;
    let server = cfg.server_config(cfg.server.eta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, &[tag("audit")]));
    let mut report = AuditReport::default();

    let mut worst_gap = f64::NEG_INFINITY;
    let (mut agree, mut structured, mut brute_structured) = (0, 0, 0);
    for _ in 0..spec.instances {
        let v: Vec<f64> = (0..n).map(|_| dist.virtual_cost(dist.sample(&mut rng))).collect::<jsam::Result<_>>()?;
        let cc = cross_check(&v, &server, spec.oracle_step)?;
        worst_gap = worst_gap.max((cc.jsam_objective - cc.brute_objective) / cc.tolerance);
        agree += usize::from(cc.passed);
        brute_structured += usize::from(cc.brute_structure.passed);
        structured += usize::from(verify_structure(&cc.jsam.probabilities, &cc.jsam.order).passed);
    }
    let total = spec.instances;
    report.push(
        "oracle_agreement",
        agree == total,
        format!("{agree}/{total} instances within tolerance; worst gap {worst_gap:.3} of tolerance"),
    );
    report.push("selection_structure", structured == total, format!("{structured}/{total} plans structured"));
    report.push(
        "brute_force_structure",
        brute_structured == total,
        format!("{brute_structured}/{total} brute-force optima structured within one grid step"),
    );

    let (mut worst_loss, mut worst_identity) = (0.0f64, 0.0f64);
    for _ in 0..spec.instances.max(1) * 5 {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / sum).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..3.0)).collect();
        let budget = rng.gen_range(0.1..10.0);
        let eps = optimal_epsilon(&p, budget, &v)?;
        let closed: f64 = p.iter().zip(&eps).map(|(pk, ek)| pk * pk / (ek * ek)).sum();
        let (_, numeric) = min_dp_loss(&p, &v, budget)?;
        worst_loss = worst_loss.max((numeric - closed).abs() / closed);
        let spent: f64 = v.iter().zip(&eps).map(|(a, b)| a * b).sum();
        worst_identity = worst_identity.max((spent - budget).abs() / budget);
    }
    report.push("closed_form_budgets", worst_loss <= 1e-6, format!("worst relative gap {worst_loss:.2e}"));
    report.push("budget_identity", worst_identity <= 1e-9, format!("worst relative gap {worst_identity:.2e}"));

    let mut worst_sigma = 0.0f64;
    for _ in 0..20 {
        let t = rng.gen_range(1..500);
        let eps = rng.gen_range(0.01..10.0);
        let sigma = noise_sigma(t, eps, cfg.fl.delta, cfg.fl.c2)?;
        let back = implied_epsilon(t, sigma, cfg.fl.delta, cfg.fl.c2)?;
        worst_sigma = worst_sigma.max((back - eps).abs() / eps);
    }
    report.push("noise_calibration", worst_sigma <= 1e-9, format!("worst budget round-trip error {worst_sigma:.2e}"));

    let mut curve = interim_allocation(0, n, &dist, &server, spec.grid_points, spec.samples, derive(cfg.seed, &[tag("audit-curve")]))?;
    if spec.inject == Some(Injection::IncreasingAllocation) {
        curve.budgets.reverse();
        curve.std_errors.reverse();
    }
    let mono = verify_monotone_allocation(&curve, curve.mc_tolerance());
    report.push(
        "allocation_monotonicity",
        mono.passed,
        format!("largest rise {:.3e} against tolerance {:.3e}", mono.worst_increase, mono.tolerance),
    );

    let pay_rule: &dyn Fn(f64, &InterimAllocation) -> jsam::Result<Payment> = match spec.inject {
        Some(Injection::NegatedIntegral) => &negated_integral,
        _ => &payment,
    };
    let (lo, hi) = curve.range();
    let reports: Vec<f64> = (0..=20).map(|j| lo + (hi - lo) * j as f64 / 20.0).collect();
    let (mut ic_failures, mut ir_failures, mut worst_margin) = (0, 0, f64::NEG_INFINITY);
    for &truth in reports.iter().step_by(4) {
        let ic = verify_ic_with(truth, &reports, &curve, pay_rule)?;
        ic_failures += ic.violations;
        worst_margin = worst_margin.max(ic.worst_margin);
        let paid = pay_rule(truth, &curve)?.value;
        if !verify_ir(truth, paid, curve.at(truth)?) {
            ir_failures += 1;
        }
    }
    report.push(
        "incentive_compatibility",
        ic_failures == 0,
        format!("{ic_failures} profitable misreports; worst margin {worst_margin:.3e}"),
    );
    report.push("individual_rationality", ir_failures == 0, format!("{ir_failures} reports with negative utility"));

    let sample: Vec<f64> = (0..n).map(|_| dist.virtual_cost(dist.sample(&mut rng))).collect::<jsam::Result<_>>()?;
    let out = jsam_solve(&sample, &server)?;
    let total: f64 = out.probabilities.iter().sum();
    report.push("simplex", (total - 1.0).abs() <= 1e-9, format!("probabilities sum to {total}"));
    Ok(report)
}
