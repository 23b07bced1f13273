use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::ServerConfig;

/// `x^(2/3)` for `x >= 0`.
#[inline]
pub(crate) fn two_thirds<T: Scalar>(x: T) -> T {
    let r = x.cbrt();
    r * r
}

/// Closed-form optimal budgets for a fixed selection plan and total cost.
///
/// `eps_k = p_k^(2/3) B / (v_k^(1/3) sum_i (v_i p_i)^(2/3))`. Clients with
/// `p_k = 0` get nothing and drop out of the normaliser, so
/// `sum_k v_k eps_k = B`.
pub fn optimal_epsilon<T: Scalar>(p: &[T], budget: T, v: &[T]) -> Result<Vec<T>> {
    if p.len() != v.len() {
        return Err(Error::domain(format!(
            "{} probabilities for {} virtual costs",
            p.len(),
            v.len()
        )));
    }
    if !(budget.is_finite() && budget >= T::zero()) {
        return Err(Error::domain(format!("budget must be >= 0, got {budget}")));
    }
    if p.iter().any(|x| !(x.is_finite() && *x >= T::zero())) {
        return Err(Error::domain("probabilities must be finite and non-negative"));
    }
    if p.iter().all(|x| *x == T::zero()) {
        return Err(Error::domain("selection probabilities are all zero"));
    }
    let mut norm = T::zero();
    for (pk, vk) in p.iter().zip(v) {
        if *pk > T::zero() {
            if !(vk.is_finite() && *vk > T::zero()) {
                return Err(Error::domain(format!(
                    "selected client needs a positive virtual cost, got {vk}"
                )));
            }
            norm = norm + two_thirds(*vk * *pk);
        }
    }
    Ok(p.iter()
        .zip(v)
        .map(|(pk, vk)| {
            if *pk > T::zero() {
                two_thirds(*pk) * budget / (norm * vk.cbrt())
            } else {
                T::zero()
            }
        })
        .collect())
}

/// `(sum_k (v_k p_k)^(2/3))^3`, the value of `sum_k p_k^2 / eps_k^2` at
/// `B = 1` under optimal budgets.
pub fn dp_concentration<T: Scalar>(p: &[T], v: &[T]) -> T {
    let s = p
        .iter()
        .zip(v)
        .filter(|(pk, _)| **pk > T::zero())
        .fold(T::zero(), |acc, (pk, vk)| acc + two_thirds(*vk * *pk));
    s * s * s
}

/// `||p - 1/N||_1`.
pub fn unbiased_deviation<T: Scalar>(p: &[T]) -> T {
    let u = T::one() / T::lit(p.len() as f64);
    p.iter().fold(T::zero(), |acc, pk| acc + (*pk - u).abs())
}

/// Full server objective for an arbitrary `(p, eps)` pair:
/// `eta (d + sqrt(d^2 + Q sum p^2/eps^2)) + sum v eps` with `d` the exact L1
/// deviation from unbiased selection.
pub fn problem_objective<T: Scalar>(p: &[T], eps: &[T], v: &[T], cfg: &ServerConfig<T>) -> T {
    let dev = unbiased_deviation(p);
    let mut loss = T::zero();
    let mut money = T::zero();
    for ((pk, ek), vk) in p.iter().zip(eps).zip(v) {
        money = money + *vk * *ek;
        if *pk > T::zero() {
            loss = loss + (*pk * *pk) / (*ek * *ek);
        }
    }
    cfg.eta * (dev + (dev * dev + cfg.q() * loss).sqrt()) + money
}

/// `eta (dev + sqrt(dev^2 + qc/B^2)) + B` where `qc = Q c`.
#[inline]
pub fn objective_at_budget<T: Scalar>(eta: T, qc: T, dev: T, budget: T) -> T {
    eta * (dev + (dev * dev + qc / (budget * budget)).sqrt()) + budget
}

/// Minimiser of [`objective_at_budget`] over `B > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetSolution<T> {
    pub budget: T,
    pub objective: T,
    /// `eta = 0` (or a vanishing loss term): the optimum sits at `B = 0`.
    pub degenerate: bool,
}

/// Minimiser of the convex one-dimensional budget problem.
///
/// Setting the derivative to zero gives `dev^2 y^3 + qc y^2 = (eta qc)^2`
/// in `y = B^2`. With `y = eta sqrt(qc) z` this becomes
/// `r z^3 + z^2 = 1`, `r = dev^2 eta / sqrt(qc)`, whose root lies in
/// `(0, min(1, r^(-1/3))]`. Newton's method started at that upper bound
/// decreases monotonically onto the root because the cubic is convex there.
pub fn minimize_budget<T: Scalar>(eta: T, qc: T, dev: T) -> BudgetSolution<T> {
    if eta == T::zero() || qc == T::zero() {
        return BudgetSolution {
            budget: T::zero(),
            objective: eta * (dev + dev.abs()),
            degenerate: true,
        };
    }
    let sqrt_qc = qc.sqrt();
    let r = dev * dev * eta / sqrt_qc;
    let mut z = if r > T::one() { r.cbrt().recip() } else { T::one() };
    let rtol = T::lit(T::SEARCH_RTOL);
    for _ in 0..200 {
        let g = r * z * z * z + z * z - T::one();
        let dg = T::lit(3.0) * r * z * z + (z + z);
        let step = g / dg;
        if !(step > T::zero()) {
            break;
        }
        z = z - step;
        if step <= rtol * z {
            break;
        }
    }
    let budget = (eta * sqrt_qc * z).sqrt();
    BudgetSolution {
        budget,
        objective: objective_at_budget(eta, qc, dev, budget),
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_client_hand_example() {
        // p = (1/2, 1/2), v = (1, 8): norm = 0.5^(2/3) (1 + 4), eps = (0.2, 0.1).
        let eps = optimal_epsilon(&[0.5f64, 0.5], 1.0, &[1.0, 8.0]).unwrap();
        assert!((eps[0] - 0.2).abs() < 1e-14);
        assert!((eps[1] - 0.1).abs() < 1e-14);
        assert!((1.0 * eps[0] + 8.0 * eps[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn single_client_gets_everything() {
        let eps = optimal_epsilon(&[1.0f64], 3.0, &[1.5]).unwrap();
        assert!((eps[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_budget_and_excluded_clients() {
        assert_eq!(optimal_epsilon(&[0.3, 0.7], 0.0, &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        let eps = optimal_epsilon(&[1.0, 0.0], 1.0, &[1.0, 0.0]).unwrap();
        assert_eq!(eps[1], 0.0);
    }

    #[test]
    fn epsilon_errors() {
        assert!(optimal_epsilon(&[0.0, 0.0], 1.0, &[1.0, 1.0]).is_err());
        assert!(optimal_epsilon(&[0.5, 0.5], -1.0, &[1.0, 1.0]).is_err());
        assert!(optimal_epsilon(&[0.5, 0.5], 1.0, &[0.0, 1.0]).is_err());
        assert!(optimal_epsilon(&[1.0], 1.0, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn unbiased_closed_form() {
        // dev = 0: minimise eta sqrt(qc)/B + B => B = sqrt(eta) qc^(1/4).
        let (eta, qc) = (2.5, 7.0f64);
        let sol = minimize_budget(eta, qc, 0.0);
        let expected = eta.sqrt() * qc.powf(0.25);
        assert!((sol.budget - expected).abs() < 1e-9 * expected);
        assert!((sol.objective - 2.0 * expected).abs() < 1e-9 * expected);
        assert!(!sol.degenerate);
    }

    #[test]
    fn zero_weight_is_degenerate() {
        let sol = minimize_budget(0.0, 3.0, 0.4);
        assert_eq!(sol.budget, 0.0);
        assert_eq!(sol.objective, 0.0);
        assert!(sol.degenerate);
    }

    #[test]
    fn tiny_minimiser_below_initial_bracket() {
        let sol = minimize_budget(1e-12, 1e-12, 0.0);
        let expected = (1e-12f64).sqrt() * (1e-12f64).powf(0.25);
        assert!((sol.budget - expected).abs() < 1e-8 * expected);
    }

    #[test]
    fn first_order_condition_holds() {
        for &(eta, qc, dev) in &[(1.0, 1.0, 0.3), (10.0, 0.2, 1.2), (0.05, 40.0, 0.01)] {
            let b: f64 = minimize_budget(eta, qc, dev).budget;
            let lhs = eta * qc / b.powi(3);
            let rhs = (dev * dev + qc / (b * b)).sqrt();
            assert!((lhs - rhs).abs() <= 1e-6 * rhs, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn single_precision_search() {
        let sol = minimize_budget(1.0f32, 1.0, 0.0);
        assert!((sol.budget - 1.0).abs() < 1e-5);
    }
}
