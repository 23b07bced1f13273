//! Bayesian-optimal joint client selection and privacy compensation.
//!
//! Clients are ranked by virtual cost. The optimal selection plan gives the
//! cheapest client at least `1/N`, the next ones exactly `1/N`, a single
//! threshold client at most `1/N` and nobody else anything. Given the plan,
//! budgets follow in closed form from the total monetary cost `B`, and `B`
//! itself solves a one-dimensional convex problem.

mod budget;
mod distribution;
mod solver;
mod structure;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use budget::{
    dp_concentration, minimize_budget, objective_at_budget, optimal_epsilon, problem_objective,
    unbiased_deviation, BudgetSolution,
};
pub use distribution::{CostDistribution, DistributionKind};
pub use solver::{
    jsam_solve, jsam_solve_clients, jsam_solve_with_budget, reduced_objective,
    solve_inner_budget, sort_by_virtual_cost, ThresholdPlan,
};
pub use structure::{verify_structure, verify_structure_with_tol, StructureReport, StructureViolation};

/// Virtual cost `c + F(c)/f(c)` of a reported sensitivity.
pub fn virtual_cost<T: Scalar>(c: T, dist: &CostDistribution<T>) -> Result<T> {
    dist.virtual_cost(c)
}

/// How the deviation from unbiased selection enters the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveForm {
    /// `||p - 1/N||_1`, which under the threshold structure is `2(p_1 - 1/N)`.
    #[default]
    ExactL1,
    /// `2(p_1 - p_h)`, reproducing the printed search objective verbatim.
    PaperLiteral,
}

impl std::str::FromStr for ObjectiveForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact_l1" => Ok(ObjectiveForm::ExactL1),
            "paper_literal" => Ok(ObjectiveForm::PaperLiteral),
            other => Err(Error::config(
                "objective_form",
                format!("expected exact_l1 or paper_literal, got {other:?}"),
            )),
        }
    }
}

impl std::fmt::Display for ObjectiveForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ObjectiveForm::ExactL1 => "exact_l1",
            ObjectiveForm::PaperLiteral => "paper_literal",
        })
    }
}

/// Coefficient `Q` of the DP loss term, given directly or assembled from
/// the moments-accountant constant `c2`, `delta`, model dimension `D`,
/// iteration count `T` and smoothness `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DpLossCoefficient<T> {
    Direct(T),
    Constituents {
        c2: T,
        delta: T,
        dimension: usize,
        iterations: usize,
        smoothness: T,
    },
}

impl<T: Scalar> DpLossCoefficient<T> {
    /// `Q = 2 c2^2 ln(1/delta) D sqrt(T) L` for the constituent form.
    pub fn value(&self) -> T {
        match *self {
            DpLossCoefficient::Direct(q) => q,
            DpLossCoefficient::Constituents {
                c2,
                delta,
                dimension,
                iterations,
                smoothness,
            } => {
                let two = T::lit(2.0);
                two * c2 * c2
                    * delta.recip().ln()
                    * T::lit(dimension as f64)
                    * T::lit(iterations as f64).sqrt()
                    * smoothness
            }
        }
    }
}

/// Server-side parameters of the design problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerConfig<T> {
    /// Weight of the training-loss bound against money.
    pub eta: T,
    pub dp_loss: DpLossCoefficient<T>,
    /// Step of the threshold-probability search.
    pub grid_delta: T,
    pub objective_form: ObjectiveForm,
}

impl<T: Scalar> ServerConfig<T> {
    pub fn new(eta: T, q: T, grid_delta: T) -> Result<Self> {
        let cfg = Self {
            eta,
            dp_loss: DpLossCoefficient::Direct(q),
            grid_delta,
            objective_form: ObjectiveForm::ExactL1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_form(mut self, form: ObjectiveForm) -> Self {
        self.objective_form = form;
        self
    }

    pub fn with_eta(mut self, eta: T) -> Self {
        self.eta = eta;
        self
    }

    pub fn q(&self) -> T {
        self.dp_loss.value()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta >= T::zero()) {
            return Err(Error::config("eta", format!("must be finite and >= 0, got {}", self.eta)));
        }
        if let DpLossCoefficient::Constituents { c2, delta, dimension, iterations, smoothness } =
            self.dp_loss
        {
            if !(delta > T::zero() && delta < T::one()) {
                return Err(Error::config("delta", format!("must lie in (0, 1), got {delta}")));
            }
            if dimension == 0 || iterations == 0 {
                return Err(Error::config("dimension", "dimension and iterations must be >= 1"));
            }
            if !(c2 > T::zero() && smoothness > T::zero()) {
                return Err(Error::config("c2", "c2 and smoothness must be positive"));
            }
        }
        let q = self.q();
        if !(q.is_finite() && q > T::zero()) {
            return Err(Error::config("q", format!("must be finite and > 0, got {q}")));
        }
        if !(self.grid_delta.is_finite() && self.grid_delta > T::zero()) {
            return Err(Error::config(
                "grid_delta",
                format!("must be > 0, got {}", self.grid_delta),
            ));
        }
        Ok(())
    }
}

/// A client's reported sensitivity together with its virtual cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientType<T> {
    /// Zero-based position in the reported profile.
    pub index: usize,
    pub sensitivity: T,
    pub virtual_cost: T,
    pub distribution: CostDistribution<T>,
}

impl<T: Scalar> ClientType<T> {
    pub fn new(index: usize, sensitivity: T, distribution: CostDistribution<T>) -> Result<Self> {
        Ok(Self {
            index,
            sensitivity,
            virtual_cost: distribution.virtual_cost(sensitivity)?,
            distribution,
        })
    }
}

/// Solution of the design problem for one reported profile.
///
/// Vectors are indexed by the client's position in the input profile.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismOutcome<T> {
    pub probabilities: Vec<T>,
    pub budgets: Vec<T>,
    /// Total monetary cost `B = sum_k v_k eps_k`.
    pub total_budget: T,
    /// One-based threshold rank `h` in ascending virtual-cost order.
    pub threshold: usize,
    pub threshold_probability: T,
    pub objective: T,
    /// Client positions in ascending virtual-cost order.
    pub order: Vec<usize>,
    /// Set when `eta = 0` collapses the budget to zero.
    pub degenerate: bool,
    /// Filled in by [`crate::payments`].
    pub payments: Option<Vec<T>>,
}

impl<T: Scalar> MechanismOutcome<T> {
    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn selected_count(&self) -> usize {
        self.probabilities.iter().filter(|p| **p > T::zero()).count()
    }

    pub fn total_payment(&self) -> Option<T> {
        self.payments
            .as_ref()
            .map(|pi| pi.iter().fold(T::zero(), |acc, x| acc + *x))
    }
}
