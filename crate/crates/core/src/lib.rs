//! Joint client selection and privacy compensation for differentially
//! private federated learning.
//!
//! * [`mechanism`]: virtual costs, the threshold-structured grid search,
//!   closed-form budgets. Generic over [`Scalar`].
//! * [`payments`]: interim allocations and incentive-compatible payments.
//! * [`oracle`]: brute-force solvers used to validate the mechanism.
//! * [`flsim`]: a small DP-FL simulator with the comparison baselines.

pub mod error;
pub mod flsim;
pub mod mechanism;
pub mod oracle;
pub mod payments;
pub mod scalar;
pub mod seed;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type CostDistribution = mechanism::CostDistribution<f64>;
pub type ServerConfig = mechanism::ServerConfig<f64>;
pub type MechanismOutcome = mechanism::MechanismOutcome<f64>;
pub type ClientType = mechanism::ClientType<f64>;

pub type CostDistribution32 = mechanism::CostDistribution<f32>;
pub type ServerConfig32 = mechanism::ServerConfig<f32>;
pub type MechanismOutcome32 = mechanism::MechanismOutcome<f32>;
