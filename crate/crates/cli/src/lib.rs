//! Configuration-driven driver for solving, simulating, auditing and
//! sweeping the mechanism.

pub mod audit;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;

pub use audit::{run_audit, AuditReport};
pub use config::ExperimentConfig;
pub use error::{CliError, Result};
