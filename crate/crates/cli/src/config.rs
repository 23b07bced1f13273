use std::path::{Path, PathBuf};

use jsam::flsim::{FlRunConfig, MechanismKind, PaymentSettings, TaskSpec};
use jsam::mechanism::{DpLossCoefficient, ObjectiveForm};
use jsam::{CostDistribution, ServerConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Uniform { low: f64, high: f64 },
    TruncatedGaussian { mean: f64, std_dev: f64, low: f64, high: f64 },
}

impl Default for DistributionSpec {
    fn default() -> Self {
        DistributionSpec::Uniform { low: 0.0, high: 1.0 }
    }
}

impl DistributionSpec {
    pub fn build(&self) -> Result<CostDistribution> {
        let dist = match *self {
            DistributionSpec::Uniform { low, high } => CostDistribution::uniform(low, high),
            DistributionSpec::TruncatedGaussian { mean, std_dev, low, high } => {
                CostDistribution::truncated_gaussian(mean, std_dev, low, high)
            }
        };
        dist.map_err(|e| CliError::invalid("distribution", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSpec {
    pub eta: f64,
    /// Direct loss coefficient; when absent it is built from `c2`, `delta`,
    /// the model dimension, the round count and `smoothness`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    pub smoothness: f64,
    /// Defaults to `min(1e-3, 1/N)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_delta: Option<f64>,
    pub objective_form: ObjectiveForm,
}

impl Default for ServerSpec {
    fn default() -> Self {
        Self { eta: 1.0, q: None, smoothness: 1.0, grid_delta: None, objective_form: ObjectiveForm::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlSpec {
    pub rounds: usize,
    pub clients_per_round: usize,
    pub clip: f64,
    pub learning_rate: f64,
    pub delta: f64,
    pub c2: f64,
    /// Percentage of each shard drawn uniformly from the pool.
    pub similarity: u32,
    pub init_scale: f64,
}

impl Default for FlSpec {
    fn default() -> Self {
        let run = FlRunConfig::default();
        Self {
            rounds: run.rounds,
            clients_per_round: run.clients_per_round,
            clip: run.clip,
            learning_rate: run.learning_rate,
            delta: run.delta,
            c2: run.c2,
            similarity: 30,
            init_scale: 0.01,
        }
    }
}

impl FlSpec {
    pub fn run_config(&self) -> FlRunConfig {
        FlRunConfig {
            rounds: self.rounds,
            clients_per_round: self.clients_per_round,
            clip: self.clip,
            learning_rate: self.learning_rate,
            delta: self.delta,
            c2: self.c2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PaymentSpec {
    pub grid_points: usize,
    pub samples: usize,
}

impl Default for PaymentSpec {
    fn default() -> Self {
        let d = PaymentSettings::default();
        Self { grid_points: d.grid_points, samples: d.samples }
    }
}

/// Deliberate defects used to show that the audit catches them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Injection {
    /// Subtract the integral term from the payment instead of adding it.
    NegatedIntegral,
    /// Reverse the interim allocation so budgets rise with cost.
    IncreasingAllocation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSpec {
    pub clients: usize,
    pub instances: usize,
    pub oracle_step: f64,
    pub grid_points: usize,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inject: Option<Injection>,
}

impl Default for AuditSpec {
    fn default() -> Self {
        Self { clients: 3, instances: 10, oracle_step: 0.01, grid_points: 50, samples: 2000, inject: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub eta_grid: Vec<f64>,
    pub budget_grid: Vec<f64>,
    /// Also train every mechanism at every grid point.
    pub train: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub clients: usize,
    /// Root of every derived random stream.
    pub seed: u64,
    /// Seed indices; each gives its own data, partition and cost profile.
    pub seeds: Vec<u64>,
    pub mechanisms: Vec<MechanismKind>,
    /// Rescale budget-linear baselines to JSAM's total payment per seed.
    pub matched_cost: bool,
    /// Explicit reported costs; otherwise drawn from the distribution.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub costs: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub distribution: DistributionSpec,
    pub server: ServerSpec,
    pub fl: FlSpec,
    pub task: TaskSpec,
    pub payments: PaymentSpec,
    pub audit: AuditSpec,
    pub sweep: SweepSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            clients: 100,
            seed: 0,
            seeds: vec![0],
            mechanisms: vec![MechanismKind::Jsam, MechanismKind::Usbm],
            matched_cost: false,
            costs: None,
            output: None,
            distribution: DistributionSpec::default(),
            server: ServerSpec::default(),
            fl: FlSpec::default(),
            task: TaskSpec::default(),
            payments: PaymentSpec::default(),
            audit: AuditSpec::default(),
            sweep: SweepSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn grid_delta(&self) -> f64 {
        self.server.grid_delta.unwrap_or_else(|| (1.0 / self.clients.max(1) as f64).min(1e-3))
    }

    pub fn dp_loss(&self) -> DpLossCoefficient<f64> {
        match self.server.q {
            Some(q) => DpLossCoefficient::Direct(q),
            None => DpLossCoefficient::Constituents {
                c2: self.fl.c2,
                delta: self.fl.delta,
                dimension: self.task.classes * (self.task.dim + 1),
                iterations: self.fl.rounds,
                smoothness: self.server.smoothness,
            },
        }
    }

    /// Server configuration at weight `eta`.
    pub fn server_config(&self, eta: f64) -> Result<ServerConfig> {
        let cfg = ServerConfig {
            eta,
            dp_loss: self.dp_loss(),
            grid_delta: self.grid_delta(),
            objective_form: self.server.objective_form,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(CliError::invalid("clients", "need at least one client"));
        }
        if self.seeds.is_empty() {
            return Err(CliError::invalid("seeds", "need at least one seed"));
        }
        if self.mechanisms.is_empty() {
            return Err(CliError::invalid("mechanisms", "need at least one mechanism"));
        }
        for kind in &self.mechanisms {
            if let MechanismKind::Fsbm(m) = kind {
                if *m == 0 || *m > self.clients {
                    return Err(CliError::invalid("mechanisms", format!("{kind}: subset size must lie in 1..={}", self.clients)));
                }
            }
        }
        if self.matched_cost && !self.mechanisms.contains(&MechanismKind::Jsam) {
            return Err(CliError::invalid("matched_cost", "needs jsam among the mechanisms"));
        }
        let dist = self.distribution.build()?;
        if let Some(costs) = &self.costs {
            if costs.len() != self.clients {
                return Err(CliError::invalid("costs", format!("expected {} values, got {}", self.clients, costs.len())));
            }
            if let Some(c) = costs.iter().find(|c| !dist.contains(**c)) {
                return Err(CliError::invalid("costs", format!("{c} lies outside the cost distribution's support")));
            }
        }
        self.server_config(self.server.eta)?;
        if !(self.server.smoothness > 0.0) {
            return Err(CliError::invalid("smoothness", "must be > 0"));
        }
        self.fl.run_config().validate()?;
        if self.fl.similarity > 100 {
            return Err(CliError::invalid("similarity", "must lie in [0, 100]"));
        }
        if !(self.fl.init_scale >= 0.0 && self.fl.init_scale.is_finite()) {
            return Err(CliError::invalid("init_scale", "must be >= 0"));
        }
        if self.payments.grid_points < 2 || self.payments.samples == 0 {
            return Err(CliError::invalid("payments", "need at least two grid points and one sample"));
        }
        if self.audit.clients == 0 || self.audit.clients > 4 {
            return Err(CliError::invalid("audit.clients", "oracle checks support 1 to 4 clients"));
        }
        if self.audit.grid_points < 2 || self.audit.samples == 0 {
            return Err(CliError::invalid("audit", "need at least two grid points and one sample"));
        }
        for eta in &self.sweep.eta_grid {
            self.server_config(*eta)?;
        }
        if self.sweep.budget_grid.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(CliError::invalid("budget_grid", "budgets must be finite and > 0"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.clients, 100);
        assert_eq!(cfg.fl.rounds, 1000);
        assert_eq!(cfg.fl.clients_per_round, 10);
        assert_eq!(cfg.fl.clip, 6.0);
        assert_eq!(cfg.fl.delta, 1e-5);
        assert_eq!(cfg.grid_delta(), 1e-3);
    }

    #[test]
    fn negative_eta_names_field() {
        let err = ExperimentConfig::from_toml_str("[server]\neta = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("eta"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(ExperimentConfig::from_toml_str("client = 3\n").is_err());
    }

    #[test]
    fn round_trip() {
        let text = r#"
clients = 4
seeds = [1, 2]
mechanisms = ["jsam", "fsbm-2", "jsam-ci"]
costs = [0.1, 0.2, 0.3, 0.4]

[distribution]
kind = "truncated_gaussian"
mean = 0.5
std_dev = 0.2
low = 0.0
high = 1.0

[server]
eta = 2.5
q = 0.75
objective_form = "paper_literal"

[audit]
inject = "negated_integral"

[sweep]
eta_grid = [0.1, 1.0]
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.mechanisms[1], MechanismKind::Fsbm(2));
    }
}
