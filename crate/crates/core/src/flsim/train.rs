use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::model;
use super::partition::Partition;
use super::privacy::{clip_in_place, noise_sigma};
use super::schedule::{build_schedule, SelectionSchedule};
use super::task::SyntheticTask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlRunConfig {
    pub rounds: usize,
    pub clients_per_round: usize,
    pub clip: f64,
    pub learning_rate: f64,
    pub delta: f64,
    pub c2: f64,
}

impl Default for FlRunConfig {
    fn default() -> Self {
        Self {
            rounds: 1000,
            clients_per_round: 10,
            clip: 6.0,
            learning_rate: 0.1,
            delta: 1e-5,
            c2: 1.0,
        }
    }
}

impl FlRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::config("rounds", "must be at least 1"));
        }
        if self.clients_per_round == 0 {
            return Err(Error::config("clients_per_round", "must be at least 1"));
        }
        if !(self.clip > 0.0) {
            return Err(Error::config("clip", format!("must be > 0, got {}", self.clip)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", format!("must be >= 0, got {}", self.learning_rate)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.c2 > 0.0 && self.c2.is_finite()) {
            return Err(Error::config("c2", format!("must be > 0, got {}", self.c2)));
        }
        Ok(())
    }
}

/// Selection probabilities, privacy budgets and payments handed to training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPlan {
    pub mechanism: String,
    pub probabilities: Vec<f64>,
    pub budgets: Vec<f64>,
    pub total_budget: f64,
    pub payments: Vec<f64>,
}

impl SelectionPlan {
    pub fn total_payment(&self) -> f64 {
        self.payments.iter().sum()
    }

    pub fn selected_count(&self) -> usize {
        self.probabilities.iter().filter(|p| **p > 0.0).count()
    }
}

/// Identifies a run in emitted rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLabel {
    pub run_id: String,
    pub seed: u64,
    pub similarity: u32,
    pub eta: f64,
}

/// Independent streams consumed by one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub schedule: u64,
    pub noise: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub label: RunLabel,
    pub mechanism: String,
    pub rounds: Vec<RoundMetrics>,
    pub total_payment: f64,
    pub diverged: bool,
    pub participations: Vec<usize>,
    pub sigmas: Vec<Option<f64>>,
    pub budgets: Vec<f64>,
}

pub const CSV_HEADER: &str =
    "run_id,mechanism,seed,s,eta,round,train_loss,test_loss,test_accuracy,cumulative_monetary_cost";

impl RunRecord {
    pub fn final_metrics(&self) -> Option<&RoundMetrics> {
        self.rounds.last()
    }

    pub fn final_accuracy(&self) -> f64 {
        self.final_metrics().map_or(f64::NAN, |m| m.test_accuracy)
    }

    /// One comma-separated line per round, without the header.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for m in &self.rounds {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                self.label.run_id,
                self.mechanism,
                self.label.seed,
                self.label.similarity,
                self.label.eta,
                m.round,
                m.train_loss,
                m.test_loss,
                m.test_accuracy,
                self.total_payment
            );
        }
        out
    }
}

/// Model and per-client noise of a run in progress.
#[derive(Debug, Clone)]
pub struct DpTrainState {
    pub weights: Vec<f64>,
    pub learning_rate: f64,
    pub clip: f64,
    pub sigmas: Vec<Option<f64>>,
    pub delta: f64,
    pub round: usize,
}

impl DpTrainState {
    /// Calibrates each client's noise from its realised participation count.
    pub fn new(init: Vec<f64>, plan: &SelectionPlan, schedule: &SelectionSchedule, run: &FlRunConfig) -> Result<Self> {
        if plan.budgets.len() != schedule.clients() {
            return Err(Error::domain("plan and schedule disagree on the client count"));
        }
        let sigmas = schedule
            .participations
            .iter()
            .zip(&plan.budgets)
            .map(|(&t, &eps)| match t {
                0 => Ok(None),
                _ => noise_sigma(t, eps, run.delta, run.c2).map(Some),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            weights: init,
            learning_rate: run.learning_rate,
            clip: run.clip,
            sigmas,
            delta: run.delta,
            round: 0,
        })
    }

    /// Applies one aggregate-and-step round for the given client multiset.
    pub fn step<R: rand::Rng>(
        &mut self,
        task: &SyntheticTask,
        partition: &Partition,
        selected: &[usize],
        rng: &mut R,
    ) -> Result<()> {
        let mut total = vec![0.0; self.weights.len()];
        for &k in selected {
            let sigma = self.sigmas[k].ok_or_else(|| Error::domain(format!("client {k} has no noise level")))?;
            let g = local_noisy_gradient(&self.weights, task, partition.shard(k), self.clip, sigma, rng)?;
            total.iter_mut().zip(&g).for_each(|(t, x)| *t += x);
        }
        let scale = self.learning_rate / selected.len().max(1) as f64;
        self.weights.iter_mut().zip(&total).for_each(|(w, g)| *w -= scale * g);
        self.round += 1;
        Ok(())
    }
}

/// Mean of per-example clipped gradients over `shard`, without noise.
pub fn clipped_mean_gradient(weights: &[f64], task: &SyntheticTask, shard: &[usize], clip: f64) -> Result<Vec<f64>> {
    if shard.is_empty() {
        return Err(Error::domain("empty shard"));
    }
    let mut sum = vec![0.0; weights.len()];
    let mut g = vec![0.0; weights.len()];
    for &i in shard {
        model::example_loss_grad(weights, task.train_row(i), task.train_y[i], task.classes, &mut g);
        clip_in_place(&mut g, clip);
        sum.iter_mut().zip(&g).for_each(|(s, x)| *s += x);
    }
    let n = shard.len() as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Ok(sum)
}

/// Clipped mean gradient plus `N(0, sigma^2 clip^2)` noise per coordinate.
pub fn local_noisy_gradient<R: rand::Rng>(
    weights: &[f64],
    task: &SyntheticTask,
    shard: &[usize],
    clip: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut g = clipped_mean_gradient(weights, task, shard, clip)?;
    let scale = sigma * clip;
    if scale > 0.0 {
        for x in g.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *x += scale * z;
        }
    }
    Ok(g)
}

/// Small Gaussian initial weights.
pub fn initial_weights(parameters: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, scale.max(0.0)).expect("finite scale");
    (0..parameters).map(|_| normal.sample(&mut rng)).collect()
}

/// Mean local loss of every client at `weights`.
pub fn client_losses(weights: &[f64], task: &SyntheticTask, partition: &Partition) -> Vec<f64> {
    partition
        .shards
        .iter()
        .map(|shard| {
            shard.iter().map(|&i| model::example_loss(weights, task.train_row(i), task.train_y[i], task.classes)).sum::<f64>()
                / shard.len().max(1) as f64
        })
        .collect()
}

fn measure(weights: &[f64], task: &SyntheticTask, round: usize) -> RoundMetrics {
    let (train_loss, _) = model::evaluate(weights, &task.train_x, &task.train_y, task.dim, task.classes);
    let (test_loss, test_accuracy) = model::evaluate(weights, &task.test_x, &task.test_y, task.dim, task.classes);
    RoundMetrics { round, train_loss, test_loss, test_accuracy }
}

/// Runs every round of the plan. A non-finite loss marks the run diverged;
/// the model is frozen from then on and the remaining rounds are still
/// recorded.
pub fn train(
    task: &SyntheticTask,
    partition: &Partition,
    plan: &SelectionPlan,
    run: &FlRunConfig,
    init: Vec<f64>,
    label: RunLabel,
    seeds: RunSeeds,
) -> Result<RunRecord> {
    run.validate()?;
    if init.len() != task.parameter_count() {
        return Err(Error::domain("initial weights have the wrong dimension"));
    }
    if plan.probabilities.len() != partition.clients() {
        return Err(Error::domain("plan and partition disagree on the client count"));
    }
    let schedule = build_schedule(&plan.probabilities, run.rounds, run.clients_per_round, seeds.schedule)?;
    let mut state = DpTrainState::new(init, plan, &schedule, run)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.noise);
    let mut rounds = Vec::with_capacity(run.rounds);
    let mut diverged = false;
    for (t, selected) in schedule.rounds.iter().enumerate() {
        if !diverged {
            state.step(task, partition, selected, &mut rng)?;
        }
        let metrics = measure(&state.weights, task, t + 1);
        if !diverged && !(metrics.train_loss.is_finite() && metrics.test_loss.is_finite()) {
            diverged = true;
        }
        rounds.push(metrics);
    }
    Ok(RunRecord {
        label,
        mechanism: plan.mechanism.clone(),
        rounds,
        total_payment: plan.total_payment(),
        diverged,
        participations: schedule.participations,
        sigmas: state.sigmas,
        budgets: plan.budgets.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flsim::partition::partition_noniid;
    use crate::flsim::task::TaskSpec;

    fn small() -> (SyntheticTask, Partition) {
        let spec = TaskSpec { dim: 3, classes: 3, samples_per_client: 20, test_size: 60, ..TaskSpec::default() };
        let task = SyntheticTask::generate(&spec, 4, 11).unwrap();
        let part = partition_noniid(&task, 4, 50, 2).unwrap();
        (task, part)
    }

    fn plan(n: usize, eps: f64) -> SelectionPlan {
        SelectionPlan {
            mechanism: "test".into(),
            probabilities: vec![1.0 / n as f64; n],
            budgets: vec![eps; n],
            total_budget: 0.0,
            payments: vec![0.5; n],
        }
    }

    fn label() -> RunLabel {
        RunLabel { run_id: "r".into(), seed: 0, similarity: 50, eta: 1.0 }
    }

    #[test]
    fn single_example_gradient_is_analytic() {
        let (task, _) = small();
        let w = initial_weights(task.parameter_count(), 0.3, 1);
        let mut expected = vec![0.0; w.len()];
        model::example_loss_grad(&w, task.train_row(5), task.train_y[5], 3, &mut expected);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let got = local_noisy_gradient(&w, &task, &[5], 1e9, 0.0, &mut rng).unwrap();
        assert_eq!(got, expected);
    }

    #[test]
    fn tiny_clip_vanishes() {
        let (task, part) = small();
        let w = initial_weights(task.parameter_count(), 0.3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = local_noisy_gradient(&w, &task, part.shard(0), 1e-12, 0.0, &mut rng).unwrap();
        assert!(g.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1e-12 * (1.0 + 1e-9));
    }

    #[test]
    fn empty_shard_rejected() {
        let (task, _) = small();
        let w = vec![0.0; task.parameter_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(local_noisy_gradient(&w, &task, &[], 1.0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn zero_learning_rate_freezes_model() {
        let (task, part) = small();
        let run = FlRunConfig { rounds: 5, clients_per_round: 2, learning_rate: 0.0, ..FlRunConfig::default() };
        let init = initial_weights(task.parameter_count(), 0.1, 3);
        let rec = train(&task, &part, &plan(4, 1.0), &run, init, label(), RunSeeds { schedule: 1, noise: 2 }).unwrap();
        assert_eq!(rec.rounds.len(), 5);
        assert!(rec.rounds.windows(2).all(|w| w[0].test_loss == w[1].test_loss));
        assert_eq!(rec.total_payment, 2.0);
    }

    #[test]
    fn zero_budget_for_trained_client_is_config_error() {
        let (task, part) = small();
        let run = FlRunConfig { rounds: 5, clients_per_round: 2, ..FlRunConfig::default() };
        let init = vec![0.0; task.parameter_count()];
        let err = train(&task, &part, &plan(4, 0.0), &run, init, label(), RunSeeds { schedule: 1, noise: 2 });
        assert!(matches!(err, Err(Error::Config { .. })));
    }

    #[test]
    fn divergence_is_recorded() {
        let (task, part) = small();
        let run = FlRunConfig { rounds: 4, clients_per_round: 2, learning_rate: f64::MAX, ..FlRunConfig::default() };
        let init = vec![0.0; task.parameter_count()];
        let rec = train(&task, &part, &plan(4, 1e-3), &run, init, label(), RunSeeds { schedule: 1, noise: 2 }).unwrap();
        assert!(rec.diverged);
        assert_eq!(rec.rounds.len(), 4);
    }

    #[test]
    fn csv_rows_carry_payment() {
        let (task, part) = small();
        let run = FlRunConfig { rounds: 3, clients_per_round: 1, ..FlRunConfig::default() };
        let init = vec![0.0; task.parameter_count()];
        let rec = train(&task, &part, &plan(4, 5.0), &run, init, label(), RunSeeds { schedule: 1, noise: 2 }).unwrap();
        let rows = rec.csv_rows();
        assert_eq!(rows.lines().count(), 3);
        assert!(rows.lines().all(|l| l.starts_with("r,test,0,50,1,") && l.ends_with(",2")));
        assert_eq!(CSV_HEADER.split(',').count(), rows.lines().next().unwrap().split(',').count());
    }
}
