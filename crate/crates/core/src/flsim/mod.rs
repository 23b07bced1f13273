//! Desk-scale DP federated learning: synthetic data, non-IID partitions,
//! pre-drawn selection schedules, clipped and noised local gradients, and
//! the comparison baselines.

mod baselines;
pub mod model;
mod partition;
mod privacy;
mod schedule;
mod task;
mod train;

pub use baselines::{
    baseline_plan, match_total_payment, payment_schedule, FixedSelectionRule, MechanismContext, MechanismKind,
    PaymentSettings,
};
pub use partition::{partition_noniid, Partition};
pub use privacy::{clip, clip_in_place, implied_epsilon, noise_sigma};
pub use schedule::{build_schedule, SelectionSchedule};
pub use task::{SyntheticTask, TaskSpec};
pub use train::{
    client_losses, clipped_mean_gradient, initial_weights, local_noisy_gradient, train, DpTrainState, FlRunConfig,
    RoundMetrics, RunLabel, RunRecord, RunSeeds, SelectionPlan, CSV_HEADER,
};
