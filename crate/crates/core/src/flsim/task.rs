use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of a synthetic Gaussian-blob classification task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSpec {
    pub dim: usize,
    pub classes: usize,
    pub samples_per_client: usize,
    pub test_size: usize,
    /// Standard deviation of the class centres around the origin.
    pub center_spread: f64,
    /// Within-class feature noise.
    pub feature_noise: f64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            dim: 10,
            classes: 4,
            samples_per_client: 100,
            test_size: 2000,
            center_spread: 1.0,
            feature_noise: 1.0,
        }
    }
}

/// A labelled training pool plus a held-out test set, features row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub dim: usize,
    pub classes: usize,
    pub samples_per_client: usize,
    pub centers: Vec<Vec<f64>>,
    pub train_x: Vec<f64>,
    pub train_y: Vec<usize>,
    pub test_x: Vec<f64>,
    pub test_y: Vec<usize>,
}

impl SyntheticTask {
    /// Pool of `clients * samples_per_client` training points with balanced
    /// labels, shuffled.
    pub fn generate(spec: &TaskSpec, clients: usize, seed: u64) -> Result<Self> {
        if spec.classes < 2 {
            return Err(Error::config("classes", "need at least two classes"));
        }
        if spec.dim == 0 || spec.samples_per_client == 0 || spec.test_size == 0 || clients == 0 {
            return Err(Error::config("task", "dimension, sizes and client count must be positive"));
        }
        if !(spec.center_spread > 0.0 && spec.feature_noise >= 0.0) {
            return Err(Error::config("center_spread", "spread must be > 0 and noise >= 0"));
        }
        let pool = clients * spec.samples_per_client;
        if pool < spec.classes {
            return Err(Error::config("samples_per_client", "pool smaller than class count"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centre_dist = Normal::new(0.0, spec.center_spread).expect("positive spread");
        let centers: Vec<Vec<f64>> = (0..spec.classes)
            .map(|_| (0..spec.dim).map(|_| centre_dist.sample(&mut rng)).collect())
            .collect();
        let noise = Normal::new(0.0, spec.feature_noise).expect("non-negative noise");

        let draw = |count: usize, rng: &mut ChaCha8Rng| {
            let mut labels: Vec<usize> = (0..count).map(|i| i % spec.classes).collect();
            labels.shuffle(rng);
            let mut xs = Vec::with_capacity(count * spec.dim);
            for &y in &labels {
                xs.extend(centers[y].iter().map(|c| c + noise.sample(rng)));
            }
            (xs, labels)
        };
        let (train_x, train_y) = draw(pool, &mut rng);
        let (test_x, test_y) = draw(spec.test_size, &mut rng);
        Ok(Self {
            dim: spec.dim,
            classes: spec.classes,
            samples_per_client: spec.samples_per_client,
            centers,
            train_x,
            train_y,
            test_x,
            test_y,
        })
    }

    pub fn pool_size(&self) -> usize {
        self.train_y.len()
    }

    pub fn train_row(&self, i: usize) -> &[f64] {
        &self.train_x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn test_row(&self, i: usize) -> &[f64] {
        &self.test_x[i * self.dim..(i + 1) * self.dim]
    }

    /// Number of model parameters, one weight row plus bias per class.
    pub fn parameter_count(&self) -> usize {
        self.classes * (self.dim + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_pool() {
        let spec = TaskSpec { classes: 3, samples_per_client: 10, ..TaskSpec::default() };
        let task = SyntheticTask::generate(&spec, 6, 1).unwrap();
        assert_eq!(task.pool_size(), 60);
        for k in 0..3 {
            assert_eq!(task.train_y.iter().filter(|y| **y == k).count(), 20);
        }
        assert_eq!(task.train_x.len(), 60 * spec.dim);
        assert_eq!(task.parameter_count(), 3 * 11);
    }

    #[test]
    fn rejects_single_class() {
        let spec = TaskSpec { classes: 1, ..TaskSpec::default() };
        assert!(SyntheticTask::generate(&spec, 4, 0).is_err());
    }

    #[test]
    fn seeded() {
        let spec = TaskSpec::default();
        assert_eq!(
            SyntheticTask::generate(&spec, 3, 5).unwrap(),
            SyntheticTask::generate(&spec, 3, 5).unwrap()
        );
    }
}
