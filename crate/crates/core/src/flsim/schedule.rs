use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Client multisets for every round, drawn before training starts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionSchedule {
    pub rounds: Vec<Vec<usize>>,
    pub participations: Vec<usize>,
    pub seed: u64,
}

impl SelectionSchedule {
    pub fn clients(&self) -> usize {
        self.participations.len()
    }
}

/// Draws `per_round` clients with replacement from `probabilities` for each
/// of `rounds` rounds.
pub fn build_schedule(probabilities: &[f64], rounds: usize, per_round: usize, seed: u64) -> Result<SelectionSchedule> {
    let total: f64 = probabilities.iter().sum();
    if probabilities.is_empty() || probabilities.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-6 {
        return Err(Error::domain(format!("selection probabilities must lie on the simplex (sum {total})")));
    }
    if per_round == 0 {
        return Err(Error::config("clients_per_round", "must be at least 1"));
    }
    let index = WeightedIndex::new(probabilities).map_err(|e| Error::domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut participations = vec![0; probabilities.len()];
    let rounds = (0..rounds)
        .map(|_| {
            (0..per_round)
                .map(|_| {
                    let k = index.sample(&mut rng);
                    participations[k] += 1;
                    k
                })
                .collect()
        })
        .collect();
    Ok(SelectionSchedule { rounds, participations, seed })
}
