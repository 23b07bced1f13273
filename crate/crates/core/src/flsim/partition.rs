use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::task::SyntheticTask;

/// Assignment of pool indices to clients.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub similarity: u32,
    /// Leading entries of every shard that were drawn uniformly.
    pub uniform_per_client: usize,
    pub shards: Vec<Vec<usize>>,
}

impl Partition {
    pub fn clients(&self) -> usize {
        self.shards.len()
    }

    pub fn shard(&self, client: usize) -> &[usize] {
        &self.shards[client]
    }
}

/// Similarity-controlled split: each client first receives
/// `ceil(s * M / 100)` points drawn uniformly from the shuffled pool; the
/// remaining points are sorted by label and dealt out in contiguous blocks,
/// so each client's remainder covers at most two classes.
pub fn partition_noniid(task: &SyntheticTask, clients: usize, similarity: u32, seed: u64) -> Result<Partition> {
    if similarity > 100 {
        return Err(Error::config("similarity", "must lie in [0, 100]"));
    }
    let per_client = task.samples_per_client;
    if clients == 0 || clients * per_client != task.pool_size() {
        return Err(Error::config("clients", "pool size must equal clients * samples_per_client"));
    }
    let uniform = (similarity as usize * per_client).div_ceil(100);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..task.pool_size()).collect();
    pool.shuffle(&mut rng);

    let mut shards: Vec<Vec<usize>> = pool[..clients * uniform].chunks(uniform.max(1)).map(<[usize]>::to_vec).collect();
    shards.resize(clients, Vec::new());

    let mut rest = pool[clients * uniform..].to_vec();
    rest.sort_by_key(|&i| (task.train_y[i], i));
    let block = per_client - uniform;
    for (k, chunk) in rest.chunks(block.max(1)).enumerate().take(clients) {
        let first = task.train_y[chunk[0]];
        let distinct = 1 + chunk.windows(2).filter(|w| task.train_y[w[0]] != task.train_y[w[1]]).count();
        if distinct > 2 {
            return Err(Error::Partition(format!(
                "client {k} block starting at class {first} spans {distinct} classes; use fewer classes or more samples per client"
            )));
        }
        shards[k].extend_from_slice(chunk);
    }
    Ok(Partition { similarity, uniform_per_client: uniform, shards })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flsim::task::TaskSpec;

    fn task(clients: usize) -> SyntheticTask {
        let spec = TaskSpec { classes: 4, samples_per_client: 40, test_size: 10, ..TaskSpec::default() };
        SyntheticTask::generate(&spec, clients, 3).unwrap()
    }

    #[test]
    fn covers_pool_exactly_once() {
        let t = task(10);
        for s in [0, 30, 100] {
            let p = partition_noniid(&t, 10, s, 1).unwrap();
            let mut all: Vec<usize> = p.shards.iter().flatten().copied().collect();
            assert!(p.shards.iter().all(|sh| sh.len() == 40));
            all.sort_unstable();
            assert_eq!(all, (0..400).collect::<Vec<_>>());
        }
    }

    #[test]
    fn zero_similarity_is_label_skewed() {
        let t = task(10);
        let p = partition_noniid(&t, 10, 0, 1).unwrap();
        for sh in &p.shards {
            let mut labels: Vec<usize> = sh.iter().map(|&i| t.train_y[i]).collect();
            labels.sort_unstable();
            labels.dedup();
            assert!(labels.len() <= 2);
        }
    }

    #[test]
    fn block_spanning_three_classes_fails() {
        let spec = TaskSpec { classes: 8, samples_per_client: 40, test_size: 10, ..TaskSpec::default() };
        let t = SyntheticTask::generate(&spec, 2, 0).unwrap();
        assert!(matches!(partition_noniid(&t, 2, 0, 0), Err(Error::Partition(_))));
    }

    #[test]
    fn bad_similarity() {
        assert!(partition_noniid(&task(2), 2, 101, 0).is_err());
    }
}
