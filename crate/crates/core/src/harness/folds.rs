//! Half-split cross validation over seeded fold labels.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::memory::{Split, TaskSpec};

/// Labels every task with a fold in `0..n_folds`. Labels come from a seeded
/// shuffle, so fold sizes differ by at most one. Task order is preserved.
pub fn split_folds(tasks: &[TaskSpec], n_folds: usize, seed: u64) -> Result<Vec<TaskSpec>, HarnessError> {
    if n_folds < 2 {
        return Err(HarnessError::Fold(format!("need at least 2 folds, got {n_folds}")));
    }
    if tasks.len() < n_folds {
        return Err(HarnessError::Fold(format!(
            "{} tasks cannot fill {n_folds} folds",
            tasks.len()
        )));
    }
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labeled = tasks.to_vec();
    for (rank, &i) in order.iter().enumerate() {
        labeled[i].fold = (rank % n_folds) as u32;
    }
    Ok(labeled)
}

/// Splits labeled tasks into (train, eval). Direction 0 trains on the lower
/// half of the folds and evaluates on the rest; direction 1 swaps the roles.
pub fn partition(labeled: &[TaskSpec], n_folds: usize, direction: usize) -> (Vec<TaskSpec>, Vec<TaskSpec>) {
    let half = (n_folds / 2) as u32;
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for task in labeled {
        let lower = task.fold < half;
        let is_train = if direction == 0 { lower } else { !lower };
        let mut task = task.clone();
        if is_train {
            task.split = Split::Train;
            train.push(task);
        } else {
            task.split = Split::Eval;
            eval.push(task);
        }
    }
    (train, eval)
}
