use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Population};

/// Per-sample fold index in `[0, k)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub assignment: Vec<usize>,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified k-fold split.
///
/// Subjects are grouped by label (labels in order of first appearance), each group
/// is shuffled with the seeded RNG, the groups are concatenated and position `p`
/// goes to fold `p mod k`. Fold sizes therefore differ by at most one and every
/// class is spread as evenly as possible.
pub fn split_folds(population: &Population, k: usize, seed: u64) -> Result<FoldAssignment, DataError> {
    let n = population.len();
    if k < 2 || k > n {
        return Err(DataError::InvalidFolds { k, n });
    }
    let assignment = stratified_assignment(&population.class_labels(), k, seed);
    Ok(FoldAssignment { k, assignment })
}

/// Fold index per item following the stratified rule of [`split_folds`]; `k ≥ 1`.
pub fn stratified_assignment<L: PartialEq>(labels: &[L], k: usize, seed: u64) -> Vec<usize> {
    let n = labels.len();
    let mut distinct: Vec<&L> = Vec::new();
    for l in labels {
        if !distinct.contains(&l) {
            distinct.push(l);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(n);
    for label in distinct {
        let mut group: Vec<usize> = (0..n).filter(|&i| &labels[i] == label).collect();
        group.shuffle(&mut rng);
        order.extend(group);
    }
    let mut assignment = vec![0; n];
    for (p, &i) in order.iter().enumerate() {
        assignment[i] = p % k;
    }
    assignment
}
