//! k-nearest-neighbour classification with cross-validation.
//!
//! Distances are squared Euclidean, evaluated coordinate by coordinate.
//! Distance ties go to the lower sample index, vote ties to the lower label.

use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SeedStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldMode {
    /// Class-proportional folds.
    Stratified,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnResult {
    /// Mean of the per-fold accuracies.
    pub accuracy: f64,
    pub per_fold: Vec<f64>,
}

/// Fold index of every sample. Stratified: each class is shuffled with its
/// own child seed and dealt round-robin, continuing the deal across classes.
pub fn assign_folds(labels: &[usize], folds: usize, mode: FoldMode, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::param("folds", "must be at least 2"));
    }
    if labels.len() < folds {
        return Err(Error::param("folds", "more folds than samples"));
    }
    let stream = SeedStream::new(seed);
    let mut out = vec![0; labels.len()];
    match mode {
        FoldMode::Random => {
            let mut idx: Vec<usize> = (0..labels.len()).collect();
            idx.shuffle(&mut rng_from_seed(stream.child("random")));
            for (pos, i) in idx.into_iter().enumerate() {
                out[i] = pos % folds;
            }
        }
        FoldMode::Stratified => {
            let max = labels.iter().copied().max().unwrap_or(0);
            let mut by_class = vec![Vec::new(); max + 1];
            for (i, &l) in labels.iter().enumerate() {
                by_class[l].push(i);
            }
            let mut dealt = 0;
            for (label, mut members) in by_class.into_iter().enumerate() {
                if members.is_empty() {
                    continue;
                }
                if members.len() < folds {
                    return Err(Error::Stratification {
                        label,
                        count: members.len(),
                        folds,
                    });
                }
                members.shuffle(&mut rng_from_seed(stream.child_index("class", label as u64)));
                for i in members {
                    out[i] = dealt % folds;
                    dealt += 1;
                }
            }
        }
    }
    Ok(out)
}

#[derive(PartialEq, PartialOrd)]
struct Cand(f64, usize);

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

fn sq_dist(x: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    let mut d = 0.0;
    for j in 0..x.ncols() {
        let t = x[(a, j)] - x[(b, j)];
        d += t * t;
    }
    d
}

/// Label predicted for `query` from the samples in `train`.
pub fn predict(x: &DMatrix<f64>, labels: &[usize], train: &[usize], query: usize, neighbors: usize) -> usize {
    let mut heap: BinaryHeap<Cand> = BinaryHeap::with_capacity(neighbors + 1);
    for &i in train {
        let c = Cand(sq_dist(x, query, i), i);
        if heap.len() < neighbors {
            heap.push(c);
        } else if c < *heap.peek().unwrap() {
            heap.pop();
            heap.push(c);
        }
    }
    let max = heap.iter().map(|c| labels[c.1]).max().unwrap_or(0);
    let mut votes = vec![0usize; max + 1];
    for c in heap.iter() {
        votes[labels[c.1]] += 1;
    }
    let best = votes.iter().copied().max().unwrap_or(0);
    votes.iter().position(|&v| v == best).unwrap_or(0)
}

/// Cross-validated accuracy of `neighbors`-NN on the rows of `x`.
pub fn knn_cv(x: &DMatrix<f64>, labels: &[usize], neighbors: usize, folds: usize, seed: u64) -> Result<KnnResult> {
    knn_cv_with(x, labels, neighbors, folds, FoldMode::Stratified, seed)
}

pub fn knn_cv_with(
    x: &DMatrix<f64>,
    labels: &[usize],
    neighbors: usize,
    folds: usize,
    mode: FoldMode,
    seed: u64,
) -> Result<KnnResult> {
    if labels.len() != x.nrows() {
        return Err(Error::Shape {
            expected: (x.nrows(), 1),
            got: (labels.len(), 1),
        });
    }
    if neighbors == 0 {
        return Err(Error::param("neighbors", "must be at least 1"));
    }
    let fold = assign_folds(labels, folds, mode, seed)?;
    let per_fold: Vec<f64> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..labels.len()).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..labels.len()).filter(|&i| fold[i] == f).collect();
            let correct: usize = test
                .par_iter()
                .map(|&q| (predict(x, labels, &train, q, neighbors) == labels[q]) as usize)
                .sum();
            correct as f64 / test.len() as f64
        })
        .collect();
    Ok(KnnResult {
        accuracy: per_fold.iter().sum::<f64>() / folds as f64,
        per_fold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn separable_blobs() {
        let mut rng = rng_from_seed(1);
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let x = DMatrix::from_fn(100, 3, |i, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z + if labels[i] == 0 { -10.0 } else { 10.0 }
        });
        let r = knn_cv(&x, &labels, 1, 5, 3).unwrap();
        assert!(r.accuracy > 0.99);
        assert_eq!(r.per_fold.len(), 5);
    }

    #[test]
    fn folds_are_stratified_and_balanced() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let f = assign_folds(&labels, 5, FoldMode::Stratified, 9).unwrap();
        for fold in 0..5 {
            let members: Vec<usize> = (0..100).filter(|&i| f[i] == fold).collect();
            assert_eq!(members.len(), 20);
            for c in 0..4 {
                assert_eq!(members.iter().filter(|&&i| labels[i] == c).count(), 5);
            }
        }
    }

    #[test]
    fn too_small_class_is_rejected() {
        let labels = vec![0, 0, 0, 1, 0, 0];
        assert!(matches!(
            assign_folds(&labels, 3, FoldMode::Stratified, 0),
            Err(Error::Stratification { label: 1, count: 1, folds: 3 })
        ));
        assert!(assign_folds(&labels, 3, FoldMode::Random, 0).is_ok());
    }

    #[test]
    fn ties_go_low() {
        // query at 0; two neighbours at equal distance with labels 1 and 0
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, -1.0]);
        let labels = vec![0, 1, 0];
        assert_eq!(predict(&x, &labels, &[1, 2], 0, 1), 1);
        assert_eq!(predict(&x, &labels, &[1, 2], 0, 2), 0);
    }
}
