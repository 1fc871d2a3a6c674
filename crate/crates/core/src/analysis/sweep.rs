//! Classification accuracy as a function of Frobenius perturbation of the
//! PCA representation.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::knn::{knn_cv_with, FoldMode};
use crate::apps::{pca_transform_matrix, PcaModel};
use crate::error::{Error, Result};
use crate::matrix_store::DataMatrix;
use crate::noise::perturb_matrix_frobenius;
use crate::rng::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub neighbors: usize,
    pub folds: usize,
    pub fold_mode: FoldMode,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            neighbors: 7,
            folds: 10,
            fold_mode: FoldMode::Stratified,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub xi: f64,
    /// Mean |Y' - Y|_F over the trials.
    pub observed_error: f64,
    pub accuracy_mean: f64,
    /// Sample standard deviation; 0 for a single trial.
    pub accuracy_std: f64,
}

pub const SWEEP_HEADER: [&str; 4] = ["xi", "observed_frobenius_error", "accuracy_mean", "accuracy_std"];

impl SweepRow {
    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.xi.to_string(),
            self.observed_error.to_string(),
            self.accuracy_mean.to_string(),
            self.accuracy_std.to_string(),
        ]
    }
}

/// Perturbs the representation `A V_k` of `m` under `model`.
pub fn accuracy_vs_error_sweep(
    m: &DataMatrix,
    labels: &[usize],
    model: &PcaModel,
    xi_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let y = pca_transform_matrix(model, m)?.y;
    sweep_representation(&y, labels, xi_grid, trials, SweepOptions::default(), seed)
}

/// Every grid point uses the same fold assignment; perturbations draw from
/// per-(grid point, trial) child seeds. Rows come back sorted by xi.
pub fn sweep_representation(
    y: &DMatrix<f64>,
    labels: &[usize],
    xi_grid: &[f64],
    trials: usize,
    opts: SweepOptions,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if xi_grid.is_empty() {
        return Err(Error::param("xi_grid", "must not be empty"));
    }
    if trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    let mut grid = xi_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let stream = SeedStream::new(seed);
    let fold_seed = stream.child("folds");
    grid.par_iter()
        .enumerate()
        .map(|(g, &xi)| {
            let mut errs = Vec::with_capacity(trials);
            let mut accs = Vec::with_capacity(trials);
            for t in 0..trials {
                let pseed = stream.child_index("perturb", (g * trials + t) as u64);
                let yp = perturb_matrix_frobenius(y, xi, pseed)?;
                errs.push((&yp - y).norm());
                let r = knn_cv_with(&yp, labels, opts.neighbors, opts.folds, opts.fold_mode, fold_seed)?;
                accs.push(r.accuracy);
            }
            let n = trials as f64;
            let mean = accs.iter().sum::<f64>() / n;
            let std = if trials > 1 {
                (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            Ok(SweepRow {
                xi,
                observed_error: errs.iter().sum::<f64>() / n,
                accuracy_mean: mean,
                accuracy_std: std,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub rho: f64,
    /// Two-sided p-value of the t approximation with n - 2 degrees of freedom.
    pub p_value: f64,
    pub n: usize,
}

/// Ranks starting at 1, ties get the average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Spearman rank correlation. Constant inputs give rho = 0 and p = 1.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Trend> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            expected: (x.len(), 1),
            got: (y.len(), 1),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::param("n", "need at least 3 points"));
    }
    let rho = pearson(&average_ranks(x), &average_ranks(y));
    let df = (n - 2) as f64;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numeric(e.to_string()))?;
        2.0 * dist.cdf(-t.abs())
    };
    Ok(Trend { rho, p_value, n })
}

/// Trend of mean accuracy against xi.
pub fn sweep_trend(rows: &[SweepRow]) -> Result<Trend> {
    let xi: Vec<f64> = rows.iter().map(|r| r.xi).collect();
    let acc: Vec<f64> = rows.iter().map(|r| r.accuracy_mean).collect();
    spearman(&xi, &acc)
}
