//! Seeded synthetic datasets: prescribed spectra and labelled low-rank
//! point clouds.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_store::DataMatrix;
use crate::rng::{rng_from_seed, SeedStream, SimRng};

fn gaussian(n: usize, m: usize, rng: &mut SimRng) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(rng))
}

/// n x k matrix with orthonormal columns, Haar distributed up to the sign
/// convention of the QR factorization.
pub fn random_orthonormal(n: usize, k: usize, seed: u64) -> Result<DMatrix<f64>> {
    if k > n {
        return Err(Error::param("k", "cannot exceed n"));
    }
    let mut rng = rng_from_seed(seed);
    let q = gaussian(n, k, &mut rng).qr().q();
    Ok(q.columns(0, k).into_owned())
}

/// U diag(sigmas) V^T with random orthonormal factors.
pub fn spectrum_matrix(sigmas: &[f64], n: usize, m: usize, seed: u64) -> Result<DataMatrix> {
    let r = sigmas.len();
    if r > n.min(m) {
        return Err(Error::param("sigmas", "more singular values than min(n, m)"));
    }
    let st = SeedStream::new(seed);
    let u = random_orthonormal(n, r, st.child("u"))?;
    let v = random_orthonormal(m, r, st.child("v"))?;
    let mut us = u;
    for (j, s) in sigmas.iter().enumerate() {
        us.column_mut(j).scale_mut(*s);
    }
    Ok(DataMatrix::new(us * v.transpose()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowRankConfig {
    pub n: usize,
    pub m: usize,
    /// Latent dimension.
    pub rank: usize,
    pub classes: usize,
    /// Latent standard deviations decay as (j + offset)^-decay.
    pub decay: f64,
    pub offset: f64,
    /// Share of the variance of each class direction carried by the class
    /// centroids, in [0, 1). The total variance profile does not depend on it.
    pub class_share: f64,
    /// Number of leading latent directions carrying class information.
    pub class_dims: usize,
    /// Isotropic ambient noise standard deviation.
    pub noise: f64,
    pub seed: u64,
}

impl Default for LowRankConfig {
    fn default() -> Self {
        Self {
            n: 4000,
            m: 784,
            rank: 230,
            classes: 10,
            decay: 0.775,
            offset: 5.0,
            class_share: 0.4,
            class_dims: 40,
            noise: 0.002,
            seed: 2024,
        }
    }
}

/// Labelled samples `x_i = W (c_{y_i} + D z_i) + noise` with orthonormal `W`.
/// Latent direction j has variance (j + offset)^(-2 decay) split between the
/// centroids and the within-class spread. Labels cycle through the classes
/// so every class has n/classes points.
pub fn low_rank_dataset(cfg: &LowRankConfig) -> Result<(DataMatrix, Vec<usize>)> {
    if cfg.rank == 0 || cfg.rank > cfg.m || cfg.classes == 0 || cfg.n == 0 {
        return Err(Error::param("rank", "need 1 <= rank <= m and at least one class and sample"));
    }
    if !(0.0..1.0).contains(&cfg.class_share) {
        return Err(Error::param("class_share", "must lie in [0, 1)"));
    }
    let st = SeedStream::new(cfg.seed);
    let w = random_orthonormal(cfg.m, cfg.rank, st.child("basis"))?;
    let scales: Vec<f64> = (0..cfg.rank)
        .map(|j| (j as f64 + cfg.offset).powf(-cfg.decay))
        .collect();
    let mut rng = rng_from_seed(st.child("centroids"));
    let dims = cfg.class_dims.min(cfg.rank);
    let centroids = DMatrix::from_fn(cfg.classes, cfg.rank, |_, j| {
        if j < dims {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * cfg.class_share.sqrt() * scales[j]
        } else {
            0.0
        }
    });
    let mut rng = rng_from_seed(st.child("points"));
    let labels: Vec<usize> = (0..cfg.n).map(|i| i % cfg.classes).collect();
    let within = (1.0 - cfg.class_share).sqrt();
    let latent = DMatrix::from_fn(cfg.n, cfg.rank, |i, j| {
        let z: f64 = StandardNormal.sample(&mut rng);
        let w = if j < dims { within } else { 1.0 };
        centroids[(labels[i], j)] + z * w * scales[j]
    });
    let mut x = latent * w.transpose();
    let mut rng = rng_from_seed(st.child("noise"));
    for v in x.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += cfg.noise * z;
    }
    Ok((DataMatrix::new(x), labels))
}
