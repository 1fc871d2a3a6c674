use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{resolve_delta, resolve_theta, DeltaSpec, FitParams};
use crate::error::{Error, Result};
use crate::io;
use crate::matrix_store::DataMatrix;
use crate::noise;
use crate::qsim::{self, CostRecord, ExtractOptions, Side};
use crate::rng::{rng_from_seed, SeedStream};
use crate::svd_oracle::{compute_svd, SvdModel, DEFAULT_RANK_TOL};

/// Principal components (right singular vectors) with their estimated
/// singular values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    #[serde(skip)]
    pub components: DMatrix<f64>,
    pub sigmas: Vec<f64>,
    /// sigma_hat^2 / |A|_F^2
    pub ratios: Vec<f64>,
    pub p_retained: f64,
    pub k: usize,
    pub theta: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    pub seed: u64,
    pub k_selected: Option<usize>,
    pub p_est: Option<f64>,
    pub measurements_used: Option<u64>,
    pub cost: Vec<CostRecord>,
}

impl PcaModel {
    /// `components.csv`, `sigmas.csv` and `meta.json`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        io::write_matrix_csv(&dir.join("components.csv"), &self.components)?;
        let rows: Vec<Vec<String>> = self
            .sigmas
            .iter()
            .zip(&self.ratios)
            .enumerate()
            .map(|(i, (s, r))| vec![(i + 1).to_string(), io::fmt(*s), io::fmt(*r)])
            .collect();
        io::write_table_csv(&dir.join("sigmas.csv"), &["index", "sigma_hat", "ratio"], &rows)?;
        io::write_json(&dir.join("meta.json"), self)
    }
}

pub fn pca_fit(m: &DataMatrix, params: &FitParams) -> Result<PcaModel> {
    let s = compute_svd(m, DEFAULT_RANK_TOL)?;
    pca_fit_model(&s, params)
}

/// Fit from a precomputed oracle.
pub fn pca_fit_model(s: &SvdModel, params: &FitParams) -> Result<PcaModel> {
    let stream = SeedStream::new(params.seed);
    let rs = qsim::round_spectrum(s, params.eps)?;
    let choice = resolve_theta(s, &rs, params, &stream)?;
    let delta = resolve_delta(params.delta, &rs, choice.theta)?;
    let mut opts = ExtractOptions::new(Side::Right, params.norm);
    opts.shape = noise::NoiseShape::Random;
    let ext = qsim::extract_rounded(s, &rs, choice.theta, delta, &opts, stream.child("extract"))?;
    let mut cost = choice.cost;
    cost.extend(ext.cost.iter().cloned());
    if let DeltaSpec::Xi(xi) = params.delta {
        let k = ext.k as f64;
        let m = s.shape().1 as f64;
        let mu = s.frobenius();
        cost.push(CostRecord::new(
            "pca_fit",
            format!("mu k^2 m/(theta eps xi^2) with mu={mu}, k={k}, m={m}, theta={}, eps={}, xi={xi}", choice.theta, params.eps),
            mu * k * k * m / (choice.theta * params.eps * xi * xi),
        ));
    }
    Ok(PcaModel {
        components: ext.v_hat.expect("right side requested"),
        sigmas: ext.sigma_hats,
        p_retained: ext.p_retained,
        ratios: ext.ratios,
        k: ext.k,
        theta: choice.theta,
        epsilon: params.eps,
        delta,
        gamma: params.gamma,
        seed: params.seed,
        k_selected: choice.k_selected,
        p_est: choice.p_est,
        measurements_used: ext.measurements_used,
        cost,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorProjection {
    pub y: Vec<f64>,
    pub norm_est: f64,
    /// (|a|/|y|) sqrt(2k) delta; infinite when y = 0.
    pub state_error_bound: f64,
    pub undefined: bool,
}

pub fn pca_transform_vector(model: &PcaModel, a: &[f64], eta: f64, seed: u64) -> Result<VectorProjection> {
    let m = model.components.nrows();
    if a.len() != m {
        return Err(Error::Shape {
            expected: (m, 1),
            got: (a.len(), 1),
        });
    }
    let a = DVector::from_column_slice(a);
    let y = model.components.tr_mul(&a);
    let ny = y.norm();
    let mut rng = rng_from_seed(seed);
    let norm_est = noise::relative_estimate(ny, eta, &mut rng)?;
    let undefined = ny == 0.0;
    let state_error_bound = if undefined {
        f64::INFINITY
    } else {
        a.norm() / ny * (2.0 * model.k as f64).sqrt() * model.delta
    };
    Ok(VectorProjection {
        y: y.iter().copied().collect(),
        norm_est,
        state_error_bound,
        undefined,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixProjection {
    pub y: DMatrix<f64>,
    /// (|A|_F/|Y|_F) sqrt(2k) delta
    pub xi_bound: f64,
    /// |Y|_F^2 / |A|_F^2
    pub p: f64,
}

pub fn pca_transform_matrix(model: &PcaModel, m: &DataMatrix) -> Result<MatrixProjection> {
    let c = &model.components;
    if m.ncols() != c.nrows() {
        return Err(Error::Shape {
            expected: (m.nrows(), c.nrows()),
            got: m.shape(),
        });
    }
    let y = m.values() * c;
    let fy = y.norm();
    let fa = m.frobenius();
    let p = if fa > 0.0 { fy * fy / (fa * fa) } else { 0.0 };
    let xi_bound = if fy > 0.0 {
        fa / fy * (2.0 * model.k as f64).sqrt() * model.delta
    } else {
        f64::INFINITY
    };
    Ok(MatrixProjection { y, xi_bound, p })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepresentabilityRow {
    pub p: f64,
    pub k_p: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Rows with zero norm, excluded from alpha.
    pub zero_rows: usize,
}

/// For each p: k_p, and the fraction alpha of nonzero rows keeping at least
/// beta = p of their norm in the top k_p right singular subspace.
pub fn pca_representability(m: &DataMatrix, s: &SvdModel, p_grid: &[f64]) -> Result<Vec<RepresentabilityRow>> {
    p_grid.iter().map(|&p| pca_representability_beta(m, s, p, p)).collect()
}

pub fn pca_representability_beta(m: &DataMatrix, s: &SvdModel, p: f64, beta: f64) -> Result<RepresentabilityRow> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param("p", "must lie in (0, 1]"));
    }
    if m.ncols() != s.shape().1 {
        return Err(Error::Shape {
            expected: (m.nrows(), s.shape().1),
            got: m.shape(),
        });
    }
    let k_p = s.k_for_variance(p).ok_or(Error::UnreachableTarget {
        target: p,
        reached: s.cumulative_ratio(s.rank()),
    })?;
    let y = m.values() * s.top_v(k_p);
    let norms = m.row_norms();
    let (hits, zero) = (0..m.nrows())
        .into_par_iter()
        .map(|i| {
            if norms[i] == 0.0 {
                (0usize, 1usize)
            } else {
                ((y.row(i).norm() / norms[i] >= beta) as usize, 0)
            }
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let denom = m.nrows() - zero;
    Ok(RepresentabilityRow {
        p,
        k_p,
        alpha: if denom > 0 { hits as f64 / denom as f64 } else { 0.0 },
        beta,
        zero_rows: zero,
    })
}
