use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{resolve_delta, resolve_theta, FitParams};
use crate::bounds::bound_du;
use crate::error::{Error, Result};
use crate::io;
use crate::matrix_store::{build_ca_matrix, build_ca_matrix_smoothed, ContingencyTable};
use crate::qsim::{self, CostRecord, ExtractOptions, Side};
use crate::rng::SeedStream;
use crate::svd_oracle::{compute_svd, DEFAULT_RANK_TOL};

/// Residual matrices below this Frobenius norm count as independence.
pub const ZERO_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaModel {
    /// D_X^-1/2 U_bar
    #[serde(skip)]
    pub row_coords: DMatrix<f64>,
    /// D_Y^-1/2 V_bar
    #[serde(skip)]
    pub col_coords: DMatrix<f64>,
    pub sigmas: Vec<f64>,
    pub ratios: Vec<f64>,
    pub k: usize,
    pub theta: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub bound_row: f64,
    pub bound_col: f64,
    pub residual_frobenius: f64,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub dropped_rows: Vec<String>,
    pub dropped_cols: Vec<String>,
    pub cost: Vec<CostRecord>,
}

impl CaModel {
    pub fn export(&self, dir: &Path) -> Result<()> {
        io::write_matrix_csv(&dir.join("row_coords.csv"), &self.row_coords)?;
        io::write_matrix_csv(&dir.join("col_coords.csv"), &self.col_coords)?;
        io::write_json(&dir.join("meta.json"), self)
    }
}

pub fn ca_fit(t: &ContingencyTable, params: &FitParams) -> Result<CaModel> {
    ca_fit_with(t, params, None)
}

/// `smoothing` adds a constant to every cell before the marginals are taken.
pub fn ca_fit_with(t: &ContingencyTable, params: &FitParams, smoothing: Option<f64>) -> Result<CaModel> {
    let ca = match smoothing {
        Some(a) => build_ca_matrix_smoothed(t, a)?,
        None => build_ca_matrix(t)?,
    };
    let residual_frobenius = ca.matrix.frobenius();
    if residual_frobenius < ZERO_RESIDUAL_TOL {
        let theta = match params.target {
            super::Target::Threshold(th) => th,
            _ => 0.0,
        };
        return Err(Error::EmptyRetention { theta });
    }
    let s = compute_svd(&ca.matrix, DEFAULT_RANK_TOL)?;
    let stream = SeedStream::new(params.seed);
    let rs = qsim::round_spectrum(&s, params.eps)?;
    let choice = resolve_theta(&s, &rs, params, &stream)?;
    let delta = resolve_delta(params.delta, &rs, choice.theta)?;
    let opts = ExtractOptions::new(Side::Both, params.norm);
    let ext = qsim::extract_rounded(&s, &rs, choice.theta, delta, &opts, stream.child("extract"))?;

    let dx = DVector::from_iterator(ca.row_marginals.len(), ca.row_marginals.iter().map(|p| 1.0 / p.sqrt()));
    let dy = DVector::from_iterator(ca.col_marginals.len(), ca.col_marginals.iter().map(|p| 1.0 / p.sqrt()));
    let row_coords = DMatrix::from_diagonal(&dx) * ext.u_hat.as_ref().expect("both sides");
    let col_coords = DMatrix::from_diagonal(&dy) * ext.v_hat.as_ref().expect("both sides");
    let mut cost = choice.cost;
    cost.extend(ext.cost.iter().cloned());
    Ok(CaModel {
        row_coords,
        col_coords,
        bound_row: bound_du(ca.row_scale_frobenius(), delta, ext.k),
        bound_col: bound_du(ca.col_scale_frobenius(), delta, ext.k),
        sigmas: ext.sigma_hats,
        ratios: ext.ratios,
        k: ext.k,
        theta: choice.theta,
        epsilon: params.eps,
        delta,
        residual_frobenius,
        row_labels: ca.row_labels,
        col_labels: ca.col_labels,
        dropped_rows: ca.dropped_rows,
        dropped_cols: ca.dropped_cols,
        cost,
    })
}
