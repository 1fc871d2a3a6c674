use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{resolve_delta, resolve_theta, FitParams, Target};
use crate::bounds::{bound_us, bound_us_half, bound_us_inv, BoundPair};
use crate::error::{Error, Result};
use crate::io;
use crate::matrix_store::DataMatrix;
use crate::qsim::{self, CostRecord, ExtractOptions, Side};
use crate::rng::SeedStream;
use crate::svd_oracle::{compute_svd, scale_columns, DEFAULT_RANK_TOL};

/// Number of factors when no target is given (capped at the rank).
pub const DEFAULT_LSA_K: usize = 100;

/// Word and document representations from a term-document matrix
/// (words in rows, documents in columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsaModel {
    /// U_bar S_bar
    #[serde(skip)]
    pub word_space: DMatrix<f64>,
    /// V_bar S_bar
    #[serde(skip)]
    pub doc_space: DMatrix<f64>,
    #[serde(skip)]
    pub word_half: DMatrix<f64>,
    #[serde(skip)]
    pub doc_half: DMatrix<f64>,
    /// U_bar S_bar^-1
    #[serde(skip)]
    pub fold_matrix: DMatrix<f64>,
    pub sigmas: Vec<f64>,
    pub k: usize,
    pub theta: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub bound_us: BoundPair,
    pub bound_us_half: BoundPair,
    /// Infinite when eps is not below the singular value floor theta - eps.
    pub bound_us_inv: f64,
    pub cost: Vec<CostRecord>,
}

impl LsaModel {
    pub fn export(&self, dir: &Path) -> Result<()> {
        io::write_matrix_csv(&dir.join("word_space.csv"), &self.word_space)?;
        io::write_matrix_csv(&dir.join("doc_space.csv"), &self.doc_space)?;
        io::write_matrix_csv(&dir.join("word_half.csv"), &self.word_half)?;
        io::write_matrix_csv(&dir.join("doc_half.csv"), &self.doc_half)?;
        io::write_matrix_csv(&dir.join("fold_matrix.csv"), &self.fold_matrix)?;
        io::write_json(&dir.join("meta.json"), self)
    }
}

/// `target = None` keeps min(100, rank) factors.
pub fn lsa_fit(m: &DataMatrix, target: Option<Target>, params: &FitParams) -> Result<LsaModel> {
    let s = compute_svd(m, DEFAULT_RANK_TOL)?;
    let mut params = *params;
    params.target = target.unwrap_or(Target::Components(DEFAULT_LSA_K.min(s.rank().max(1))));
    let stream = SeedStream::new(params.seed);
    let rs = qsim::round_spectrum(&s, params.eps)?;
    let choice = resolve_theta(&s, &rs, &params, &stream)?;
    let theta = choice.theta;
    let eps = params.eps;
    if theta - eps <= 0.0 {
        return Err(Error::BoundPrecondition(format!(
            "theta - eps = {} must be positive to invert the singular values",
            theta - eps
        )));
    }
    let delta = resolve_delta(params.delta, &rs, theta)?;
    let opts = ExtractOptions::new(Side::Both, params.norm);
    let ext = qsim::extract_rounded(&s, &rs, theta, delta, &opts, stream.child("extract"))?;
    let u = ext.u_hat.as_ref().expect("both sides");
    let v = ext.v_hat.as_ref().expect("both sides");
    let sh = &ext.sigma_hats;
    let half: Vec<f64> = sh.iter().map(|x| x.sqrt()).collect();
    let inv: Vec<f64> = sh.iter().map(|x| 1.0 / x).collect();

    // True singular values lie in [sigma_hat - eps, sigma_hat + eps] and above
    // the floor theta - eps.
    let upper: Vec<f64> = sh.iter().map(|x| x + eps).collect();
    let floor = theta - eps;
    let spectral = upper[0];
    let b_us = bound_us(&upper, eps, delta, spectral)?;
    let b_half = bound_us_half(&upper, eps, delta, floor, spectral)?;
    let b_inv = if eps < floor {
        bound_us_inv(eps, delta, floor, ext.k)?
    } else {
        f64::INFINITY
    };
    let mut cost = choice.cost;
    cost.extend(ext.cost.iter().cloned());
    Ok(LsaModel {
        word_space: scale_columns(u, sh),
        doc_space: scale_columns(v, sh),
        word_half: scale_columns(u, &half),
        doc_half: scale_columns(v, &half),
        fold_matrix: scale_columns(u, &inv),
        sigmas: ext.sigma_hats.clone(),
        k: ext.k,
        theta,
        epsilon: eps,
        delta,
        bound_us: b_us,
        bound_us_half: b_half,
        bound_us_inv: b_inv,
        cost,
    })
}

/// x_q^T U_bar S_bar^-1
pub fn lsa_fold_query(model: &LsaModel, x_q: &[f64]) -> Result<DVector<f64>> {
    let n = model.fold_matrix.nrows();
    if x_q.len() != n {
        return Err(Error::Shape {
            expected: (n, 1),
            got: (x_q.len(), 1),
        });
    }
    Ok(model.fold_matrix.tr_mul(&DVector::from_column_slice(x_q)))
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Cosine of a folded query against every row of `space`.
pub fn cosine_similarities(space: &DMatrix<f64>, q: &DVector<f64>) -> Vec<f64> {
    (0..space.nrows())
        .map(|i| {
            let row: Vec<f64> = space.row(i).iter().copied().collect();
            cosine(&row, q.as_slice())
        })
        .collect()
}

pub fn inner_products(space: &DMatrix<f64>, q: &DVector<f64>) -> Vec<f64> {
    (space * q).iter().copied().collect()
}
