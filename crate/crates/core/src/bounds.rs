//! Closed-form error bounds for the PCA, CA and LSA representations built
//! from estimated singular triples, and empirical checkers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{self, NoiseShape, TomographyNorm};
use crate::rng::{rng_from_seed, SeedStream};
use crate::svd_oracle::{scale_columns, SvdModel};

/// Slack used by [`BoundReport::holds`].
pub const HOLDS_TOL: f64 = 1e-12;

/// Per-column (tight) and uniform (loose) forms of a bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub tight: f64,
    pub loose: f64,
}

fn non_negative(name: &'static str, x: f64) -> Result<()> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::param(name, "must be a finite non-negative number"));
    }
    Ok(())
}

fn spectral_of(sigmas: &[f64], spectral: f64) -> Result<f64> {
    let max = sigmas.iter().cloned().fold(0.0, f64::max);
    if spectral < max * (1.0 - 1e-12) {
        return Err(Error::param("spectral", "is below the largest supplied singular value"));
    }
    Ok(spectral)
}

/// |U S - U_bar S_bar|_F <= sqrt(sum_j (eps + delta sigma_j)^2) <= sqrt(k)(eps + delta |A|)
pub fn bound_us(sigmas: &[f64], eps: f64, delta: f64, spectral: f64) -> Result<BoundPair> {
    non_negative("eps", eps)?;
    non_negative("delta", delta)?;
    let spectral = spectral_of(sigmas, spectral)?;
    let tight = sigmas.iter().map(|s| (eps + delta * s).powi(2)).sum::<f64>().sqrt();
    let loose = (sigmas.len() as f64).sqrt() * (eps + delta * spectral);
    Ok(BoundPair { tight, loose })
}

/// |D^-1/2 U - D^-1/2 U_bar|_F <= |D^-1/2|_F sqrt(k) delta
pub fn bound_du(d_inv_sqrt_frobenius: f64, delta: f64, k: usize) -> f64 {
    d_inv_sqrt_frobenius * (k as f64).sqrt() * delta
}

/// |U S^1/2 - U_bar S_bar^1/2|_F <= sqrt(sum_j (delta sqrt(sigma_j) + eps/(2 sqrt(theta)))^2)
///
/// Every sigma must be at least theta.
pub fn bound_us_half(sigmas: &[f64], eps: f64, delta: f64, theta: f64, spectral: f64) -> Result<BoundPair> {
    non_negative("eps", eps)?;
    non_negative("delta", delta)?;
    if !(theta > 0.0) {
        return Err(Error::BoundPrecondition("theta must be positive".into()));
    }
    if let Some(s) = sigmas.iter().find(|&&s| s < theta) {
        return Err(Error::BoundPrecondition(format!(
            "singular value {s} is below the floor theta = {theta}"
        )));
    }
    let spectral = spectral_of(sigmas, spectral)?;
    let shift = eps / (2.0 * theta.sqrt());
    let tight = sigmas
        .iter()
        .map(|s| (delta * s.sqrt() + shift).powi(2))
        .sum::<f64>()
        .sqrt();
    let loose = (sigmas.len() as f64).sqrt() * (delta * spectral.sqrt() + shift);
    Ok(BoundPair { tight, loose })
}

/// |U S^-1 - U_bar S_bar^-1|_F <= sqrt(k)(delta/theta + eps/(theta^2 - theta eps))
pub fn bound_us_inv(eps: f64, delta: f64, theta: f64, k: usize) -> Result<f64> {
    non_negative("eps", eps)?;
    non_negative("delta", delta)?;
    if !(theta > 0.0) {
        return Err(Error::BoundPrecondition("theta must be positive".into()));
    }
    if eps >= theta {
        return Err(Error::BoundPrecondition(format!(
            "eps = {eps} must be smaller than theta = {theta}"
        )));
    }
    Ok((k as f64).sqrt() * (delta / theta + eps / (theta * theta - theta * eps)))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub eps: f64,
    pub delta: f64,
    pub theta: f64,
    pub k: usize,
    pub sigmas: Vec<f64>,
    pub spectral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_name: String,
    pub analytic_bound: f64,
    pub observed_error: f64,
    pub holds: bool,
    pub inputs: BoundInputs,
}

impl BoundReport {
    pub const CSV_HEADER: [&'static str; 10] = [
        "bound_name",
        "analytic_bound",
        "observed_error",
        "holds",
        "eps",
        "delta",
        "theta",
        "k",
        "spectral",
        "sigmas",
    ];

    pub fn with_inputs(mut self, inputs: BoundInputs) -> Self {
        self.inputs = inputs;
        self
    }

    pub fn csv_row(&self) -> Vec<String> {
        let i = &self.inputs;
        let sig: Vec<String> = i.sigmas.iter().map(|s| s.to_string()).collect();
        vec![
            self.bound_name.clone(),
            self.analytic_bound.to_string(),
            self.observed_error.to_string(),
            self.holds.to_string(),
            i.eps.to_string(),
            i.delta.to_string(),
            i.theta.to_string(),
            i.k.to_string(),
            i.spectral.to_string(),
            sig.join(";"),
        ]
    }
}

pub fn verify_bound(exact: &DMatrix<f64>, approx: &DMatrix<f64>, bound: f64, name: &str) -> Result<BoundReport> {
    if exact.shape() != approx.shape() {
        return Err(Error::Shape {
            expected: exact.shape(),
            got: approx.shape(),
        });
    }
    let observed_error = (exact - approx).norm();
    Ok(BoundReport {
        bound_name: name.to_string(),
        analytic_bound: bound,
        observed_error,
        holds: observed_error <= bound + HOLDS_TOL,
        inputs: BoundInputs::default(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lemma {
    /// U Sigma
    Us,
    /// D^-1/2 U
    Du,
    /// U Sigma^1/2
    UsHalf,
    /// U Sigma^-1
    UsInv,
}

impl Lemma {
    pub const ALL: [Lemma; 4] = [Lemma::Us, Lemma::Du, Lemma::UsHalf, Lemma::UsInv];

    pub fn name(&self) -> &'static str {
        match self {
            Lemma::Us => "U_Sigma",
            Lemma::Du => "D_inv_sqrt_U",
            Lemma::UsHalf => "U_Sigma_half",
            Lemma::UsInv => "U_Sigma_inv",
        }
    }
}

/// Estimated singular triples with errors at exactly the given budgets:
/// `|sigma_bar - sigma| = eps` with a random sign (kept positive), and
/// `|u_bar - u| = delta` from the worst-case tomography injector.
pub struct NoisyFactors {
    pub sigma_bar: Vec<f64>,
    pub u_bar: DMatrix<f64>,
}

pub fn inject_budget_noise(s: &SvdModel, k: usize, eps: f64, delta: f64, seed: u64) -> Result<NoisyFactors> {
    if k == 0 || k > s.rank() {
        return Err(Error::param("k", format!("must lie in 1..={}", s.rank())));
    }
    let stream = SeedStream::new(seed);
    let mut rng = rng_from_seed(stream.child("sigma"));
    let sigma_bar = s.sigmas()[..k]
        .iter()
        .map(|&x| {
            if x - eps > 0.0 && rng.random::<bool>() {
                x - eps
            } else {
                x + eps
            }
        })
        .collect();
    let mut u_bar = DMatrix::zeros(s.u().nrows(), k);
    for j in 0..k {
        let col: DVector<f64> = s.u().column(j).into_owned();
        let mut rng = rng_from_seed(stream.child_index("u", j as u64));
        let noisy = noise::tomography_noise_with(&col, delta, TomographyNorm::L2, NoiseShape::Adversarial, &mut rng)?;
        u_bar.set_column(j, &noisy);
    }
    Ok(NoisyFactors { sigma_bar, u_bar })
}

/// One soundness trial for `lemma` on the top `k` triples of `s`.
///
/// The threshold used by the square-root and inverse lemmas is
/// `theta_scale * min_j min(sigma_j, sigma_bar_j)`, so both the true and the
/// estimated values sit above the floor. `d_inv_sqrt` is the diagonal of
/// D^-1/2 for the row side (only read by [`Lemma::Du`]).
pub fn lemma_trial(
    lemma: Lemma,
    s: &SvdModel,
    k: usize,
    eps: f64,
    delta: f64,
    theta_scale: f64,
    d_inv_sqrt: Option<&[f64]>,
    seed: u64,
) -> Result<BoundReport> {
    if !(theta_scale > 0.0 && theta_scale <= 1.0) {
        return Err(Error::param("theta_scale", "must lie in (0, 1]"));
    }
    let f = inject_budget_noise(s, k, eps, delta, seed)?;
    let sig = &s.sigmas()[..k];
    let u = s.top_u(k);
    let floor = sig
        .iter()
        .zip(&f.sigma_bar)
        .map(|(a, b)| a.min(*b))
        .fold(f64::INFINITY, f64::min);
    let theta = theta_scale * floor;
    let spectral = s.sigma_max();
    let (exact, approx, bound) = match lemma {
        Lemma::Us => (
            scale_columns(&u, sig),
            scale_columns(&f.u_bar, &f.sigma_bar),
            bound_us(sig, eps, delta, spectral)?.tight,
        ),
        Lemma::Du => {
            let d = d_inv_sqrt.ok_or_else(|| Error::param("d_inv_sqrt", "required for the D^-1/2 U lemma"))?;
            if d.len() != u.nrows() {
                return Err(Error::Shape {
                    expected: (u.nrows(), 1),
                    got: (d.len(), 1),
                });
            }
            let dm = DMatrix::from_diagonal(&DVector::from_column_slice(d));
            let frob = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            (&dm * &u, &dm * &f.u_bar, bound_du(frob, delta, k))
        }
        Lemma::UsHalf => {
            let a: Vec<f64> = sig.iter().map(|x| x.sqrt()).collect();
            let b: Vec<f64> = f.sigma_bar.iter().map(|x| x.sqrt()).collect();
            (
                scale_columns(&u, &a),
                scale_columns(&f.u_bar, &b),
                bound_us_half(sig, eps, delta, theta, spectral)?.tight,
            )
        }
        Lemma::UsInv => {
            let a: Vec<f64> = sig.iter().map(|x| 1.0 / x).collect();
            let b: Vec<f64> = f.sigma_bar.iter().map(|x| 1.0 / x).collect();
            (
                scale_columns(&u, &a),
                scale_columns(&f.u_bar, &b),
                bound_us_inv(eps, delta, theta, k)?,
            )
        }
    };
    Ok(verify_bound(&exact, &approx, bound, lemma.name())?.with_inputs(BoundInputs {
        eps,
        delta,
        theta,
        k,
        sigmas: sig.to_vec(),
        spectral,
    }))
}
