//! PCA, CA and LSA pipelines on top of the simulated routines.

pub mod ca;
pub mod lsa;
pub mod pca;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::TomographyNorm;
use crate::qsim::{self, CostRecord, SpectralSample, ThetaPlacement};
use crate::rng::{rng_from_seed, SeedStream};
use crate::svd_oracle::{RoundedSpectrum, SvdModel};

pub use ca::{ca_fit, ca_fit_with, CaModel};
pub use lsa::{cosine, cosine_similarities, inner_products, lsa_fit, lsa_fold_query, LsaModel, DEFAULT_LSA_K};
pub use pca::{
    pca_fit, pca_fit_model, pca_representability, pca_representability_beta, pca_transform_matrix,
    pca_transform_vector, MatrixProjection, PcaModel, RepresentabilityRow, VectorProjection,
};

/// What decides the number of retained components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Smallest set of factors explaining at least this fraction of variance.
    Variance(f64),
    Components(usize),
    Threshold(f64),
}

/// Vector precision, either directly or as a Frobenius budget xi converted
/// with delta = xi sqrt(p) / sqrt(2k).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaSpec {
    Delta(f64),
    Xi(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub target: Target,
    /// Sampling precision; 0 uses the exact factor score ratios.
    pub gamma: f64,
    /// Singular value resolution; 0 is the noise-free regime.
    pub eps: f64,
    pub delta: DeltaSpec,
    pub norm: TomographyNorm,
    pub placement: ThetaPlacement,
    pub seed: u64,
}

impl FitParams {
    pub fn new(target: Target, gamma: f64, eps: f64, delta: DeltaSpec, seed: u64) -> Self {
        Self {
            target,
            gamma,
            eps,
            delta,
            norm: TomographyNorm::L2,
            placement: ThetaPlacement::Midpoint,
            seed,
        }
    }

    /// Everything exact: no sampling, rounding or tomography noise.
    pub fn exact(target: Target) -> Self {
        Self::new(target, 0.0, 0.0, DeltaSpec::Delta(0.0), 0)
    }
}

/// The threshold chosen for a fit and how it was reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaChoice {
    pub theta: f64,
    /// k suggested by the variance selection (None for other targets).
    pub k_selected: Option<usize>,
    pub p_est: Option<f64>,
    pub sample: Option<SpectralSample>,
    pub cost: Vec<CostRecord>,
}

pub(crate) fn resolve_theta(
    s: &SvdModel,
    rs: &RoundedSpectrum,
    params: &FitParams,
    stream: &SeedStream,
) -> Result<ThetaChoice> {
    if s.rank() == 0 {
        return Err(Error::EmptyRetention { theta: 0.0 });
    }
    let sh = rs.sigma_hats();
    match params.target {
        Target::Variance(p) => {
            let (sample, cost) = if params.gamma > 0.0 {
                let n = qsim::wald_sample_size(params.gamma, 2.0)?;
                let mut rng = rng_from_seed(stream.child("sample"));
                let sample = qsim::sample_rounded(rs, params.gamma, n, &mut rng)?;
                let cost = vec![sample.cost(s.frobenius())];
                (sample, cost)
            } else if params.gamma == 0.0 {
                (exact_sample(rs), Vec::new())
            } else {
                return Err(Error::param("gamma", "must be non-negative"));
            };
            let sel = qsim::select_k_with(&sample, p, params.placement)?;
            let theta = if sel.theta > 0.0 {
                sel.theta
            } else {
                sample.draws[sel.buckets - 1].sigma_hat / 2.0
            };
            Ok(ThetaChoice {
                theta,
                k_selected: Some(sel.k),
                p_est: Some(sel.p_est),
                sample: Some(sample),
                cost,
            })
        }
        Target::Components(k) => {
            if k == 0 || k > s.rank() {
                return Err(Error::param("k", format!("must lie in 1..={}", s.rank())));
            }
            let theta = if k < sh.len() {
                0.5 * (sh[k - 1] + sh[k])
            } else if rs.resolution() > 0.0 && sh[k - 1] - rs.resolution() > 0.0 {
                sh[k - 1] - rs.resolution()
            } else {
                sh[k - 1] / 2.0
            };
            Ok(ThetaChoice {
                theta,
                k_selected: None,
                p_est: None,
                sample: None,
                cost: Vec::new(),
            })
        }
        Target::Threshold(theta) => {
            if !(theta > 0.0) {
                return Err(Error::param("theta", "must be positive"));
            }
            Ok(ThetaChoice {
                theta,
                k_selected: None,
                p_est: None,
                sample: None,
                cost: Vec::new(),
            })
        }
    }
}

/// Infinite-sample limit of the factor score ratio estimates.
fn exact_sample(rs: &RoundedSpectrum) -> SpectralSample {
    SpectralSample {
        draws: rs
            .buckets()
            .iter()
            .map(|b| qsim::BucketEstimate {
                sigma_hat: b.value,
                count: 0,
                ratio: b.mass,
                factor_score: b.value * b.value,
                multiplicity: b.members.len(),
            })
            .collect(),
        n: 0,
        gamma: 0.0,
        epsilon: rs.resolution(),
    }
}

pub(crate) fn resolve_delta(spec: DeltaSpec, rs: &RoundedSpectrum, theta: f64) -> Result<f64> {
    let delta = match spec {
        DeltaSpec::Delta(d) => d,
        DeltaSpec::Xi(xi) => {
            if !(xi >= 0.0) {
                return Err(Error::param("xi", "must be non-negative"));
            }
            let k = rs.count_at_least(theta);
            if k == 0 {
                return Err(Error::EmptyRetention { theta });
            }
            xi * rs.mass_at_least(theta).sqrt() / (2.0 * k as f64).sqrt()
        }
    };
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::param("delta", format!("{delta} is outside [0, 1)")));
    }
    Ok(delta)
}
