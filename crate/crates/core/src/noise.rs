//! Bounded noise injectors standing in for tomography, amplitude estimation
//! and the entrywise matrix perturbation experiment.
//!
//! All injectors are pure functions of `(input, magnitude, seed)`. A magnitude
//! of zero is the identity.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SimRng};

const UNIT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    TomographyL2,
    TomographyLinf,
    AmplitudeAdditive,
    AmplitudeRelative,
    MatrixFrobenius,
}

/// A noise source: kind, magnitude (delta, eta or xi depending on the kind)
/// and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub magnitude: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, magnitude: f64, seed: u64) -> Result<Self> {
        if !(magnitude >= 0.0) || !magnitude.is_finite() {
            return Err(Error::param("magnitude", "must be a finite non-negative number"));
        }
        Ok(Self {
            kind,
            magnitude,
            seed,
        })
    }

    pub fn is_identity(&self) -> bool {
        self.magnitude == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TomographyNorm {
    L2,
    Linf,
}

impl std::str::FromStr for TomographyNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(Self::L2),
            "linf" => Ok(Self::Linf),
            other => Err(Error::param("norm", format!("unknown tomography norm `{other}`"))),
        }
    }
}

/// How far into the error budget a tomography draw goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseShape {
    /// Error uniform in `[0.9 delta, delta]`.
    Random,
    /// Error exactly `delta` (the worst case allowed by the bound).
    Adversarial,
}

fn check_unit(v: &DVector<f64>) -> Result<()> {
    let n = v.norm();
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotNormalized(n));
    }
    Ok(())
}

/// Gaussian direction orthogonal to `v`, supported on `support` (all
/// coordinates when `None`). Returns `None` when no such direction exists.
fn orthogonal_direction(
    v: &DVector<f64>,
    support: Option<&[usize]>,
    rng: &mut SimRng,
) -> Option<DVector<f64>> {
    let dim = support.map_or(v.len(), <[usize]>::len);
    if dim < 2 {
        return None;
    }
    for _ in 0..64 {
        let mut w = DVector::zeros(v.len());
        match support {
            Some(idx) => {
                for &i in idx {
                    w[i] = StandardNormal.sample(rng);
                }
            }
            None => {
                for x in w.iter_mut() {
                    *x = StandardNormal.sample(rng);
                }
            }
        }
        let c = w.dot(v);
        w.axpy(-c, v, 1.0);
        let n = w.norm();
        if n > 1e-8 {
            return Some(w / n);
        }
    }
    None
}

fn rotate(v: &DVector<f64>, w: &DVector<f64>, phi: f64) -> DVector<f64> {
    let mut out = v * phi.cos();
    out.axpy(phi.sin(), w, 1.0);
    let n = out.norm();
    out / n
}

fn linf_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Unit vector within `delta` of the unit vector `v` in the requested norm,
/// with `<v, v_bar> > 0`.
pub fn tomography_noise(v: &DVector<f64>, delta: f64, norm: TomographyNorm, seed: u64) -> Result<DVector<f64>> {
    let mut rng = rng_from_seed(seed);
    tomography_noise_with(v, delta, norm, NoiseShape::Random, &mut rng)
}

/// Worst-case variant: the error equals `delta` whenever the geometry allows.
pub fn tomography_noise_adversarial(
    v: &DVector<f64>,
    delta: f64,
    norm: TomographyNorm,
    seed: u64,
) -> Result<DVector<f64>> {
    let mut rng = rng_from_seed(seed);
    tomography_noise_with(v, delta, norm, NoiseShape::Adversarial, &mut rng)
}

pub fn tomography_noise_with(
    v: &DVector<f64>,
    delta: f64,
    norm: TomographyNorm,
    shape: NoiseShape,
    rng: &mut SimRng,
) -> Result<DVector<f64>> {
    check_unit(v)?;
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::param("delta", "must lie in [0, 1)"));
    }
    if delta == 0.0 {
        return Ok(v.clone());
    }
    let target = match shape {
        NoiseShape::Random => rng.random_range(0.9 * delta..=delta),
        NoiseShape::Adversarial => delta,
    };
    match norm {
        TomographyNorm::L2 => {
            let Some(w) = orthogonal_direction(v, None, rng) else {
                return Ok(v.clone());
            };
            // |v - (cos phi v + sin phi w)| = 2 sin(phi / 2)
            let mut phi = 2.0 * (target / 2.0).asin();
            let mut out = rotate(v, &w, phi);
            while (v - &out).norm() > delta {
                phi *= 1.0 - 1e-9;
                out = rotate(v, &w, phi);
            }
            Ok(out)
        }
        TomographyNorm::Linf => {
            let support: Vec<usize> = (0..v.len()).filter(|&i| v[i] != 0.0).collect();
            let Some(w) = orthogonal_direction(v, Some(&support), rng) else {
                return Ok(v.clone());
            };
            // The infinity-norm error is not monotone in phi in general, so
            // bisection keeps `lo` feasible throughout. The cap keeps the
            // orientation positive.
            let cap = std::f64::consts::FRAC_PI_2 * (1.0 - 1e-6);
            let err = |phi: f64| linf_distance(v, &rotate(v, &w, phi));
            if err(cap) <= target {
                return Ok(rotate(v, &w, cap));
            }
            let (mut lo, mut hi) = (0.0, cap);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if err(mid) <= target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(rotate(v, &w, lo))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeMode {
    Exact,
    Additive,
    Relative,
}

impl std::str::FromStr for AmplitudeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "additive" => Ok(Self::Additive),
            "relative" => Ok(Self::Relative),
            other => Err(Error::param("mode", format!("unknown amplitude mode `{other}`"))),
        }
    }
}

/// Estimate of a probability `p` to additive or relative error `eta`.
pub fn amplitude_estimate(p: f64, eta: f64, mode: AmplitudeMode, seed: u64) -> Result<f64> {
    let mut rng = rng_from_seed(seed);
    amplitude_estimate_with(p, eta, mode, &mut rng)
}

pub fn amplitude_estimate_with(p: f64, eta: f64, mode: AmplitudeMode, rng: &mut SimRng) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param("p", format!("{p} is not a probability")));
    }
    if mode == AmplitudeMode::Exact {
        return Ok(p);
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::param("eta", "must be positive unless mode is exact"));
    }
    let u = rng.random_range(-eta..=eta);
    let x = match mode {
        AmplitudeMode::Additive => p + u,
        AmplitudeMode::Relative => p * (1.0 + u),
        AmplitudeMode::Exact => unreachable!(),
    };
    Ok(x.clamp(0.0, 1.0))
}

/// Relative-error estimate of a non-negative quantity that is not a
/// probability (a norm, a count). `eta = 0` returns `x`.
pub fn relative_estimate(x: f64, eta: f64, rng: &mut SimRng) -> Result<f64> {
    if !(eta >= 0.0) {
        return Err(Error::param("eta", "must be non-negative"));
    }
    if eta == 0.0 {
        return Ok(x);
    }
    Ok(x * (1.0 + rng.random_range(-eta..=eta)))
}

/// Standard normal truncated to `[-a, a]`.
fn truncated_normal(a: f64, rng: &mut SimRng) -> f64 {
    if a < 1.0 {
        // uniform proposal, acceptance >= exp(-1/2)
        loop {
            let x = rng.random_range(-a..=a);
            if rng.random::<f64>() <= (-0.5 * x * x).exp() {
                return x;
            }
        }
    }
    loop {
        let x: f64 = StandardNormal.sample(rng);
        if x.abs() <= a {
            return x;
        }
    }
}

/// Adds an independent standard normal draw truncated to
/// `[-xi/sqrt(nm), xi/sqrt(nm)]` to every entry, so `|M - M_bar|_F <= xi`.
pub fn perturb_matrix_frobenius(m: &DMatrix<f64>, xi: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(xi >= 0.0) || !xi.is_finite() {
        return Err(Error::param("xi", "must be a finite non-negative number"));
    }
    if xi == 0.0 || m.is_empty() {
        return Ok(m.clone());
    }
    let a = xi / ((m.nrows() * m.ncols()) as f64).sqrt();
    let mut rng = rng_from_seed(seed);
    let mut out = m.clone();
    for x in out.iter_mut() {
        *x += truncated_normal(a, &mut rng);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateDistance {
    /// |x - x_bar|
    pub raw: f64,
    /// distance between the normalized vectors
    pub normalized_state: f64,
    /// sqrt(2) * raw / |x|
    pub claim_bound: f64,
    /// Angle between x and x_bar below pi/2.
    pub applicable: bool,
    pub holds: bool,
}

pub fn state_distance(x: &DVector<f64>, xbar: &DVector<f64>) -> Result<StateDistance> {
    if x.len() != xbar.len() {
        return Err(Error::Shape {
            expected: (x.len(), 1),
            got: (xbar.len(), 1),
        });
    }
    let nx = x.norm();
    let nb = xbar.norm();
    if nx == 0.0 {
        return Err(Error::UndefinedState("x has zero norm".into()));
    }
    if nb == 0.0 {
        return Err(Error::UndefinedState("x_bar has zero norm".into()));
    }
    let raw = (x - xbar).norm();
    let normalized_state = (x / nx - xbar / nb).norm();
    let claim_bound = std::f64::consts::SQRT_2 * raw / nx;
    Ok(StateDistance {
        raw,
        normalized_state,
        claim_bound,
        applicable: x.dot(xbar) > 0.0,
        holds: normalized_state <= claim_bound + 1e-12,
    })
}
