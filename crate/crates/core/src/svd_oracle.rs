//! Exact dense SVD, the oracle every simulated routine consumes, plus the
//! classical stand-ins for singular value estimation (consistent rounding on a
//! fixed grid) and spectral-norm estimation.

use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SVD};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::matrix_store::{DataMatrix, Provenance};
use crate::rng::rng_from_seed;

/// Singular values below `DEFAULT_RANK_TOL * sigma_max` are dropped.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Relative gap under which neighbouring singular values are treated as one
/// degenerate level.
pub const DEGENERACY_TOL: f64 = 1e-12;

struct ThinSvd {
    u: DMatrix<f64>,
    s: DVector<f64>,
    v: DMatrix<f64>,
}

fn check_finite(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::Empty("SVD of an empty matrix".into()));
    }
    if let Some((idx, x)) = a.iter().enumerate().find(|(_, x)| !x.is_finite()) {
        let (r, c) = (idx % a.nrows(), idx / a.nrows());
        return Err(Error::Numeric(format!("non-finite entry {x} at ({r}, {c})")));
    }
    Ok(())
}

/// Thin SVD with singular values in descending order. Very tall or very wide
/// inputs go through a QR factorization first so the bidiagonalization runs
/// on a square factor.
fn thin_svd(a: &DMatrix<f64>) -> Result<ThinSvd> {
    check_finite(a)?;
    let (n, m) = a.shape();
    if n >= 2 * m && m > 0 {
        let qr = a.clone().qr();
        let (q, r) = qr.unpack();
        let svd = SVD::new(r, true, true);
        let ur = svd.u.expect("u requested");
        let vt = svd.v_t.expect("v requested");
        Ok(ThinSvd {
            u: q * ur,
            s: svd.singular_values,
            v: vt.transpose(),
        })
    } else if m >= 2 * n {
        let t = thin_svd(&a.transpose())?;
        Ok(ThinSvd {
            u: t.v,
            s: t.s,
            v: t.u,
        })
    } else {
        let svd = SVD::new(a.clone(), true, true);
        Ok(ThinSvd {
            u: svd.u.expect("u requested"),
            s: svd.singular_values,
            v: svd.v_t.expect("v requested").transpose(),
        })
    }
}

/// Largest singular value of a dense matrix (0 for the zero matrix).
pub fn largest_singular_value(a: &DMatrix<f64>) -> Result<f64> {
    check_finite(a)?;
    let (n, m) = a.shape();
    let s = if n >= 2 * m {
        a.clone().qr().unpack_r().singular_values()
    } else if m >= 2 * n {
        a.transpose().qr().unpack_r().singular_values()
    } else {
        a.singular_values()
    };
    Ok(s.iter().cloned().fold(0.0, f64::max))
}

/// Descending singular values with paired, column-orthonormal singular
/// vectors. Each right singular vector has its largest-magnitude coordinate
/// positive (lowest index wins ties); left vectors are flipped accordingly.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdModel {
    sigmas: Vec<f64>,
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    shape: (usize, usize),
    frobenius: f64,
    rank_tol: f64,
    provenance: Provenance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelMeta {
    rank: usize,
    n: usize,
    m: usize,
    frobenius: f64,
    rank_tol: f64,
    degeneracy_tol: f64,
    provenance: Provenance,
}

impl SvdModel {
    /// Builds a model from explicit factors. Used by synthetic spectra and the
    /// import path; the caller is responsible for orthonormality.
    pub fn from_parts(sigmas: Vec<f64>, u: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        let r = sigmas.len();
        if u.ncols() != r || v.ncols() != r {
            return Err(Error::Structure(format!(
                "factor widths {}/{} do not match rank {r}",
                u.ncols(),
                v.ncols()
            )));
        }
        if sigmas.windows(2).any(|w| w[0] < w[1]) || sigmas.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Structure(
                "singular values must be positive and non-increasing".into(),
            ));
        }
        let frobenius = sigmas.iter().map(|s| s * s).sum::<f64>().sqrt();
        Ok(Self {
            shape: (u.nrows(), v.nrows()),
            sigmas,
            u,
            v,
            frobenius,
            rank_tol: 0.0,
            provenance: Provenance::default(),
        })
    }

    /// A model carrying only a spectrum, with identity singular vectors.
    pub fn from_spectrum(sigmas: Vec<f64>) -> Result<Self> {
        let r = sigmas.len();
        Self::from_parts(sigmas, DMatrix::identity(r, r), DMatrix::identity(r, r))
    }

    pub fn rank(&self) -> usize {
        self.sigmas.len()
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigmas.first().copied().unwrap_or(0.0)
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    /// Frobenius norm of the decomposed matrix.
    pub fn frobenius(&self) -> f64 {
        self.frobenius
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Sum of squared retained singular values.
    pub fn total_variance(&self) -> f64 {
        self.sigmas.iter().map(|s| s * s).sum()
    }

    /// lambda_i = sigma_i^2
    pub fn factor_scores(&self) -> Vec<f64> {
        self.sigmas.iter().map(|s| s * s).collect()
    }

    /// lambda^(i) = sigma_i^2 / sum_j sigma_j^2
    pub fn factor_score_ratios(&self) -> Vec<f64> {
        let total = self.total_variance();
        self.sigmas.iter().map(|s| s * s / total).collect()
    }

    /// Smallest `k` whose cumulative factor score ratio reaches `p`.
    pub fn k_for_variance(&self, p: f64) -> Option<usize> {
        let mut acc = 0.0;
        for (i, r) in self.factor_score_ratios().iter().enumerate() {
            acc += r;
            if acc >= p - 1e-15 {
                return Some(i + 1);
            }
        }
        None
    }

    pub fn cumulative_ratio(&self, k: usize) -> f64 {
        self.factor_score_ratios().iter().take(k).sum()
    }

    /// Index ranges of singular values whose relative gap is below
    /// [`DEGENERACY_TOL`].
    pub fn degenerate_groups(&self) -> Vec<Range<usize>> {
        let tol = DEGENERACY_TOL * self.sigma_max();
        let mut groups = Vec::new();
        let mut start = 0;
        for i in 1..=self.sigmas.len() {
            if i == self.sigmas.len() || self.sigmas[i - 1] - self.sigmas[i] >= tol {
                groups.push(start..i);
                start = i;
            }
        }
        groups
    }

    pub fn top_u(&self, k: usize) -> DMatrix<f64> {
        self.u.columns(0, k).into_owned()
    }

    pub fn top_v(&self, k: usize) -> DMatrix<f64> {
        self.v.columns(0, k).into_owned()
    }

    /// U_k * diag(sigma_1..k)
    pub fn u_sigma(&self, k: usize) -> DMatrix<f64> {
        scale_columns(&self.top_u(k), &self.sigmas[..k])
    }

    pub fn v_sigma(&self, k: usize) -> DMatrix<f64> {
        scale_columns(&self.top_v(k), &self.sigmas[..k])
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let r = self.rank();
        scale_columns(&self.u, &self.sigmas) * self.v.columns(0, r).transpose()
    }

    /// Writes `sigmas.csv`, `U.csv`, `V.csv` and `meta.json` into `dir`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let s = DMatrix::from_column_slice(self.rank(), 1, &self.sigmas);
        io::write_matrix_csv(&dir.join("sigmas.csv"), &s)?;
        io::write_matrix_csv(&dir.join("U.csv"), &self.u)?;
        io::write_matrix_csv(&dir.join("V.csv"), &self.v)?;
        let meta = ModelMeta {
            rank: self.rank(),
            n: self.shape.0,
            m: self.shape.1,
            frobenius: self.frobenius,
            rank_tol: self.rank_tol,
            degeneracy_tol: DEGENERACY_TOL,
            provenance: self.provenance,
        };
        io::write_json(&dir.join("meta.json"), &meta)
    }

    pub fn import(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<DMatrix<f64>> {
            let p = dir.join(name);
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            if bytes.iter().all(u8::is_ascii_whitespace) {
                return Ok(DMatrix::zeros(0, 0));
            }
            Ok(crate::matrix_store::parse_csv(&bytes, false)?.into_values())
        };
        let p = dir.join("meta.json");
        let meta: ModelMeta =
            serde_json::from_slice(&std::fs::read(&p).map_err(|e| Error::io(&p, e))?)?;
        let sigmas: Vec<f64> = read("sigmas.csv")?.iter().copied().collect();
        let (u, v) = if meta.rank == 0 {
            (DMatrix::zeros(meta.n, 0), DMatrix::zeros(meta.m, 0))
        } else {
            (read("U.csv")?, read("V.csv")?)
        };
        if sigmas.len() != meta.rank || u.shape() != (meta.n, meta.rank) || v.shape() != (meta.m, meta.rank) {
            return Err(Error::Structure("model files disagree with meta.json".into()));
        }
        Ok(Self {
            sigmas,
            u,
            v,
            shape: (meta.n, meta.m),
            frobenius: meta.frobenius,
            rank_tol: meta.rank_tol,
            provenance: meta.provenance,
        })
    }
}

pub(crate) fn scale_columns(m: &DMatrix<f64>, scales: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, s) in scales.iter().enumerate() {
        out.column_mut(j).scale_mut(*s);
    }
    out
}

/// Full thin SVD of `m`. Singular values below `rank_tol * sigma_max` are
/// discarded.
pub fn compute_svd(m: &DataMatrix, rank_tol: f64) -> Result<SvdModel> {
    if !(rank_tol >= 0.0) {
        return Err(Error::param("rank_tol", "must be non-negative"));
    }
    let t = thin_svd(m.values())?;
    let smax = t.s.iter().cloned().fold(0.0, f64::max);
    let r = t.s.iter().take_while(|&&s| s > rank_tol * smax && s > 0.0).count();
    let mut u = t.u.columns(0, r).into_owned();
    let mut v = t.v.columns(0, r).into_owned();
    for j in 0..r {
        let col = v.column(j);
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            v.column_mut(j).neg_mut();
            u.column_mut(j).neg_mut();
        }
    }
    Ok(SvdModel {
        sigmas: t.s.iter().take(r).copied().collect(),
        u,
        v,
        shape: m.shape(),
        frobenius: m.frobenius(),
        rank_tol,
        provenance: m.provenance(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// Grid of spacing `2^-b` with `b = ceil(log2(1/eps))`; the caller scales
    /// the matrix beforehand if needed.
    Absolute,
    /// Grid of spacing `mu / 2^b` with `b = ceil(log2(mu/eps))`.
    RelativeToMu,
}

/// One rounding cell of the estimated spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    /// Rounded singular value, in the units of the original spectrum.
    pub value: f64,
    /// Indices into the oracle spectrum that round to `value`.
    pub members: Vec<usize>,
    /// Sum of the members' factor score ratios.
    pub mass: f64,
}

/// The output of consistent singular value estimation: a deterministic map
/// from every singular value to a grid point within `resolution`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundedSpectrum {
    buckets: Vec<Bucket>,
    bucket_of: Vec<usize>,
    resolution: f64,
    scale: f64,
    bits: u32,
}

impl RoundedSpectrum {
    fn from_values(s: &SvdModel, hats: &[f64], resolution: f64, scale: f64, bits: u32) -> Self {
        let ratios = s.factor_score_ratios();
        let mut buckets: Vec<Bucket> = Vec::new();
        let mut bucket_of = vec![0; hats.len()];
        // sigmas are non-increasing and rounding is monotone, so equal values
        // are contiguous.
        for (i, &h) in hats.iter().enumerate() {
            match buckets.last_mut() {
                Some(b) if b.value == h => {
                    b.members.push(i);
                    b.mass += ratios[i];
                }
                _ => buckets.push(Bucket {
                    value: h,
                    members: vec![i],
                    mass: ratios[i],
                }),
            }
            bucket_of[i] = buckets.len() - 1;
        }
        Self {
            buckets,
            bucket_of,
            resolution,
            scale,
            bits,
        }
    }

    /// Noise-free estimation: every degenerate level is its own bucket and
    /// carries its exact value.
    pub fn exact(s: &SvdModel) -> Self {
        let mut hats = vec![0.0; s.rank()];
        for g in s.degenerate_groups() {
            let v = s.sigmas()[g.start];
            for i in g {
                hats[i] = v;
            }
        }
        Self::from_values(s, &hats, 0.0, s.sigma_max().max(f64::MIN_POSITIVE), 0)
    }

    pub fn buckets(&self) -> &[Bucket] {
        &self.buckets
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn bucket_index(&self, i: usize) -> usize {
        self.bucket_of[i]
    }

    pub fn sigma_hat(&self, i: usize) -> f64 {
        self.buckets[self.bucket_of[i]].value
    }

    pub fn sigma_hats(&self) -> Vec<f64> {
        (0..self.bucket_of.len()).map(|i| self.sigma_hat(i)).collect()
    }

    /// sum of lambda^(i) over indices with sigma_hat_i >= theta
    pub fn mass_at_least(&self, theta: f64) -> f64 {
        self.buckets.iter().filter(|b| b.value >= theta).map(|b| b.mass).sum()
    }

    /// |{ i : sigma_hat_i >= theta }|
    pub fn count_at_least(&self, theta: f64) -> usize {
        self.buckets
            .iter()
            .filter(|b| b.value >= theta)
            .map(|b| b.members.len())
            .sum()
    }
}

/// Consistent singular value estimation: `sigma_hat = round(sigma * 2^b / mu) * mu / 2^b`.
///
/// Identical inputs always produce identical buckets.
pub fn sve_round(s: &SvdModel, eps: f64, mode: ScaleMode, mu: f64) -> Result<RoundedSpectrum> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::param("eps", "must be a positive finite number"));
    }
    let mu = match mode {
        ScaleMode::Absolute => 1.0,
        ScaleMode::RelativeToMu => {
            if !(mu > 0.0) || !mu.is_finite() {
                return Err(Error::param("mu", "must be positive"));
            }
            mu
        }
    };
    if eps >= mu {
        return Err(Error::Resolution { eps, mu });
    }
    let bits_f = (mu / eps).log2().ceil();
    if bits_f > 1000.0 {
        return Err(Error::param("eps", "resolution finer than 2^-1000 of the scale"));
    }
    let bits = bits_f.max(1.0) as u32;
    let grid = mu / 2f64.powi(bits as i32);
    let hats: Vec<f64> = s.sigmas().iter().map(|&x| (x / grid).round() * grid).collect();
    Ok(RoundedSpectrum::from_values(s, &hats, eps, mu, bits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMode {
    Exact,
    Noisy,
}

/// Spectral norm, exactly or with additive noise uniform in
/// `[-eps*||A||_F, eps*||A||_F]`.
pub fn estimate_spectral_norm(m: &DataMatrix, eps: f64, mode: EstimateMode, seed: u64) -> Result<f64> {
    let smax = largest_singular_value(m.values())?;
    match mode {
        EstimateMode::Exact => Ok(smax),
        EstimateMode::Noisy => {
            if !(eps > 0.0) {
                return Err(Error::param("eps", "must be positive in noisy mode"));
            }
            let half = eps * m.frobenius();
            let mut rng = rng_from_seed(seed);
            Ok(smax + rng.random_range(-half..=half))
        }
    }
}
