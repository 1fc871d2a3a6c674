//! Run-time parameters and the cost expressions they feed.
//!
//! Costs are evaluated with unit constants and base-2 logarithms. Absolute
//! values only support trend comparisons.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_store::DataMatrix;

/// Which term attains mu(A).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuTerm {
    Frobenius,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuResult {
    pub mu: f64,
    /// Grid point minimizing the mixed term.
    pub best_p: f64,
    /// sqrt(s_2p(A) s_2(1-p)(A^T)) at `best_p`.
    pub mixed: f64,
    pub frobenius: f64,
    pub winner: MuTerm,
}

/// 0, 0.05, ..., 1
pub fn default_mu_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.05).collect()
}

/// |x|^q with 0^0 = 0, so q = 0 counts nonzeros.
fn pow_abs(x: f64, q: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if q == 0.0 {
        1.0
    } else {
        x.abs().powf(q)
    }
}

fn s_rows(a: &nalgebra::DMatrix<f64>, q: f64) -> f64 {
    (0..a.nrows())
        .into_par_iter()
        .map(|i| a.row(i).iter().map(|&x| pow_abs(x, q)).sum::<f64>())
        .reduce(|| 0.0, f64::max)
}

fn s_cols(a: &nalgebra::DMatrix<f64>, q: f64) -> f64 {
    (0..a.ncols())
        .into_par_iter()
        .map(|j| a.column(j).iter().map(|&x| pow_abs(x, q)).sum::<f64>())
        .reduce(|| 0.0, f64::max)
}

fn mixed_term(a: &nalgebra::DMatrix<f64>, p: f64) -> f64 {
    (s_rows(a, 2.0 * p) * s_cols(a, 2.0 * (1.0 - p))).sqrt()
}

/// mu(A) = min(|A|_F, min_p sqrt(s_2p(A) s_2(1-p)(A^T))) with
/// s_q(A) = max_i sum_j |a_ij|^q, minimized over `grid` and then over a finer
/// grid around the best point.
pub fn compute_mu(m: &DataMatrix, grid: &[f64]) -> Result<MuResult> {
    if grid.is_empty() {
        return Err(Error::param("grid", "must not be empty"));
    }
    if grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::param("grid", "points must lie in [0, 1]"));
    }
    let a = m.values();
    let mut best = grid
        .iter()
        .map(|&p| (p, mixed_term(a, p)))
        .fold((f64::NAN, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    if grid.len() > 1 {
        let step = grid.windows(2).map(|w| (w[1] - w[0]).abs()).fold(f64::INFINITY, f64::min);
        let fine = step / 10.0;
        for i in -9..=9 {
            let p = best.0 + i as f64 * fine;
            if (0.0..=1.0).contains(&p) {
                let v = mixed_term(a, p);
                if v < best.1 {
                    best = (p, v);
                }
            }
        }
    }
    let frobenius = m.frobenius();
    let (mu, winner) = if frobenius <= best.1 {
        (frobenius, MuTerm::Frobenius)
    } else {
        (best.1, MuTerm::Mixed)
    };
    Ok(MuResult {
        mu,
        best_p: best.0,
        mixed: best.1,
        frobenius,
        winner,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapRule {
    HalfGap,
    FullGap,
}

impl std::str::FromStr for GapRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half_gap" | "half" => Ok(Self::HalfGap),
            "full_gap" | "full" => Ok(Self::FullGap),
            other => Err(Error::param("rule", format!("unknown gap rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEps {
    pub eps: f64,
    /// sigma_k equals sigma_(k+1): no resolution separates them.
    pub degenerate: bool,
}

/// Resolution separating sigma_k from sigma_(k+1) (1-based `k`).
pub fn thresholding_epsilon(sigmas: &[f64], k: usize, rule: GapRule) -> Result<ThresholdEps> {
    if k == 0 || k > sigmas.len() {
        return Err(Error::param("k", format!("must lie in 1..={}", sigmas.len())));
    }
    let gap = if k == sigmas.len() {
        sigmas[k - 1]
    } else {
        sigmas[k - 1] - sigmas[k]
    };
    if gap <= 0.0 {
        return Ok(ThresholdEps {
            eps: 0.0,
            degenerate: true,
        });
    }
    let eps = match rule {
        GapRule::HalfGap => gap / 2.0,
        GapRule::FullGap => gap,
    };
    Ok(ThresholdEps {
        eps,
        degenerate: false,
    })
}

/// delta = (xi / sqrt(k) - eps) / spectral
pub fn estimate_delta(xi: f64, k: usize, eps: f64, spectral: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    if !(spectral > 0.0) {
        return Err(Error::param("spectral", "must be positive"));
    }
    let per = xi / (k as f64).sqrt();
    if !(per > eps) {
        return Err(Error::InfeasibleBudget(format!(
            "xi/sqrt(k) = {per} does not exceed eps = {eps}"
        )));
    }
    Ok((per - eps) / spectral)
}

/// Every quantity appearing in the cost expressions. Missing fields are
/// reported by [`cost_report`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuntimeParams {
    pub mu: Option<f64>,
    pub best_p: Option<f64>,
    pub spectral: Option<f64>,
    pub frobenius: Option<f64>,
    pub theta: Option<f64>,
    pub thresholding_eps: Option<f64>,
    pub k: Option<usize>,
    pub rank: Option<usize>,
    pub p: Option<f64>,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub xi: Option<f64>,
    pub n: Option<usize>,
    pub m: Option<usize>,
}

macro_rules! need {
    ($rp:expr, $field:ident) => {
        $rp.$field.ok_or(Error::IncompleteParams(stringify!($field)))?
    };
}

/// One evaluated cost expression.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub routine: &'static str,
    pub expression: &'static str,
    pub value: f64,
}

pub const COST_HEADER: [&str; 3] = ["routine", "expression", "value_unit_constants"];

impl CostRow {
    pub fn csv_row(&self) -> Vec<String> {
        vec![self.routine.to_string(), self.expression.to_string(), self.value.to_string()]
    }
}

pub fn cost_report(rp: &RuntimeParams) -> Result<Vec<CostRow>> {
    let mu = need!(rp, mu);
    let spectral = need!(rp, spectral);
    let theta = need!(rp, theta);
    let eps = need!(rp, thresholding_eps);
    let k = need!(rp, k) as f64;
    let r = need!(rp, rank) as f64;
    let p = need!(rp, p);
    let delta = need!(rp, delta);
    let gamma = need!(rp, gamma);
    let eta = need!(rp, eta);
    let xi = need!(rp, xi);
    let n = need!(rp, n) as f64;
    let m = need!(rp, m) as f64;

    let extract = (spectral / theta) * (1.0 / p.sqrt()) * (mu / eps) / (delta * delta);
    let row = |routine, expression, value| CostRow {
        routine,
        expression,
        value,
    };
    Ok(vec![
        row("factor_score_ratio_estimation", "(1/gamma^2)(mu/eps)", mu / (gamma * gamma * eps)),
        row("sum_check", "mu/(eps eta sqrt(p))", mu / (eps * eta * p.sqrt())),
        row("binary_search", "mu log2(mu/eps)/(eps eta)", mu * (mu / eps).log2() / (eps * eta)),
        row("count_exact", "(mu/eps) sqrt((k+1)(r-k+1))", mu / eps * ((k + 1.0) * (r - k + 1.0)).sqrt()),
        row("count_relative", "mu/(eps eta) sqrt(r/k)", mu / (eps * eta) * (r / k).sqrt()),
        row("extract_left", "(|A|/theta)(1/sqrt(p))(mu/eps)(k n/delta^2)", extract * k * n),
        row("extract_right", "(|A|/theta)(1/sqrt(p))(mu/eps)(k m/delta^2)", extract * k * m),
        row("extract_linf", "(|A|/theta)(1/sqrt(p))(mu/eps)(k/delta^2)", extract * k),
        row(
            "pca_model_extraction",
            "(1/gamma^2 + k m/(theta delta^2))(mu/eps)",
            (1.0 / (gamma * gamma) + k * m / (theta * delta * delta)) * mu / eps,
        ),
        row("pca_fit", "mu k^2 m/(theta eps xi^2)", mu * k * k * m / (theta * eps * xi * xi)),
        row("classical_baseline", "n m k log2(m/eps)/sqrt(eps)", n * m * k * (m / eps).log2() / eps.sqrt()),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderRow {
    pub n: usize,
    pub routine: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderReport {
    pub rows: Vec<LadderRow>,
    /// Smallest ladder size at which the classical baseline exceeds the
    /// quantum fitting cost.
    pub crossover: Option<usize>,
}

/// Evaluates [`cost_report`] with the sample count replaced by each ladder
/// entry, other parameters held fixed.
pub fn cost_ladder(rp: &RuntimeParams, ladder: &[usize]) -> Result<LadderReport> {
    let mut rows = Vec::new();
    let mut crossover = None;
    for &n in ladder {
        let mut p = rp.clone();
        p.n = Some(n);
        let report = cost_report(&p)?;
        let get = |name| report.iter().find(|r| r.routine == name).map(|r| r.value).unwrap();
        if crossover.is_none() && get("classical_baseline") > get("pca_fit") {
            crossover = Some(n);
        }
        rows.extend(report.into_iter().map(|r| LadderRow {
            n,
            routine: r.routine,
            value: r.value,
        }));
    }
    Ok(LadderReport { rows, crossover })
}
