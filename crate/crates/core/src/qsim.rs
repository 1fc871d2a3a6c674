//! Simulators for the quantum spectral routines: factor score ratio sampling,
//! the sum check, the threshold binary search, reduced-rank counting and top-k
//! singular vector extraction.
//!
//! Every routine consumes the exact oracle ([`SvdModel`]) and a
//! [`RoundedSpectrum`]. Passing `epsilon = 0` to the convenience wrappers
//! selects the noise-free regime where each degenerate level keeps its exact
//! value; otherwise the spectrum is rounded relative to `mu = |A|_F`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{self, AmplitudeMode, NoiseKind, NoiseShape, NoiseSpec, TomographyNorm};
use crate::rng::{rng_from_seed, SeedStream, SimRng};
use crate::svd_oracle::{sve_round, RoundedSpectrum, ScaleMode, SvdModel};

/// Tomography shot constant.
pub const DEFAULT_SHOT_CONSTANT: f64 = 36.0;

/// One evaluated cost expression, with unit constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub routine: String,
    pub expression: String,
    pub value: f64,
}

impl CostRecord {
    pub fn new(routine: &str, expression: impl Into<String>, value: f64) -> Self {
        Self {
            routine: routine.to_string(),
            expression: expression.into(),
            value,
        }
    }

    /// `routine: expression = value`
    pub fn line(&self) -> String {
        format!("{}: {} = {}", self.routine, self.expression, self.value)
    }
}

/// Rounds `s` at resolution `eps` relative to `mu = |A|_F`; `eps = 0` gives
/// the exact spectrum.
pub fn round_spectrum(s: &SvdModel, eps: f64) -> Result<RoundedSpectrum> {
    if eps == 0.0 {
        return Ok(RoundedSpectrum::exact(s));
    }
    if s.rank() == 0 {
        return Err(Error::Empty("spectrum has rank zero".into()));
    }
    sve_round(s, eps, ScaleMode::RelativeToMu, s.frobenius())
}

/// N = ceil(z^2 / (4 gamma^2))
pub fn wald_sample_size(gamma: f64, z: f64) -> Result<u64> {
    if !(gamma > 0.0) || !(z > 0.0) {
        return Err(Error::param("gamma", "gamma and z must be positive"));
    }
    Ok(((z * z) / (4.0 * gamma * gamma)).ceil().max(1.0) as u64)
}

/// N = ceil(36 ln(r) / gamma^2)
pub fn log_rank_sample_size(gamma: f64, r: usize) -> Result<u64> {
    if !(gamma > 0.0) || r == 0 {
        return Err(Error::param("gamma", "gamma must be positive and r at least 1"));
    }
    Ok((36.0 * (r as f64).ln() / (gamma * gamma)).ceil().max(1.0) as u64)
}

/// Measured statistics of one bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketEstimate {
    pub sigma_hat: f64,
    /// Number of draws landing in this bucket.
    pub count: u64,
    /// count / N
    pub ratio: f64,
    /// sigma_hat^2
    pub factor_score: f64,
    /// Number of oracle singular values rounding to this bucket.
    pub multiplicity: usize,
}

/// Result of factor score ratio sampling. Only buckets that were observed at
/// least once appear, in descending order of `sigma_hat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSample {
    pub draws: Vec<BucketEstimate>,
    pub n: u64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl SpectralSample {
    /// Buckets whose estimated ratio exceeds gamma.
    pub fn reported(&self) -> impl Iterator<Item = &BucketEstimate> {
        self.draws.iter().filter(move |b| b.ratio > self.gamma)
    }

    pub fn cost(&self, mu: f64) -> CostRecord {
        CostRecord::new(
            "factor_score_ratio_estimation",
            format!("(1/gamma^2)(mu/eps) with gamma={}, mu={}, eps={}", self.gamma, mu, self.epsilon),
            mu / (self.gamma * self.gamma * self.epsilon),
        )
    }
}

/// Draws `n` samples from the bucket masses of `rs` (multinomial via
/// sequential binomials).
pub fn sample_rounded(rs: &RoundedSpectrum, gamma: f64, n: u64, rng: &mut SimRng) -> Result<SpectralSample> {
    if n == 0 {
        return Err(Error::param("n", "sample size must be at least 1"));
    }
    let mut remaining = n;
    let mut remaining_mass: f64 = rs.buckets().iter().map(|b| b.mass).sum();
    let mut draws = Vec::new();
    let last = rs.buckets().len().saturating_sub(1);
    for (j, b) in rs.buckets().iter().enumerate() {
        let c = if j == last {
            remaining
        } else if remaining == 0 || remaining_mass <= 0.0 {
            0
        } else {
            let p = (b.mass / remaining_mass).clamp(0.0, 1.0);
            Binomial::new(remaining, p)
                .map_err(|e| Error::Numeric(e.to_string()))?
                .sample(rng)
        };
        remaining -= c;
        remaining_mass -= b.mass;
        if c > 0 {
            draws.push(BucketEstimate {
                sigma_hat: b.value,
                count: c,
                ratio: c as f64 / n as f64,
                factor_score: b.value * b.value,
                multiplicity: b.members.len(),
            });
        }
    }
    Ok(SpectralSample {
        draws,
        n,
        gamma,
        epsilon: rs.resolution(),
    })
}

/// Factor score ratio estimation with `n` measurements.
pub fn sample_factor_scores(s: &SvdModel, gamma: f64, epsilon: f64, n: u64, seed: u64) -> Result<SpectralSample> {
    let rs = round_spectrum(s, epsilon)?;
    let mut rng = rng_from_seed(seed);
    sample_rounded(&rs, gamma, n, &mut rng)
}

/// Where to put theta relative to the last selected bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaPlacement {
    /// Midpoint of the gap to the next observed bucket.
    Midpoint,
    /// Last selected value minus epsilon.
    LastMinusEpsilon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub k: usize,
    pub buckets: usize,
    pub p_est: f64,
    pub theta: f64,
}

pub fn select_k_for_variance(sample: &SpectralSample, p_target: f64) -> Result<Selection> {
    select_k_with(sample, p_target, ThetaPlacement::Midpoint)
}

pub fn select_k_with(sample: &SpectralSample, p_target: f64, placement: ThetaPlacement) -> Result<Selection> {
    if !(p_target > 0.0 && p_target <= 1.0) {
        return Err(Error::param("p_target", "must lie in (0, 1]"));
    }
    let mut acc = 0.0;
    let mut k = 0;
    for (j, b) in sample.draws.iter().enumerate() {
        acc += b.ratio;
        k += b.multiplicity;
        // sums of count/N can fall short of 1 by rounding
        if acc >= p_target - 1e-12 {
            let theta = match (placement, sample.draws.get(j + 1)) {
                (ThetaPlacement::Midpoint, Some(next)) => 0.5 * (b.sigma_hat + next.sigma_hat),
                _ => b.sigma_hat - sample.epsilon,
            };
            return Ok(Selection {
                k,
                buckets: j + 1,
                p_est: acc,
                theta,
            });
        }
    }
    Err(Error::UnreachableTarget {
        target: p_target,
        reached: acc,
    })
}

/// Outcome of a sum check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumCheck {
    pub p_est: f64,
    pub p_true: f64,
    /// Relative error is meaningless when the true sum is zero.
    pub undefined_relative: bool,
    pub cost: CostRecord,
}

/// Estimate of `sum of lambda^(i) over sigma_hat_i >= theta`.
pub fn check_rounded(
    rs: &RoundedSpectrum,
    mu: f64,
    theta: f64,
    eta: f64,
    mode: AmplitudeMode,
    rng: &mut SimRng,
) -> Result<SumCheck> {
    if !(theta >= 0.0) {
        return Err(Error::param("theta", "must be non-negative"));
    }
    let p_true = rs.mass_at_least(theta).clamp(0.0, 1.0);
    let undefined_relative = mode == AmplitudeMode::Relative && p_true == 0.0;
    let p_est = if undefined_relative {
        0.0
    } else {
        noise::amplitude_estimate_with(p_true, eta, mode, rng)?
    };
    let cost = CostRecord::new(
        "sum_check",
        format!("mu/(eps eta sqrt(p)) with mu={mu}, eps={}, eta={eta}, p={p_true}", rs.resolution()),
        mu / (rs.resolution() * eta * p_true.sqrt()),
    );
    Ok(SumCheck {
        p_est,
        p_true,
        undefined_relative,
        cost,
    })
}

pub fn check_fsr_sum(
    s: &SvdModel,
    theta: f64,
    epsilon: f64,
    eta: f64,
    mode: AmplitudeMode,
    seed: u64,
) -> Result<SumCheck> {
    let rs = round_spectrum(s, epsilon)?;
    let mut rng = rng_from_seed(seed);
    check_rounded(&rs, s.frobenius(), theta, eta, mode, &mut rng)
}

/// How the binary search evaluates its probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    Exact,
    /// Additive amplitude estimation at eta/2.
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSearch {
    pub theta: Option<f64>,
    pub iterations: u32,
    pub max_iterations: u32,
    /// (tau, estimated sum) per probe.
    pub probes: Vec<(f64, f64)>,
    pub cost: CostRecord,
}

/// Binary search for theta such that the retained mass is within `eta` of
/// `p_target`. `tau` lives in `[0, 1]` and `theta = tau * mu`.
pub fn binary_search_rounded(
    rs: &RoundedSpectrum,
    mu: f64,
    p_target: f64,
    eta: f64,
    probe: ProbeMode,
    rng: &mut SimRng,
) -> Result<ThresholdSearch> {
    if !(0.0..=1.0).contains(&p_target) {
        return Err(Error::param("p_target", "must lie in [0, 1]"));
    }
    if !(eta > 0.0) {
        return Err(Error::param("eta", "must be positive"));
    }
    let eps = rs.resolution();
    if !(eps > 0.0) {
        return Err(Error::param("epsilon", "binary search needs a positive resolution"));
    }
    if eps >= mu {
        return Err(Error::Resolution { eps, mu });
    }
    let max_iterations = (mu / eps).log2().ceil() as u32;
    let cost = CostRecord::new(
        "binary_search",
        format!("mu log2(mu/eps)/(eps eta) with mu={mu}, eps={eps}, eta={eta}"),
        mu * (mu / eps).log2() / (eps * eta),
    );
    let done = |theta, iterations, probes| ThresholdSearch {
        theta,
        iterations,
        max_iterations,
        probes,
        cost: cost.clone(),
    };
    if (1.0 - p_target).abs() <= eta {
        return Ok(done(Some(0.0), 0, Vec::new()));
    }
    if p_target.abs() <= eta {
        return Ok(done(Some(mu), 0, Vec::new()));
    }
    let (mut l, mut u) = (0.0f64, 1.0f64);
    let mut probes = Vec::new();
    for it in 1..=max_iterations {
        let tau = 0.5 * (l + u);
        let p_tau = rs.mass_at_least(tau * mu).clamp(0.0, 1.0);
        let p_bar = match probe {
            ProbeMode::Exact => p_tau,
            ProbeMode::Noisy => noise::amplitude_estimate_with(p_tau, eta / 2.0, AmplitudeMode::Additive, rng)?,
        };
        probes.push((tau, p_bar));
        if (p_bar - p_target).abs() <= eta / 2.0 {
            return Ok(done(Some(tau * mu), it, probes));
        }
        if p_bar < p_target {
            u = tau;
        } else {
            l = tau;
        }
    }
    Ok(done(None, max_iterations, probes))
}

pub fn binary_search_threshold(
    s: &SvdModel,
    p_target: f64,
    epsilon: f64,
    eta: f64,
    probe: ProbeMode,
    seed: u64,
) -> Result<ThresholdSearch> {
    let mu = s.frobenius();
    if !(epsilon > 0.0) {
        return Err(Error::param("epsilon", "must be positive"));
    }
    let rs = sve_round(s, epsilon, ScaleMode::RelativeToMu, mu)?;
    let mut rng = rng_from_seed(seed);
    binary_search_rounded(&rs, mu, p_target, eta, probe, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    Exact,
    Relative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountResult {
    /// Reported count (rounded estimate in relative mode).
    pub k: usize,
    pub k_estimate: f64,
    pub k_exact: usize,
    pub undefined_relative: bool,
    pub cost: CostRecord,
}

pub fn count_rounded(
    rs: &RoundedSpectrum,
    mu: f64,
    theta: f64,
    mode: CountMode,
    eta: f64,
    rng: &mut SimRng,
) -> Result<CountResult> {
    if !(theta >= 0.0) {
        return Err(Error::param("theta", "must be non-negative"));
    }
    let r = rs.buckets().iter().map(|b| b.members.len()).sum::<usize>() as f64;
    let k_exact = rs.count_at_least(theta);
    let kf = k_exact as f64;
    let eps = rs.resolution();
    match mode {
        CountMode::Exact => Ok(CountResult {
            k: k_exact,
            k_estimate: kf,
            k_exact,
            undefined_relative: false,
            cost: CostRecord::new(
                "count_exact",
                format!("(mu/eps) sqrt((k+1)(r-k+1)) with mu={mu}, eps={eps}, k={k_exact}, r={r}"),
                mu / eps * ((kf + 1.0) * (r - kf + 1.0)).sqrt(),
            ),
        }),
        CountMode::Relative => {
            if !(eta > 0.0) {
                return Err(Error::param("eta", "must be positive in relative mode"));
            }
            let cost = CostRecord::new(
                "count_relative",
                format!("mu/(eps eta) sqrt(r/k) with mu={mu}, eps={eps}, eta={eta}, k={k_exact}, r={r}"),
                mu / (eps * eta) * (r / kf).sqrt(),
            );
            if k_exact == 0 {
                return Ok(CountResult {
                    k: 0,
                    k_estimate: 0.0,
                    k_exact,
                    undefined_relative: true,
                    cost,
                });
            }
            let est = r * noise::amplitude_estimate_with(kf / r, eta, AmplitudeMode::Relative, rng)?;
            Ok(CountResult {
                k: est.round() as usize,
                k_estimate: est,
                k_exact,
                undefined_relative: false,
                cost,
            })
        }
    }
}

pub fn count_retained(
    s: &SvdModel,
    theta: f64,
    epsilon: f64,
    mode: CountMode,
    eta: f64,
    seed: u64,
) -> Result<CountResult> {
    let rs = round_spectrum(s, epsilon)?;
    let mut rng = rng_from_seed(seed);
    count_rounded(&rs, s.frobenius(), theta, mode, eta, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Both,
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Self::Left),
            "right" => Ok(Self::Right),
            "both" => Ok(Self::Both),
            other => Err(Error::param("side", format!("unknown side `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub side: Side,
    pub norm: TomographyNorm,
    pub shot_constant: f64,
    pub shape: NoiseShape,
}

impl ExtractOptions {
    pub fn new(side: Side, norm: TomographyNorm) -> Self {
        Self {
            side,
            norm,
            shot_constant: DEFAULT_SHOT_CONSTANT,
            shape: NoiseShape::Random,
        }
    }
}

/// Tomography copies needed per vector of length `z` at precision `delta`.
/// `None` when `delta = 0` (exact read-out, unbounded copies).
pub fn tomography_shots(z: usize, delta: f64, norm: TomographyNorm, c: f64) -> Option<u64> {
    if delta == 0.0 {
        return None;
    }
    let zf = z as f64;
    let t = match norm {
        TomographyNorm::L2 => c * zf * zf.ln() / (delta * delta),
        TomographyNorm::Linf => c * zf.ln() / (delta * delta),
    };
    Some(t.ceil().max(1.0) as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub k: usize,
    /// Oracle indices of the retained singular triples.
    pub indices: Vec<usize>,
    pub sigma_hats: Vec<f64>,
    /// sigma_hat^2
    pub factor_scores: Vec<f64>,
    /// sigma_hat^2 / |A|_F^2
    pub ratios: Vec<f64>,
    #[serde(skip)]
    pub u_hat: Option<DMatrix<f64>>,
    #[serde(skip)]
    pub v_hat: Option<DMatrix<f64>>,
    /// Measurement distribution over the retained indices.
    pub q: Vec<f64>,
    pub shots_per_vector: Option<u64>,
    pub measurements_used: Option<u64>,
    pub tomography: NoiseSpec,
    pub theta: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Sum of the ratios.
    pub p_retained: f64,
    pub cost: Vec<CostRecord>,
}

/// q_i proportional to sigma_i^2 / sigma_hat_i^2 over the indices with
/// sigma_hat_i >= theta.
pub fn measurement_distribution(s: &SvdModel, rs: &RoundedSpectrum, theta: f64) -> (Vec<usize>, Vec<f64>) {
    let idx: Vec<usize> = (0..s.rank()).filter(|&i| rs.sigma_hat(i) >= theta).collect();
    let w: Vec<f64> = idx
        .iter()
        .map(|&i| {
            let r = s.sigmas()[i] / rs.sigma_hat(i);
            r * r
        })
        .collect();
    let total: f64 = w.iter().sum();
    (idx, w.into_iter().map(|x| x / total).collect())
}

/// Number of i.i.d. draws from `q` until every category has appeared at
/// least `t` times. Small problems are simulated draw by draw; large ones use
/// the exact Poisson-process embedding (waiting times are Gamma(t, 1/q_i),
/// and the overshoot of every other category is Poisson).
pub fn collect_until(q: &[f64], t: u64, rng: &mut SimRng) -> Result<u64> {
    if q.is_empty() || t == 0 {
        return Ok(0);
    }
    if t.saturating_mul(q.len() as u64) <= 4096 {
        let cum: Vec<f64> = q
            .iter()
            .scan(0.0, |acc, x| {
                *acc += x;
                Some(*acc)
            })
            .collect();
        let total = *cum.last().unwrap();
        let mut counts = vec![0u64; q.len()];
        let mut missing = q.len();
        let mut draws = 0u64;
        while missing > 0 {
            let x = rng.random::<f64>() * total;
            let i = cum.partition_point(|&c| c <= x).min(q.len() - 1);
            counts[i] += 1;
            draws += 1;
            if counts[i] == t {
                missing -= 1;
            }
        }
        return Ok(draws);
    }
    let waits: Vec<f64> = q
        .iter()
        .map(|&qi| {
            Gamma::new(t as f64, 1.0 / qi)
                .map(|g| g.sample(rng))
                .map_err(|e| Error::Numeric(e.to_string()))
        })
        .collect::<Result<_>>()?;
    let (last, stop) = waits
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, w)| if w > acc.1 { (i, w) } else { acc });
    let mut total = t;
    for (j, (&qj, &gj)) in q.iter().zip(&waits).enumerate() {
        if j == last {
            continue;
        }
        let lam = qj * (stop - gj);
        let extra = if lam > 0.0 {
            Poisson::new(lam)
                .map(|p| p.sample(rng))
                .map_err(|e| Error::Numeric(e.to_string()))?
        } else {
            0.0
        };
        total = total.saturating_add(t).saturating_add(extra as u64);
    }
    Ok(total)
}

/// Top-k singular vector extraction for the indices with sigma_hat >= theta.
pub fn extract_rounded(
    s: &SvdModel,
    rs: &RoundedSpectrum,
    theta: f64,
    delta: f64,
    opts: &ExtractOptions,
    seed: u64,
) -> Result<ExtractionResult> {
    if !(theta > 0.0) {
        return Err(Error::param("theta", "must be positive"));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::param("delta", "must lie in [0, 1)"));
    }
    let (indices, q) = measurement_distribution(s, rs, theta);
    if indices.is_empty() {
        return Err(Error::EmptyRetention { theta });
    }
    let k = indices.len();
    let stream = SeedStream::new(seed);
    let (n, m) = s.shape();
    let c = opts.shot_constant;
    let shots = match opts.side {
        Side::Left => tomography_shots(n, delta, opts.norm, c),
        Side::Right => tomography_shots(m, delta, opts.norm, c),
        Side::Both => tomography_shots(n, delta, opts.norm, c)
            .zip(tomography_shots(m, delta, opts.norm, c))
            .map(|(a, b)| a + b),
    };
    let measurements_used = match shots {
        Some(t) => Some(collect_until(&q, t, &mut rng_from_seed(stream.child("measure")))?),
        None => None,
    };

    let tom_kind = match opts.norm {
        TomographyNorm::L2 => NoiseKind::TomographyL2,
        TomographyNorm::Linf => NoiseKind::TomographyLinf,
    };
    let tomography = NoiseSpec::new(tom_kind, delta, seed)?;
    let estimate = |basis: &DMatrix<f64>, label: &str| -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(basis.nrows(), k);
        for (j, &i) in indices.iter().enumerate() {
            let col: DVector<f64> = basis.column(i).into_owned();
            let col = &col / col.norm();
            let mut rng = rng_from_seed(stream.child_index(label, i as u64));
            let noisy = noise::tomography_noise_with(&col, delta, opts.norm, opts.shape, &mut rng)?;
            out.set_column(j, &noisy);
        }
        Ok(out)
    };
    let u_hat = match opts.side {
        Side::Left | Side::Both => Some(estimate(s.u(), "u")?),
        Side::Right => None,
    };
    let v_hat = match opts.side {
        Side::Right | Side::Both => Some(estimate(s.v(), "v")?),
        Side::Left => None,
    };

    let sigma_hats: Vec<f64> = indices.iter().map(|&i| rs.sigma_hat(i)).collect();
    let factor_scores: Vec<f64> = sigma_hats.iter().map(|x| x * x).collect();
    let total = s.total_variance();
    let ratios: Vec<f64> = factor_scores.iter().map(|x| x / total).collect();
    let p_retained = ratios.iter().sum();

    let eps = rs.resolution();
    let mu = s.frobenius();
    let norm_a = s.sigma_max();
    let p_true = rs.mass_at_least(theta);
    let base = (norm_a / theta) * (1.0 / p_true.sqrt()) * (mu / eps);
    let mut cost = Vec::new();
    let mut side_cost = |label: &str, z: usize| {
        let (expr, v) = match opts.norm {
            TomographyNorm::L2 => ("(|A|/theta)(1/sqrt(p))(mu/eps)(k z/delta^2)", k as f64 * z as f64),
            TomographyNorm::Linf => ("(|A|/theta)(1/sqrt(p))(mu/eps)(k/delta^2)", k as f64),
        };
        cost.push(CostRecord::new(
            label,
            format!("{expr} with |A|={norm_a}, theta={theta}, p={p_true}, mu={mu}, eps={eps}, k={k}, z={z}, delta={delta}"),
            base * v / (delta * delta),
        ));
    };
    if u_hat.is_some() {
        side_cost("extract_left", n);
    }
    if v_hat.is_some() {
        side_cost("extract_right", m);
    }

    Ok(ExtractionResult {
        k,
        indices,
        sigma_hats,
        factor_scores,
        ratios,
        u_hat,
        v_hat,
        q,
        shots_per_vector: shots,
        measurements_used,
        tomography,
        theta,
        epsilon: eps,
        delta,
        p_retained,
        cost,
    })
}

pub fn extract_topk(
    s: &SvdModel,
    theta: f64,
    epsilon: f64,
    delta: f64,
    side: Side,
    norm: TomographyNorm,
    seed: u64,
) -> Result<ExtractionResult> {
    let rs = round_spectrum(s, epsilon)?;
    extract_rounded(s, &rs, theta, delta, &ExtractOptions::new(side, norm), seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouponStats {
    pub k: usize,
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
    /// k ln(k) / ln(2.4), or 1 when k = 1.
    pub benchmark: f64,
}

pub fn coupon_benchmark(k: usize) -> f64 {
    if k <= 1 {
        1.0
    } else {
        let kf = k as f64;
        kf * kf.ln() / 2.4f64.ln()
    }
}

/// Repeats the measure-until-all-seen process with one copy per vector.
/// Trial `i` uses the child seed `(seed, "coupon", i)`.
pub fn coupon_rounded(s: &SvdModel, rs: &RoundedSpectrum, theta: f64, trials: usize, seed: u64) -> Result<CouponStats> {
    if trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    let (idx, q) = measurement_distribution(s, rs, theta);
    if idx.is_empty() {
        return Err(Error::EmptyRetention { theta });
    }
    let stream = SeedStream::new(seed);
    let counts: Vec<u64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(stream.child_index("coupon", t as u64));
            collect_until(&q, 1, &mut rng)
        })
        .collect::<Result<_>>()?;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / trials as f64;
    let std = if trials > 1 {
        (counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(CouponStats {
        k: idx.len(),
        trials,
        mean,
        std,
        benchmark: coupon_benchmark(idx.len()),
    })
}

pub fn coupon_collector_trials(s: &SvdModel, theta: f64, epsilon: f64, trials: usize, seed: u64) -> Result<CouponStats> {
    let rs = round_spectrum(s, epsilon)?;
    coupon_rounded(s, &rs, theta, trials, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_store::DataMatrix;
    use crate::svd_oracle::{compute_svd, DEFAULT_RANK_TOL};
    use proptest::prelude::*;

    fn diag43() -> SvdModel {
        let m = DataMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 3.0]).unwrap();
        compute_svd(&m, DEFAULT_RANK_TOL).unwrap()
    }

    #[test]
    fn sample_sizes() {
        assert_eq!(wald_sample_size(0.0316, 2.0).unwrap(), 1002);
        assert_eq!(wald_sample_size(0.5, 1.0).unwrap(), 1);
        let n = log_rank_sample_size(0.0316, 784).unwrap();
        assert_eq!(n, (36.0 * 784f64.ln() / (0.0316 * 0.0316)).ceil() as u64);
        assert!((n as f64 - 240158.0).abs() / 240158.0 < 0.01);
        assert!(wald_sample_size(0.0, 2.0).is_err());
    }

    #[test]
    fn sampling_converges_on_diagonal() {
        let s = diag43();
        let sample = sample_factor_scores(&s, 0.01, 0.0, 1_000_000, 7).unwrap();
        assert_eq!(sample.draws.len(), 2);
        assert!((sample.draws[0].ratio - 0.64).abs() < 0.002);
        assert!((sample.draws[1].ratio - 0.36).abs() < 0.002);
        assert_eq!(sample.draws.iter().map(|b| b.count).sum::<u64>(), 1_000_000);
    }

    #[test]
    fn rank_one_single_bucket() {
        let s = SvdModel::from_spectrum(vec![2.0]).unwrap();
        for n in [1, 10, 1000] {
            let sample = sample_factor_scores(&s, 0.1, 0.01, n, 3).unwrap();
            assert_eq!(sample.draws.len(), 1);
            assert_eq!(sample.draws[0].ratio, 1.0);
        }
    }

    #[test]
    fn selection_examples() {
        let sample = SpectralSample {
            draws: vec![
                BucketEstimate { sigma_hat: 4.0, count: 64, ratio: 0.64, factor_score: 16.0, multiplicity: 1 },
                BucketEstimate { sigma_hat: 3.0, count: 36, ratio: 0.36, factor_score: 9.0, multiplicity: 1 },
            ],
            n: 100,
            gamma: 0.1,
            epsilon: 0.01,
        };
        let sel = select_k_for_variance(&sample, 0.6).unwrap();
        assert_eq!((sel.k, sel.p_est), (1, 0.64));
        assert!(sel.theta > 3.0 && sel.theta < 4.0);
        let all = select_k_for_variance(&sample, 1.0).unwrap();
        assert_eq!(all.k, 2);
        assert!((all.theta - 2.99).abs() < 1e-12);
        let alt = select_k_with(&sample, 0.6, ThetaPlacement::LastMinusEpsilon).unwrap();
        assert!((alt.theta - 3.99).abs() < 1e-12);
        assert!(select_k_for_variance(&sample, 0.0).is_err());
        let mut short = sample.clone();
        short.draws.pop();
        assert!(matches!(
            select_k_for_variance(&short, 0.9),
            Err(Error::UnreachableTarget { .. })
        ));
    }

    #[test]
    fn sum_check_examples() {
        let s = diag43();
        let exact = check_fsr_sum(&s, 3.5, 0.0, 0.0, AmplitudeMode::Exact, 0).unwrap();
        assert!((exact.p_est - 0.64).abs() < 1e-12);
        let all = check_fsr_sum(&s, 0.0, 0.01, 0.05, AmplitudeMode::Relative, 2).unwrap();
        assert!(all.p_true == 1.0 && all.p_est <= 1.0 && all.p_est >= 0.95);
        for seed in 0..100 {
            let r = check_fsr_sum(&s, 3.5, 0.001, 0.05, AmplitudeMode::Relative, seed).unwrap();
            assert!(r.p_est >= 0.608 - 1e-12 && r.p_est <= 0.672 + 1e-12);
        }
        let none = check_fsr_sum(&s, 10.0, 0.001, 0.05, AmplitudeMode::Relative, 1).unwrap();
        assert!(none.undefined_relative);
        assert_eq!(none.p_est, 0.0);
    }

    #[test]
    fn binary_search_examples() {
        let s = diag43();
        let r = binary_search_threshold(&s, 0.64, 0.01, 0.05, ProbeMode::Exact, 0).unwrap();
        let theta = r.theta.unwrap();
        assert!(theta > 3.0 && theta <= 4.0, "{theta}");
        assert!(r.iterations <= r.max_iterations);

        let r = binary_search_threshold(&s, 1.0, 0.01, 0.1, ProbeMode::Exact, 0).unwrap();
        assert_eq!(r.theta, Some(0.0));
        assert!(r.probes.is_empty());

        let r = binary_search_threshold(&s, 0.5, 0.01, 0.01, ProbeMode::Exact, 0).unwrap();
        assert_eq!(r.theta, None);
        assert_eq!(r.iterations, r.max_iterations);
    }

    #[test]
    fn count_examples() {
        let s = diag43();
        assert_eq!(count_retained(&s, 3.5, 0.0, CountMode::Exact, 0.0, 0).unwrap().k, 1);
        assert_eq!(count_retained(&s, 0.0, 0.01, CountMode::Exact, 0.0, 0).unwrap().k, 2);
        let rel = count_retained(&s, 10.0, 0.01, CountMode::Relative, 0.1, 0).unwrap();
        assert!(rel.undefined_relative && rel.k == 0);
        let big = SvdModel::from_spectrum((1..=100).rev().map(f64::from).collect()).unwrap();
        for seed in 0..20 {
            let r = count_retained(&big, 50.5, 0.0, CountMode::Relative, 0.1, seed).unwrap();
            assert_eq!(r.k_exact, 50);
            assert!((r.k_estimate - 50.0).abs() <= 0.1 * 50.0 + 1e-9);
        }
    }

    #[test]
    fn extraction_exact_regime() {
        let s = diag43();
        let r = extract_topk(&s, 3.5, 1e-6, 1e-6, Side::Left, TomographyNorm::L2, 1).unwrap();
        assert_eq!(r.k, 1);
        let u = r.u_hat.as_ref().unwrap();
        assert!((u[(0, 0)] - 1.0).abs() < 1e-6 && u[(1, 0)].abs() < 1e-5);
        assert!((r.sigma_hats[0] - 4.0).abs() < 1e-6);
        assert!(r.measurements_used.unwrap() >= r.shots_per_vector.unwrap());
    }

    #[test]
    fn extraction_both_sides_within_delta() {
        let s = diag43();
        let r = extract_topk(&s, 1.0, 0.01, 0.2, Side::Both, TomographyNorm::L2, 9).unwrap();
        assert_eq!(r.k, 2);
        let (u, v) = (r.u_hat.unwrap(), r.v_hat.unwrap());
        for j in 0..2 {
            assert!((u.column(j) - s.u().column(j)).norm() <= 0.2);
            assert!((v.column(j) - s.v().column(j)).norm() <= 0.2);
            assert!((u.column(j).norm() - 1.0).abs() < 1e-10);
        }
        assert!(matches!(
            extract_topk(&s, 5.0, 0.01, 0.2, Side::Both, TomographyNorm::L2, 9),
            Err(Error::EmptyRetention { .. })
        ));
    }

    #[test]
    fn large_budgets_use_the_embedding() {
        let q = vec![0.25; 4];
        let mut rng = rng_from_seed(1);
        let mean = (0..200).map(|_| collect_until(&q, 10_000, &mut rng).unwrap() as f64).sum::<f64>() / 200.0;
        // each category needs 10^4 hits: total close to 4 * 10^4 plus a
        // max-of-four fluctuation of order sqrt(10^4) * 4
        assert!(mean > 40_000.0 && mean < 41_000.0, "{mean}");
    }

    #[test]
    fn embedding_matches_direct_simulation() {
        // Same law from both samplers: compare means for t just above and
        // below the switch.
        let q = vec![0.5, 0.3, 0.2];
        let direct_t = 1000;
        let mut rng = rng_from_seed(5);
        let a: f64 = (0..400).map(|_| collect_until(&q, direct_t, &mut rng).unwrap() as f64).sum::<f64>() / 400.0;
        let b: f64 = (0..400).map(|_| collect_until(&q, 2000, &mut rng).unwrap() as f64).sum::<f64>() / 400.0;
        // waiting time for the rarest category dominates: ~ t / 0.2
        assert!((a - 5000.0).abs() < 150.0, "{a}");
        assert!((b - 10000.0).abs() < 250.0, "{b}");
    }

    #[test]
    fn coupon_single_and_uniform() {
        let one = SvdModel::from_spectrum(vec![1.0]).unwrap();
        let c = coupon_collector_trials(&one, 0.5, 0.0, 100, 1).unwrap();
        assert_eq!((c.mean, c.std, c.benchmark), (1.0, 0.0, 1.0));

        let ten = SvdModel::from_spectrum((1..=10).rev().map(f64::from).collect()).unwrap();
        let c = coupon_collector_trials(&ten, 0.5, 0.0, 10_000, 2).unwrap();
        let h10: f64 = (1..=10).map(|i| 1.0 / i as f64).sum();
        assert!((c.mean - 10.0 * h10).abs() < 0.1 * 10.0 * h10);
        let again = coupon_collector_trials(&ten, 0.5, 0.0, 10_000, 2).unwrap();
        assert_eq!(c, again);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn factor_score_error_bounds(
            mut sig in prop::collection::vec(0.01f64..5.0, 1..20),
            frac in 1e-4f64..0.2,
        ) {
            sig.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let s = SvdModel::from_spectrum(sig).unwrap();
            let eps = frac * s.frobenius();
            let rs = round_spectrum(&s, eps).unwrap();
            let f2 = s.total_variance();
            for (i, &sigma) in s.sigmas().iter().enumerate() {
                let h = rs.sigma_hat(i);
                let lam = sigma * sigma;
                prop_assert!((h * h - lam).abs() <= 2.0 * eps * sigma + eps * eps + 1e-12 * lam);
                prop_assert!(((h * h - lam) / f2).abs() <= (2.0 * eps * sigma + eps * eps) / f2 + 1e-12);
            }
        }

        #[test]
        fn measurement_distribution_near_uniform(
            mut sig in prop::collection::vec(0.5f64..5.0, 1..20),
            frac in 1e-4f64..0.1,
        ) {
            sig.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let s = SvdModel::from_spectrum(sig).unwrap();
            let theta = 0.5;
            let eps = frac * theta;
            let rs = sve_round(&s, eps, ScaleMode::Absolute, 1.0).unwrap_or_else(|_| RoundedSpectrum::exact(&s));
            let (idx, q) = measurement_distribution(&s, &rs, theta);
            if !idx.is_empty() {
                let k = idx.len() as f64;
                let tv: f64 = 0.5 * q.iter().map(|x| (x - 1.0 / k).abs()).sum::<f64>();
                prop_assert!(tv <= 2.0 * eps / theta + 1e-12);
                prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn sampling_is_deterministic(seed in any::<u64>()) {
            let s = SvdModel::from_spectrum(vec![3.0, 2.0, 1.0]).unwrap();
            let a = sample_factor_scores(&s, 0.05, 0.0, 100, seed).unwrap();
            let b = sample_factor_scores(&s, 0.05, 0.0, 100, seed).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
