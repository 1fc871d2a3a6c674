//! Acceptance suite. Prints one line per criterion and exits with a failure
//! status if any criterion fails.
//!
//! Criteria 1, 2, 6 and 7 run on MNIST when `SVDSIM_MNIST_DIR` points at a
//! directory of uncompressed IDX files. Otherwise they run on the seeded
//! synthetic low-rank dataset and are labelled as such.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use svdsim::analysis::{assign_folds, knn_cv_with, sweep_representation, sweep_trend, FoldMode, SweepOptions};
use svdsim::apps::{ca_fit, lsa_fit, pca_fit_model, pca_representability, pca_representability_beta};
use svdsim::apps::{FitParams, Target};
use svdsim::bounds::{inject_budget_noise, lemma_trial, Lemma};
use svdsim::matrix_store::{build_ca_matrix, load_mnist_dir, preprocess, PreprocessOptions};
use svdsim::noise::AmplitudeMode;
use svdsim::qsim::{
    binary_search_threshold, check_fsr_sum, count_retained, coupon_collector_trials, sample_factor_scores,
    select_k_for_variance, CountMode, ProbeMode,
};
use svdsim::rng::{rng_from_seed, SeedStream, SimRng};
use svdsim::runtime::{thresholding_epsilon, GapRule};
use svdsim::svd_oracle::{compute_svd, DEFAULT_RANK_TOL};
use svdsim::synth::{low_rank_dataset, LowRankConfig};
use svdsim::{ContingencyTable, DataMatrix, Error, SvdModel};

const P_TARGET: f64 = 0.85;
const GAMMA: f64 = 0.0316;
const SAMPLE_EPS: f64 = 0.0030;
const XI_DELTA: f64 = 0.1124;

type Outcome = Result<(bool, String), Error>;

struct Data {
    mnist: bool,
    a: DataMatrix,
    labels: Vec<usize>,
    s: SvdModel,
    secs: f64,
    /// Eigenvalues of A^T A in descending order with matching eigenvectors.
    eig_values: Vec<f64>,
    eig_vectors: DMatrix<f64>,
}

impl Data {
    fn load() -> Result<Self, Error> {
        let t = Instant::now();
        let (raw, labels, mnist) = match std::env::var_os("SVDSIM_MNIST_DIR") {
            Some(dir) => {
                let (m, l) = load_mnist_dir(&PathBuf::from(dir))?;
                (m, l, true)
            }
            None => {
                let (m, l) = low_rank_dataset(&LowRankConfig::default())?;
                (m, l, false)
            }
        };
        let a = preprocess(
            &raw,
            PreprocessOptions {
                center: true,
                spectral_normalize: true,
            },
        )?;
        let s = compute_svd(&a, DEFAULT_RANK_TOL)?;
        let secs = t.elapsed().as_secs_f64();

        let eig = SymmetricEigen::new(a.values().tr_mul(a.values()));
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let eig_values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eig_vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
            eig.eigenvectors[(r, order[c])]
        });
        Ok(Self {
            mnist,
            a,
            labels,
            s,
            secs,
            eig_values,
            eig_vectors,
        })
    }

    fn tag(&self) -> &'static str {
        if self.mnist {
            "mnist"
        } else {
            "synthetic fallback"
        }
    }

    /// Smallest k whose eigenvalue mass reaches p, from the independent
    /// eigendecomposition.
    fn k_for(&self, p: f64) -> usize {
        let total: f64 = self.eig_values.iter().map(|x| x.max(0.0)).sum();
        let mut acc = 0.0;
        for (i, l) in self.eig_values.iter().enumerate() {
            acc += l.max(0.0);
            if acc >= p * total {
                return i + 1;
            }
        }
        self.eig_values.len()
    }

    fn cum(&self, k: usize) -> f64 {
        let sq: Vec<f64> = self.s.sigmas().iter().map(|x| x * x).collect();
        sq[..k].iter().sum::<f64>() / sq.iter().sum::<f64>()
    }

    fn k_exact(&self) -> usize {
        self.s.k_for_variance(P_TARGET).expect("reachable")
    }

    fn theta_mid(&self, k: usize) -> f64 {
        let sig = self.s.sigmas();
        0.5 * (sig[k - 1] + sig[k])
    }
}

fn gaussian(n: usize, m: usize, rng: &mut SimRng) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(rng))
}

fn max_abs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Consistent rounding replicated from its definition: b = max(1,
/// ceil(log2(mu/eps))) bits, grid mu/2^b, nearest grid point.
fn oracle_round(sig: &[f64], mu: f64, eps: f64) -> (Vec<f64>, u32) {
    if eps == 0.0 {
        return (sig.to_vec(), 0);
    }
    let bits = ((mu / eps).log2().ceil() as u32).max(1);
    let grid = mu / 2f64.powi(bits as i32);
    (sig.iter().map(|x| (x / grid).round() * grid).collect(), bits)
}

fn oracle_mass(hat: &[f64], lam: &[f64], theta: f64) -> f64 {
    hat.iter().zip(lam).filter(|(h, _)| **h >= theta).map(|(_, l)| l).sum()
}

fn lambdas(sig: &[f64]) -> Vec<f64> {
    let t: f64 = sig.iter().map(|x| x * x).sum();
    sig.iter().map(|x| x * x / t).collect()
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn criterion_1(d: &Data) -> Outcome {
    let fro = d.a.frobenius();
    let k = d.k_exact();
    let theta = d.theta_mid(k);
    let p_k = d.cum(k);
    let sig = d.s.sigmas();
    let eig_err = sig
        .iter()
        .zip(&d.eig_values)
        .fold(0.0f64, |m, (s, l)| m.max((s * s - l).abs()));
    let budget = d.secs < 600.0;
    if d.mnist {
        let ok = (fro - 3.2032).abs() <= 0.005
            && k == 59
            && (theta - 0.1564).abs() <= 0.002
            && (p_k - 0.8580).abs() <= 0.001
            && budget;
        return Ok((
            ok,
            format!(
                "[mnist] |A|_F={fro:.4} k={k} theta={theta:.4} p(k)={p_k:.4} svd_secs={:.1}",
                d.secs
            ),
        ));
    }
    let col_mean = (0..d.a.ncols())
        .map(|j| d.a.values().column(j).mean().abs())
        .fold(0.0, f64::max);
    let fro_sq: f64 = sig.iter().map(|x| x * x).sum();
    let k_ind = d.k_for(P_TARGET);
    let ok = (d.s.sigma_max() - 1.0).abs() <= 1e-8
        && (fro * fro - fro_sq).abs() <= 1e-10 * fro_sq
        && col_mean <= 1e-12
        && eig_err <= 1e-10
        && k == k_ind
        && d.cum(k) >= P_TARGET
        && d.cum(k - 1) < P_TARGET
        && theta < sig[k - 1]
        && theta > sig[k]
        && budget;
    Ok((
        ok,
        format!(
            "[{}] |A|_F={fro:.4} k={k} (eigen oracle {k_ind}) theta={theta:.4} p(k)={p_k:.4} \
             sigma_max={:.12} max|sigma^2-eig|={eig_err:.1e} max|col mean|={col_mean:.1e} svd_secs={:.1}",
            d.tag(),
            d.s.sigma_max(),
            d.secs
        ),
    ))
}

fn criterion_2(d: &Data) -> Outcome {
    let k_exact = d.k_exact();
    let (lo, hi) = if d.mnist {
        (54, 64)
    } else {
        (k_exact.saturating_sub(5), k_exact + 5)
    };
    let mut ks = Vec::new();
    let mut within = 0;
    for seed in 0..20u64 {
        let sample = sample_factor_scores(&d.s, GAMMA, SAMPLE_EPS, 1000, seed)?;
        let sel = select_k_for_variance(&sample, P_TARGET)?;
        if (sel.p_est - d.cum(sel.k)).abs() <= GAMMA {
            within += 1;
        }
        ks.push(sel.k);
    }
    let in_window = ks.iter().filter(|&&k| (lo..=hi).contains(&k)).count();
    let ok = in_window == ks.len() && within >= 18;
    Ok((
        ok,
        format!(
            "[{}] exact k={k_exact} window=[{lo},{hi}] in window {in_window}/20 p within gamma {within}/20 k={ks:?}",
            d.tag()
        ),
    ))
}

fn lemma_bound(lemma: Lemma, r: &svdsim::bounds::BoundReport, d_frob: f64) -> f64 {
    let i = &r.inputs;
    let k = i.k as f64;
    match lemma {
        Lemma::Us => i.sigmas.iter().map(|s| (i.eps + i.delta * s).powi(2)).sum::<f64>().sqrt(),
        Lemma::Du => d_frob * k.sqrt() * i.delta,
        Lemma::UsHalf => i
            .sigmas
            .iter()
            .map(|s| (i.delta * s.sqrt() + i.eps / (2.0 * i.theta.sqrt())).powi(2))
            .sum::<f64>()
            .sqrt(),
        Lemma::UsInv => k.sqrt() * (i.delta / i.theta + i.eps / (i.theta * i.theta - i.theta * i.eps)),
    }
}

fn criterion_3() -> Outcome {
    let stream = SeedStream::new(3);
    let mut summary = Vec::new();
    let mut ok = true;
    for lemma in Lemma::ALL {
        let mut violations = 0;
        let mut mismatches = 0;
        let mut worst = 0.0f64;
        for t in 0..1000u64 {
            let mut rng = rng_from_seed(stream.child_index(lemma.name(), t));
            let m = DataMatrix::new(gaussian(50, 30, &mut rng));
            let s = compute_svd(&m, DEFAULT_RANK_TOL)?;
            let k = rng.random_range(1..=s.rank());
            let eps = 0.25 * s.sigmas()[k - 1] * rng.random::<f64>();
            let delta = 0.3 * rng.random::<f64>();
            let theta_scale = rng.random_range(0.5..=1.0);
            let d: Vec<f64> = (0..50).map(|_| rng.random_range(0.5..2.0)).collect();
            let d_frob = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            let seed = rng.random::<u64>();
            let r = lemma_trial(lemma, &s, k, eps, delta, theta_scale, Some(&d), seed)?;

            // budgets are met exactly and the observed error is recomputed here
            let f = inject_budget_noise(&s, k, eps, delta, seed)?;
            let sig = &s.sigmas()[..k];
            let u = s.top_u(k);
            for j in 0..k {
                let de = (f.sigma_bar[j] - sig[j]).abs();
                let du = (f.u_bar.column(j) - u.column(j)).norm();
                // the injector backs off by a relative 1e-9 so rounding never overshoots delta
                if (de - eps).abs() > 1e-12 || du > delta || delta - du > 1e-8 * delta {
                    mismatches += 1;
                }
            }
            let scale = |x: &DMatrix<f64>, w: &[f64]| {
                let mut y = x.clone();
                for (j, wj) in w.iter().enumerate() {
                    y.column_mut(j).scale_mut(*wj);
                }
                y
            };
            let (e, a) = match lemma {
                Lemma::Us => (scale(&u, sig), scale(&f.u_bar, &f.sigma_bar)),
                Lemma::Du => {
                    let dm = DMatrix::from_diagonal(&DVector::from_column_slice(&d));
                    (&dm * &u, &dm * &f.u_bar)
                }
                Lemma::UsHalf => {
                    let a: Vec<f64> = sig.iter().map(|x| x.sqrt()).collect();
                    let b: Vec<f64> = f.sigma_bar.iter().map(|x| x.sqrt()).collect();
                    (scale(&u, &a), scale(&f.u_bar, &b))
                }
                Lemma::UsInv => {
                    let a: Vec<f64> = sig.iter().map(|x| 1.0 / x).collect();
                    let b: Vec<f64> = f.sigma_bar.iter().map(|x| 1.0 / x).collect();
                    (scale(&u, &a), scale(&f.u_bar, &b))
                }
            };
            let observed = (e - a).norm();
            let bound = lemma_bound(lemma, &r, d_frob);
            if (observed - r.observed_error).abs() > 1e-12 || (bound - r.analytic_bound).abs() > 1e-12 * bound.max(1.0) {
                mismatches += 1;
            }
            if observed > bound + 1e-12 || !r.holds {
                violations += 1;
            }
            if bound > 0.0 {
                worst = worst.max(observed / bound);
            }
        }
        ok &= violations == 0 && mismatches == 0;
        summary.push(format!(
            "{}: {violations} violations, {mismatches} oracle mismatches, max error/bound {worst:.3}",
            lemma.name()
        ));
    }
    Ok((ok, format!("1000 trials per lemma; {}", summary.join("; "))))
}

fn random_spectrum(rng: &mut SimRng) -> Vec<f64> {
    let r = rng.random_range(3..=40);
    let v: Vec<f64> = match rng.random_range(0..3) {
        0 => (0..r).map(|_| rng.random_range(0.01..1.0)).collect(),
        1 => {
            let a = rng.random_range(0.3..2.0);
            (0..r).map(|j| (j as f64 + 1.0).powf(-a)).collect()
        }
        _ => {
            let distinct: Vec<f64> = (0..rng.random_range(2..=5)).map(|_| rng.random_range(0.05..1.0)).collect();
            (0..r).map(|j| distinct[j % distinct.len()]).collect()
        }
    };
    sorted_desc(v)
}

fn criterion_4() -> Outcome {
    let stream = SeedStream::new(4);
    let (mut bad_theta, mut bad_iter, mut bad_none, mut found, mut none) = (0, 0, 0, 0, 0);
    let mut noisy_bad = 0;
    for t in 0..100u64 {
        let mut rng = rng_from_seed(stream.child_index("spectrum", t));
        let sig = random_spectrum(&mut rng);
        let lam = lambdas(&sig);
        let mu = sig.iter().map(|x| x * x).sum::<f64>().sqrt();
        let eps = mu / 2f64.powf(rng.random_range(3.0..12.0));
        let eta = rng.random_range(0.002..0.05);
        let (hat, bits) = oracle_round(&sig, mu, eps);
        let grid = mu / 2f64.powi(bits as i32);
        let points = 1u64 << bits;
        let p = if rng.random::<bool>() {
            rng.random_range(0.02..0.98)
        } else {
            let j = rng.random_range(0..=points);
            (oracle_mass(&hat, &lam, j as f64 * grid) + rng.random_range(-eta..eta)).clamp(0.0, 1.0)
        };
        let reachable = (1.0 - p).abs() <= eta
            || p.abs() <= eta
            || (0..=points).any(|j| (oracle_mass(&hat, &lam, j as f64 * grid) - p).abs() <= eta / 2.0);
        let max_iter = (mu / eps).log2().ceil() as u32;

        let s = SvdModel::from_spectrum(sig.clone())?;
        let r = binary_search_threshold(&s, p, eps, eta, ProbeMode::Exact, t)?;
        if r.iterations > max_iter {
            bad_iter += 1;
        }
        match r.theta {
            Some(theta) => {
                found += 1;
                if (p - oracle_mass(&hat, &lam, theta)).abs() > eta {
                    bad_theta += 1;
                }
            }
            None => none += 1,
        }
        if r.theta.is_some() != reachable {
            bad_none += 1;
        }

        let r = binary_search_threshold(&s, p, eps, eta, ProbeMode::Noisy, t)?;
        if r.iterations > max_iter {
            bad_iter += 1;
        }
        if let Some(theta) = r.theta {
            if (p - oracle_mass(&hat, &lam, theta)).abs() > eta {
                noisy_bad += 1;
            }
        }
    }
    let ok = bad_theta == 0 && bad_iter == 0 && bad_none == 0 && noisy_bad == 0;
    Ok((
        ok,
        format!(
            "100 spectra: {found} found, {none} none; theta off target {bad_theta} (noisy probes {noisy_bad}), \
             iteration overruns {bad_iter}, none-case disagreements with grid enumeration {bad_none}"
        ),
    ))
}

fn criterion_5(d: &Data) -> Outcome {
    let s = SvdModel::from_spectrum(vec![1.0; 10])?;
    let c = coupon_collector_trials(&s, 0.5, 0.0, 10_000, 5)?;
    let h10 = 10.0 * (1..=10).map(|i| 1.0 / i as f64).sum::<f64>();
    let uniform_ok = c.k == 10 && (c.mean - h10).abs() <= 0.1 * h10;

    let k = d.k_exact();
    let eps = thresholding_epsilon(d.s.sigmas(), k, GapRule::HalfGap)?.eps;
    let cd = coupon_collector_trials(&d.s, d.theta_mid(k), eps, 2000, 5)?;
    let bench = k as f64 * (k as f64).ln() / 2.4f64.ln();
    let ratio = cd.mean / bench;
    let data_ok = cd.k == k && (1.0 / 1.5..=1.5).contains(&ratio);
    Ok((
        uniform_ok && data_ok,
        format!(
            "uniform k=10: mean {:.2} vs 10*H_10 {h10:.2}; [{}] k={} eps={eps:.2e}: mean {:.1} vs k log_2.4 k {bench:.1} (ratio {ratio:.2})",
            c.mean,
            d.tag(),
            cd.k,
            cd.mean
        ),
    ))
}

/// Fraction of nonzero rows with |a V_k| / |a| >= beta, from the eigenvectors.
fn oracle_alpha(d: &Data, k: usize, beta: f64) -> f64 {
    let y = d.a.values() * d.eig_vectors.columns(0, k);
    let (mut hit, mut rows) = (0usize, 0usize);
    for i in 0..y.nrows() {
        let na = d.a.values().row(i).norm();
        if na == 0.0 {
            continue;
        }
        rows += 1;
        if y.row(i).norm() / na >= beta {
            hit += 1;
        }
    }
    hit as f64 / rows as f64
}

fn criterion_6(d: &Data) -> Outcome {
    let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let rows = pca_representability(&d.a, &d.s, &grid)?;
    let mut cross_ok = true;
    for r in &rows {
        let k = d.k_for(r.p);
        cross_ok &= r.k_p == k && (r.alpha - oracle_alpha(d, k, r.beta)).abs() <= 1e-3;
    }
    let alphas: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.alpha)).collect();
    let ks: Vec<usize> = rows.iter().map(|r| r.k_p).collect();
    if d.mnist {
        let ok = cross_ok && rows.iter().all(|r| (r.alpha - 0.97).abs() <= 0.03 && r.alpha > 0.85);
        return Ok((ok, format!("[mnist] alpha={alphas:?} k_p={ks:?} oracle agreement {cross_ok}")));
    }
    // fallback: agreement with the eigen oracle, monotone k_p and alpha non-increasing in beta at fixed k
    let mono_k = ks.windows(2).all(|w| w[0] <= w[1]);
    let betas: Vec<f64> = (1..=19).map(|i| i as f64 * 0.05).collect();
    let by_beta: Vec<f64> = betas
        .iter()
        .map(|&b| pca_representability_beta(&d.a, &d.s, 0.5, b).map(|r| r.alpha))
        .collect::<Result<_, _>>()?;
    let mono_beta = by_beta.windows(2).all(|w| w[1] <= w[0]);
    Ok((
        cross_ok && mono_k && mono_beta,
        format!(
            "[{}] alpha={alphas:?} k_p={ks:?} oracle agreement {cross_ok}, k_p monotone {mono_k}, \
             alpha non-increasing in beta {mono_beta}",
            d.tag()
        ),
    ))
}

fn criterion_7(d: &Data) -> Outcome {
    let k = d.k_exact();
    let y = d.s.u_sigma(k);
    let xi = (k as f64).sqrt() * (SAMPLE_EPS + XI_DELTA);
    let steps = [0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0];
    let grid: Vec<f64> = steps.iter().map(|m| m * xi).collect();
    let trials = if d.mnist { 1 } else { 3 };
    let rows = sweep_representation(&y, &d.labels, &grid, trials, SweepOptions::default(), 7)?;
    let bench = rows[0].accuracy_mean;
    let at = rows.iter().find(|r| r.xi == xi).expect("grid point");
    let drop = bench - at.accuracy_mean;
    let trend = sweep_trend(&rows)?;
    let ok = drop <= 0.015 && trend.rho < 0.0 && trend.p_value < 0.05;
    let acc: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.accuracy_mean)).collect();
    Ok((
        ok,
        format!(
            "[{}] k={k} xi={xi:.3} benchmark {bench:.4} drop {drop:.4}; accuracy over grid {acc:?}; spearman rho {:.3} p {:.2e}",
            d.tag(),
            trend.rho,
            trend.p_value
        ),
    ))
}

fn criterion_8(d: &Data) -> Outcome {
    let mut rng = rng_from_seed(8);
    let m = DataMatrix::new(gaussian(40, 12, &mut rng));
    let s = compute_svd(&m, DEFAULT_RANK_TOL)?;
    let mut pca_err = 0.0f64;
    for k in [1, 5, 12] {
        let model = pca_fit_model(&s, &FitParams::exact(Target::Components(k)))?;
        let y = svdsim::apps::pca_transform_matrix(&model, &m)?.y;
        pca_err = pca_err.max(max_abs(&y, &s.u_sigma(k)));
    }
    let k = d.k_exact();
    let model = pca_fit_model(&d.s, &FitParams::exact(Target::Components(k)))?;
    let y = svdsim::apps::pca_transform_matrix(&model, &d.a)?.y;
    pca_err = pca_err.max(max_abs(&y, &d.s.u_sigma(k)));

    let docs = DataMatrix::new(DMatrix::from_fn(30, 12, |_, _| rng.random_range(0.0..5.0f64).floor()));
    let sd = compute_svd(&docs, DEFAULT_RANK_TOL)?;
    let lsa = lsa_fit(&docs, None, &FitParams::exact(Target::Components(sd.rank())))?;
    let v = sd.top_v(lsa.k);
    let mut lsa_err = 0.0f64;
    for j in 0..docs.ncols() {
        let col: Vec<f64> = docs.values().column(j).iter().copied().collect();
        let f = svdsim::apps::lsa_fold_query(&lsa, &col)?;
        for c in 0..lsa.k {
            lsa_err = lsa_err.max((f[c] - v[(j, c)]).abs());
        }
    }

    let r = DVector::from_vec(vec![1.0, 2.0, 3.0, 7.0]);
    let c = DVector::from_vec(vec![2.0, 5.0, 4.0]);
    let t = ContingencyTable::from_counts(&r * c.transpose())?;
    let residual = build_ca_matrix(&t)?.matrix.frobenius();
    let ca_empty = matches!(
        ca_fit(&t, &FitParams::exact(Target::Threshold(1e-3))),
        Err(Error::EmptyRetention { .. })
    );
    let ok = pca_err <= 1e-10 && lsa_err <= 1e-8 && residual <= 1e-12 && ca_empty && lsa.k == sd.rank();
    Ok((
        ok,
        format!(
            "pca |AV_k - U_k S_k|_max={pca_err:.1e}; lsa fold vs V rows max {lsa_err:.1e} (k={}); \
             independence residual |A|_F={residual:.1e}, ca_fit empty retention {ca_empty}",
            lsa.k
        ),
    ))
}

/// Brute-force kNN: all distances, full sort by (distance, index), majority
/// vote with the lowest label winning ties.
fn naive_knn_accuracy(x: &DMatrix<f64>, labels: &[usize], folds: &[usize], nf: usize, neighbors: usize) -> f64 {
    let classes = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for f in 0..nf {
        let (mut correct, mut count) = (0usize, 0usize);
        for q in (0..labels.len()).filter(|&i| folds[i] == f) {
            let mut cand: Vec<(f64, usize)> = (0..labels.len())
                .filter(|&i| folds[i] != f)
                .map(|i| {
                    let mut d = 0.0;
                    for j in 0..x.ncols() {
                        let t = x[(q, j)] - x[(i, j)];
                        d += t * t;
                    }
                    (d, i)
                })
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut votes = vec![0; classes];
            for &(_, i) in &cand[..neighbors] {
                votes[labels[i]] += 1;
            }
            let mut best = 0;
            for l in 1..classes {
                if votes[l] > votes[best] {
                    best = l;
                }
            }
            correct += (best == labels[q]) as usize;
            count += 1;
        }
        total += correct as f64 / count as f64;
    }
    total / nf as f64
}

fn criterion_9() -> Outcome {
    let stream = SeedStream::new(9);
    let (mut count_bad, mut sum_bad) = (0, 0);
    let mut sum_diff = 0.0f64;
    for t in 0..50u64 {
        let mut rng = rng_from_seed(stream.child_index("spectrum", t));
        let distinct: Vec<f64> = (0..rng.random_range(20..=200)).map(|_| rng.random_range(0.01..1.0)).collect();
        let sig = sorted_desc((0..200).map(|i| distinct[i % distinct.len()]).collect());
        let lam = lambdas(&sig);
        let mu = sig.iter().map(|x| x * x).sum::<f64>().sqrt();
        let s = SvdModel::from_spectrum(sig.clone())?;
        for e in 0..4 {
            let eps = if e == 0 { 0.0 } else { mu / 2f64.powf(rng.random_range(2.0..14.0)) };
            let (hat, bits) = oracle_round(&sig, mu, eps);
            let theta = if e == 0 || rng.random::<bool>() {
                rng.random_range(0.0..1.0)
            } else {
                hat[rng.random_range(0..200)]
            };
            let _ = bits;
            let naive_k = hat.iter().filter(|&&h| h >= theta).count();
            let c = count_retained(&s, theta, eps, CountMode::Exact, 0.0, t)?;
            if c.k != naive_k || c.k_exact != naive_k {
                count_bad += 1;
            }
            let naive_p = oracle_mass(&hat, &lam, theta);
            let sc = check_fsr_sum(&s, theta, eps, 0.01, AmplitudeMode::Exact, t)?;
            let diff = (sc.p_est - naive_p).abs().max((sc.p_true - naive_p).abs());
            sum_diff = sum_diff.max(diff);
            if diff > 1e-12 {
                sum_bad += 1;
            }
        }
    }

    let mut knn_bad = 0;
    let mut knn_runs = 0;
    for t in 0..4u64 {
        let mut rng = rng_from_seed(stream.child_index("knn", t));
        let labels: Vec<usize> = (0..200).map(|i| i % 5).collect();
        // integer features give many exact distance ties
        let x = if t % 2 == 0 {
            DMatrix::from_fn(200, 5, |i, j| (rng.random_range(0..4) + (j == labels[i] % 5) as i32) as f64)
        } else {
            DMatrix::from_fn(200, 5, |i, j| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z + if j == labels[i] { 1.5 } else { 0.0 }
            })
        };
        for mode in [FoldMode::Stratified, FoldMode::Random] {
            for neighbors in [1, 3, 7, 8] {
                let folds = assign_folds(&labels, 10, mode, t)?;
                let got = knn_cv_with(&x, &labels, neighbors, 10, mode, t)?;
                let want = naive_knn_accuracy(&x, &labels, &folds, 10, neighbors);
                knn_runs += 1;
                if got.accuracy != want {
                    knn_bad += 1;
                }
            }
        }
    }
    let ok = count_bad == 0 && sum_bad == 0 && knn_bad == 0;
    Ok((
        ok,
        format!(
            "200 values x 200 checks: count mismatches {count_bad}, sum mismatches {sum_bad} (max diff {sum_diff:.1e}); \
             knn mismatches {knn_bad}/{knn_runs} on 200 points"
        ),
    ))
}

fn main() -> ExitCode {
    let t = Instant::now();
    let data = Data::load();
    let mut failed = 0;
    let mut line = |n: usize, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let (ok, detail) = match f() {
            Ok(x) => x,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {n}: {} ({:.1}s) {detail}",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    };
    match &data {
        Ok(d) => {
            line(1, &|| criterion_1(d));
            line(2, &|| criterion_2(d));
        }
        Err(e) => {
            line(1, &|| Ok((false, format!("dataset failed to load: {e}"))));
            line(2, &|| Ok((false, "dataset unavailable".into())));
        }
    }
    line(3, &criterion_3);
    line(4, &criterion_4);
    match &data {
        Ok(d) => {
            line(5, &|| criterion_5(d));
            line(6, &|| criterion_6(d));
            line(7, &|| criterion_7(d));
            line(8, &|| criterion_8(d));
        }
        Err(_) => {
            for n in 5..=8 {
                line(n, &|| Ok((false, "dataset unavailable".into())));
            }
        }
    }
    line(9, &criterion_9);
    println!(
        "acceptance: {} of 9 criteria passed in {:.1}s",
        9 - failed,
        t.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
