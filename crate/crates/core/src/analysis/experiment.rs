//! One config, one artifact directory. Every subcommand of the CLI is a
//! named pipeline here; the driver echoes the resolved parameters to
//! `params.json`, writes the result tables and appends the cost ledger.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::knn::{knn_cv_with, FoldMode};
use super::report::fsr_distribution_report;
use super::sweep::{sweep_representation, sweep_trend, SweepOptions, SWEEP_HEADER};
use crate::apps::{
    ca_fit_with, cosine_similarities, lsa_fit, lsa_fold_query, pca_fit_model, pca_representability,
    pca_transform_matrix, DeltaSpec, FitParams, Target,
};
use crate::error::{Error, Result};
use crate::io;
use crate::matrix_store::{load_idx_labels, load_matrix, preprocess, ContingencyTable, DataMatrix, MatrixFormat, PreprocessOptions};
use crate::noise::{perturb_matrix_frobenius, AmplitudeMode, TomographyNorm};
use crate::qsim::{self, CostRecord, CountMode, ProbeMode, Side, ThetaPlacement};
use crate::rng::SeedStream;
use crate::runtime::{self, GapRule, RuntimeParams, COST_HEADER};
use crate::svd_oracle::{compute_svd, SvdModel, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Preprocess,
    Svd,
    SampleFsr,
    CheckSum,
    FindThreshold,
    CountK,
    ExtractTopk,
    Pca,
    Ca,
    Lsa,
    FoldQuery,
    Representability,
    RuntimeParams,
    CostReport,
    Coupon,
    Perturb,
    KnnEval,
    Sweep,
    FsrReport,
}

impl Command {
    pub const ALL: [Command; 19] = [
        Command::Preprocess,
        Command::Svd,
        Command::SampleFsr,
        Command::CheckSum,
        Command::FindThreshold,
        Command::CountK,
        Command::ExtractTopk,
        Command::Pca,
        Command::Ca,
        Command::Lsa,
        Command::FoldQuery,
        Command::Representability,
        Command::RuntimeParams,
        Command::CostReport,
        Command::Coupon,
        Command::Perturb,
        Command::KnnEval,
        Command::Sweep,
        Command::FsrReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Preprocess => "preprocess",
            Command::Svd => "svd",
            Command::SampleFsr => "sample-fsr",
            Command::CheckSum => "check-sum",
            Command::FindThreshold => "find-threshold",
            Command::CountK => "count-k",
            Command::ExtractTopk => "extract-topk",
            Command::Pca => "pca",
            Command::Ca => "ca",
            Command::Lsa => "lsa",
            Command::FoldQuery => "fold-query",
            Command::Representability => "representability",
            Command::RuntimeParams => "runtime-params",
            Command::CostReport => "cost-report",
            Command::Coupon => "coupon",
            Command::Perturb => "perturb",
            Command::KnnEval => "knn-eval",
            Command::Sweep => "sweep",
            Command::FsrReport => "fsr-report",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownCommand(s.to_string()))
    }
}

/// Full description of one run. Unset optional parameters take per-command
/// defaults, which are recorded under `resolved` in `params.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub command: String,
    pub input: Option<PathBuf>,
    pub format: MatrixFormat,
    /// CSV input starts with a header row.
    pub header: bool,
    pub labels: Option<PathBuf>,
    /// Query vectors for fold-query, one per row.
    pub queries: Option<PathBuf>,
    /// Not echoed: two runs differing only in the output location produce
    /// identical artifacts.
    #[serde(skip)]
    pub out: PathBuf,
    pub seed: u64,
    pub center: bool,
    pub spectral_normalize: bool,
    pub gamma: Option<f64>,
    pub eps: Option<f64>,
    pub eta: Option<f64>,
    pub delta: Option<f64>,
    pub xi: Option<f64>,
    pub theta: Option<f64>,
    pub p: Option<f64>,
    pub k: Option<usize>,
    pub samples: Option<u64>,
    pub trials: Option<usize>,
    pub neighbors: usize,
    pub folds: usize,
    pub fold_mode: FoldMode,
    pub side: Side,
    pub norm: TomographyNorm,
    pub amplitude: AmplitudeMode,
    pub probe: ProbeMode,
    pub count_mode: CountMode,
    pub placement: ThetaPlacement,
    pub gap_rule: GapRule,
    /// xi grid for sweep, p grid for representability.
    pub grid: Option<Vec<f64>>,
    pub ladder: Option<Vec<usize>>,
    pub smoothing: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            input: None,
            format: MatrixFormat::Csv,
            header: false,
            labels: None,
            queries: None,
            out: PathBuf::from("out"),
            seed: 0,
            center: false,
            spectral_normalize: false,
            gamma: None,
            eps: None,
            eta: None,
            delta: None,
            xi: None,
            theta: None,
            p: None,
            k: None,
            samples: None,
            trials: None,
            neighbors: 7,
            folds: 10,
            fold_mode: FoldMode::Stratified,
            side: Side::Both,
            norm: TomographyNorm::L2,
            amplitude: AmplitudeMode::Exact,
            probe: ProbeMode::Exact,
            count_mode: CountMode::Exact,
            placement: ThetaPlacement::Midpoint,
            gap_rule: GapRule::HalfGap,
            grid: None,
            ladder: None,
            smoothing: None,
        }
    }
}

/// Default sampling precision of the factor score ratio estimation.
pub const DEFAULT_GAMMA: f64 = 0.0316;
pub const DEFAULT_P: f64 = 0.85;
pub const DEFAULT_ETA: f64 = 0.01;
pub const DEFAULT_COUPON_TRIALS: usize = 10_000;
pub const DEFAULT_SWEEP_TRIALS: usize = 5;

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    out: PathBuf,
    files: Vec<String>,
    costs: Vec<CostRecord>,
    resolved: Map<String, Value>,
}

impl Ctx<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.out.join(name)
    }

    fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let p = self.path(name);
        io::write_table_csv(&p, header, rows)
    }

    fn matrix(&mut self, name: &str, m: &DMatrix<f64>) -> Result<()> {
        let p = self.path(name);
        io::write_matrix_csv(&p, m)
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        let p = self.path(name);
        io::write_json(&p, v)
    }

    fn resolve<T: Serialize>(&mut self, key: &str, v: T) {
        self.resolved.insert(key.to_string(), json!(v));
    }

    fn input_path(&self) -> Result<&Path> {
        self.cfg
            .input
            .as_deref()
            .ok_or_else(|| Error::param("input", "this command needs an input matrix"))
    }

    fn raw_matrix(&self) -> Result<DataMatrix> {
        load_matrix(self.input_path()?, self.cfg.format, self.cfg.header)
    }

    /// Input after the configured preprocessing.
    fn data(&self) -> Result<DataMatrix> {
        let m = self.raw_matrix()?;
        if self.cfg.center || self.cfg.spectral_normalize {
            preprocess(
                &m,
                PreprocessOptions {
                    center: self.cfg.center,
                    spectral_normalize: self.cfg.spectral_normalize,
                },
            )
        } else {
            Ok(m)
        }
    }

    fn labels(&self, n: usize) -> Result<Vec<usize>> {
        let path = self
            .cfg
            .labels
            .as_deref()
            .ok_or_else(|| Error::param("labels", "this command needs a label file"))?;
        let labels = load_labels(path, self.cfg.format)?;
        if labels.len() != n {
            return Err(Error::Shape {
                expected: (n, 1),
                got: (labels.len(), 1),
            });
        }
        Ok(labels)
    }

    fn eps(&mut self) -> f64 {
        let e = self.cfg.eps.unwrap_or(0.0);
        self.resolve("eps", e);
        e
    }

    fn eta(&mut self) -> f64 {
        let e = self.cfg.eta.unwrap_or(0.0);
        self.resolve("eta", e);
        e
    }

    fn theta(&mut self) -> Result<f64> {
        let t = self
            .cfg
            .theta
            .ok_or_else(|| Error::param("theta", "this command needs --theta"))?;
        self.resolve("theta", t);
        Ok(t)
    }

    /// p, then k, then theta; variance 0.85 when none is given.
    fn target(&mut self) -> Target {
        let t = if let Some(p) = self.cfg.p {
            Target::Variance(p)
        } else if let Some(k) = self.cfg.k {
            Target::Components(k)
        } else if let Some(th) = self.cfg.theta {
            Target::Threshold(th)
        } else {
            Target::Variance(DEFAULT_P)
        };
        self.resolve("target", t);
        t
    }

    fn fit_params(&mut self, target: Target) -> FitParams {
        let delta = match self.cfg.xi {
            Some(xi) => DeltaSpec::Xi(xi),
            None => DeltaSpec::Delta(self.cfg.delta.unwrap_or(0.0)),
        };
        let mut p = FitParams::new(target, self.cfg.gamma.unwrap_or(0.0), self.cfg.eps.unwrap_or(0.0), delta, self.cfg.seed);
        p.norm = self.cfg.norm;
        p.placement = self.cfg.placement;
        self.resolve("fit", p);
        p
    }
}

/// Integer labels, one per line (CSV) or an IDX label file.
pub fn load_labels(path: &Path, format: MatrixFormat) -> Result<Vec<usize>> {
    if format == MatrixFormat::Idx {
        return load_idx_labels(path);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .filter(|(i, l)| !(*i == 0 && l.parse::<f64>().is_err()))
        .map(|(i, l)| {
            let v: f64 = l.split(',').next().unwrap_or("").trim().parse().map_err(|_| Error::Format {
                row: i,
                col: 0,
                msg: format!("not a label: `{l}`"),
            })?;
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::Format {
                    row: i,
                    col: 0,
                    msg: format!("labels must be non-negative integers, found {v}"),
                });
            }
            Ok(v as usize)
        })
        .collect()
}

fn f(x: f64) -> String {
    io::fmt(x)
}

fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

/// Runs `cfg.command` and returns the files written, relative to `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let cmd: Command = cfg.command.parse()?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let mut ctx = Ctx {
        cfg,
        out: cfg.out.clone(),
        files: Vec::new(),
        costs: Vec::new(),
        resolved: Map::new(),
    };
    ctx.resolve("seed", cfg.seed);
    match cmd {
        Command::Preprocess => run_preprocess(&mut ctx)?,
        Command::Svd => run_svd(&mut ctx)?,
        Command::SampleFsr => run_sample(&mut ctx)?,
        Command::CheckSum => run_check_sum(&mut ctx)?,
        Command::FindThreshold => run_find_threshold(&mut ctx)?,
        Command::CountK => run_count(&mut ctx)?,
        Command::ExtractTopk => run_extract(&mut ctx)?,
        Command::Pca => run_pca(&mut ctx)?,
        Command::Ca => run_ca(&mut ctx)?,
        Command::Lsa => run_lsa(&mut ctx, false)?,
        Command::FoldQuery => run_lsa(&mut ctx, true)?,
        Command::Representability => run_representability(&mut ctx)?,
        Command::RuntimeParams => run_runtime(&mut ctx, false)?,
        Command::CostReport => run_runtime(&mut ctx, true)?,
        Command::Coupon => run_coupon(&mut ctx)?,
        Command::Perturb => run_perturb(&mut ctx)?,
        Command::KnnEval => run_knn(&mut ctx)?,
        Command::Sweep => run_sweep(&mut ctx)?,
        Command::FsrReport => run_fsr(&mut ctx)?,
    }
    let ledger: String = ctx.costs.iter().map(|c| c.line() + "\n").collect();
    let p = ctx.path("cost_ledger.txt");
    io::write_text(&p, &ledger)?;
    let params = json!({ "config": cfg, "resolved": Value::Object(ctx.resolved.clone()) });
    ctx.json("params.json", &params)?;
    Ok(ctx.files)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

/// [`run_experiment`], recording a failure as `error.json` in the output
/// directory. Returns the process exit status.
pub fn run_and_record(cfg: &ExperimentConfig) -> i32 {
    match run_experiment(cfg) {
        Ok(_) => 0,
        Err(e) => {
            let rec = ErrorRecord {
                kind: e.kind().to_string(),
                message: e.to_string(),
            };
            let _ = io::write_json(&cfg.out.join("error.json"), &rec);
            eprintln!("error: {e}");
            1
        }
    }
}

fn svd_of(m: &DataMatrix) -> Result<SvdModel> {
    compute_svd(m, DEFAULT_RANK_TOL)
}

fn run_preprocess(ctx: &mut Ctx) -> Result<()> {
    let m = ctx.data()?;
    ctx.matrix("matrix.csv", m.values())?;
    let prov = m.provenance();
    ctx.table(
        "summary.csv",
        &["rows", "cols", "frobenius", "nnz", "centered", "spectral_normalized"],
        &[vec![
            m.nrows().to_string(),
            m.ncols().to_string(),
            f(m.frobenius()),
            m.nnz().to_string(),
            prov.row_mean_centered.to_string(),
            prov.spectral_normalized.to_string(),
        ]],
    )
}

fn run_svd(ctx: &mut Ctx) -> Result<()> {
    let s = svd_of(&ctx.data()?)?;
    s.export(&ctx.out)?;
    ctx.files.extend(["sigmas.csv", "U.csv", "V.csv", "meta.json"].map(String::from));
    Ok(())
}

fn run_fsr(ctx: &mut Ctx) -> Result<()> {
    let s = svd_of(&ctx.data()?)?;
    let p = ctx.path("fsr.csv");
    fsr_distribution_report(&s, &p)?;
    Ok(())
}

fn run_sample(ctx: &mut Ctx) -> Result<()> {
    let s = svd_of(&ctx.data()?)?;
    let gamma = ctx.cfg.gamma.unwrap_or(DEFAULT_GAMMA);
    let eps = ctx.eps();
    let n = match ctx.cfg.samples {
        Some(n) => n,
        None => qsim::wald_sample_size(gamma, 2.0)?,
    };
    ctx.resolve("gamma", gamma);
    ctx.resolve("samples", n);
    let sample = qsim::sample_factor_scores(&s, gamma, eps, n, ctx.cfg.seed)?;
    ctx.costs.push(sample.cost(s.frobenius()));
    let rows: Vec<Vec<String>> = sample
        .draws
        .iter()
        .map(|b| {
            vec![
                f(b.sigma_hat),
                b.count.to_string(),
                f(b.ratio),
                f(b.factor_score),
                b.multiplicity.to_string(),
                (b.ratio > gamma).to_string(),
            ]
        })
        .collect();
    ctx.table(
        "sample.csv",
        &["sigma_hat", "count", "ratio", "factor_score", "multiplicity", "reported"],
        &rows,
    )?;
    if let Some(p) = ctx.cfg.p {
        let sel = qsim::select_k_with(&sample, p, ctx.cfg.placement)?;
        ctx.table(
            "selection.csv",
            &["p_target", "k", "buckets", "p_est", "theta", "p_exact_at_k"],
            &[vec![
                f(p),
                sel.k.to_string(),
                sel.buckets.to_string(),
                f(sel.p_est),
                f(sel.theta),
                f(s.cumulative_ratio(sel.k)),
            ]],
        )?;
    }
    Ok(())
}

fn run_check_sum(ctx: &mut Ctx) -> Result<()> {
    let s = svd_of(&ctx.data()?)?;
    let theta = ctx.theta()?;
    let eps = ctx.eps();
    let eta = ctx.eta();
    let mode = ctx.cfg.amplitude;
    let r = qsim::check_fsr_sum(&s, theta, eps, eta, mode, ctx.cfg.seed)?;
    ctx.costs.push(r.cost.clone());
    ctx.table(
        "sum.csv",
        &["theta", "p_est", "p_true", "undefined_relative"],
        &[vec![f(theta), f(r.p_est), f(r.p_true), r.undefined_relative.to_string()]],
    )
}

fn run_find_threshold(ctx: &mut Ctx) -> Result<()> {
    let s = svd_of(&ctx.data()?)?;
    let p = ctx.cfg.p.ok_or_else(|| Error::param("p", "find-threshold needs --p"))?;
    let eps = ctx
        .cfg
        .eps
        .ok_or_else(|| Error::param("eps", "find-threshold needs a positive --eps"))?;
    let eta = ctx.cfg.eta.unwrap_or(DEFAULT_ETA);
    ctx.resolve("p", p);
    ctx.resolve("eps", eps);
    ctx.resolve("eta", eta);
    let r = qsim::binary_search_threshold(&s, p, eps, eta, ctx.cfg.probe, ctx.cfg.seed)?;
    ctx.costs.push(r.cost.clone());
    ctx.table(
        "threshold.csv",
        &["found", "theta", "iterations", "max_iterations"],
        &[vec![
            r.theta.is_some().to_string(),
            opt(r.theta),
            r.iterations.to_string(),
            r.max_iterations.to_string(),
        ]],
    )?;
    let rows: Vec<Vec<String>> = r
        .probes
        .iter()
        .enumerate()
        .map(|(i, (tau, est))| vec![(i + 1).to_string(), f(*tau), f(*est)])
        .collect();
    ctx.table("probes.csv", &["step", "tau", "estimate"], &rows)
}

fn run_count(ctx: &mut Ctx) -> Result<()> {
    let s = svd_of(&ctx.data()?)?;
    let theta = ctx.theta()?;
    let eps = ctx.eps();
    let eta = ctx.eta();
    let r = qsim::count_retained(&s, theta, eps, ctx.cfg.count_mode, eta, ctx.cfg.seed)?;
    ctx.costs.push(r.cost.clone());
    ctx.table(
        "count.csv",
        &["theta", "k", "k_estimate", "k_exact", "undefined_relative"],
        &[vec![
            f(theta),
            r.k.to_string(),
            f(r.k_estimate),
            r.k_exact.to_string(),
            r.undefined_relative.to_string(),
        ]],
    )
}

fn run_extract(ctx: &mut Ctx) -> Result<()> {
    let s = svd_of(&ctx.data()?)?;
    let theta = ctx.theta()?;
    let eps = ctx.eps();
    let delta = ctx.cfg.delta.unwrap_or(0.0);
    ctx.resolve("delta", delta);
    let r = qsim::extract_topk(&s, theta, eps, delta, ctx.cfg.side, ctx.cfg.norm, ctx.cfg.seed)?;
    ctx.costs.extend(r.cost.iter().cloned());
    let rows: Vec<Vec<String>> = (0..r.k)
        .map(|i| {
            vec![
                (r.indices[i] + 1).to_string(),
                f(r.sigma_hats[i]),
                f(r.factor_scores[i]),
                f(r.ratios[i]),
                f(r.q[i]),
            ]
        })
        .collect();
    ctx.table("extraction.csv", &["index", "sigma_hat", "factor_score", "ratio", "q"], &rows)?;
    if let Some(u) = &r.u_hat {
        ctx.matrix("U_hat.csv", u)?;
    }
    if let Some(v) = &r.v_hat {
        ctx.matrix("V_hat.csv", v)?;
    }
    ctx.json("extraction.json", &r)
}

fn run_pca(ctx: &mut Ctx) -> Result<()> {
    let m = ctx.data()?;
    let s = svd_of(&m)?;
    let target = ctx.target();
    let params = ctx.fit_params(target);
    let model = pca_fit_model(&s, &params)?;
    ctx.costs.extend(model.cost.iter().cloned());
    model.export(&ctx.out)?;
    ctx.files.extend(["components.csv", "sigmas.csv", "meta.json"].map(String::from));
    let proj = pca_transform_matrix(&model, &m)?;
    ctx.matrix("transform.csv", &proj.y)?;
    ctx.table(
        "projection.csv",
        &["k", "theta", "delta", "p_retained", "p_projected", "xi_bound"],
        &[vec![
            model.k.to_string(),
            f(model.theta),
            f(model.delta),
            f(model.p_retained),
            f(proj.p),
            f(proj.xi_bound),
        ]],
    )
}

fn run_ca(ctx: &mut Ctx) -> Result<()> {
    let counts = ctx.raw_matrix()?;
    let t = ContingencyTable::from_counts(counts.into_values())?;
    let target = ctx.target();
    let params = ctx.fit_params(target);
    ctx.resolve("smoothing", ctx.cfg.smoothing);
    let model = ca_fit_with(&t, &params, ctx.cfg.smoothing)?;
    ctx.costs.extend(model.cost.iter().cloned());
    model.export(&ctx.out)?;
    ctx.files.extend(["row_coords.csv", "col_coords.csv", "meta.json"].map(String::from));
    Ok(())
}

fn run_lsa(ctx: &mut Ctx, fold: bool) -> Result<()> {
    let m = ctx.data()?;
    let target = if ctx.cfg.p.is_some() || ctx.cfg.k.is_some() || ctx.cfg.theta.is_some() {
        Some(ctx.target())
    } else {
        None
    };
    let params = ctx.fit_params(target.unwrap_or(Target::Components(1)));
    let model = lsa_fit(&m, target, &params)?;
    ctx.resolve("k", model.k);
    ctx.costs.extend(model.cost.iter().cloned());
    if !fold {
        model.export(&ctx.out)?;
        ctx.files.extend(
            ["word_space.csv", "doc_space.csv", "word_half.csv", "doc_half.csv", "fold_matrix.csv", "meta.json"]
                .map(String::from),
        );
        return Ok(());
    }
    let qpath = ctx
        .cfg
        .queries
        .clone()
        .ok_or_else(|| Error::param("queries", "fold-query needs a query file"))?;
    let queries = load_matrix(&qpath, MatrixFormat::Csv, ctx.cfg.header)?;
    let mut folded = DMatrix::zeros(queries.nrows(), model.k);
    let mut sims = Vec::new();
    for i in 0..queries.nrows() {
        let q: Vec<f64> = queries.values().row(i).iter().copied().collect();
        let fq = lsa_fold_query(&model, &q)?;
        folded.set_row(i, &fq.transpose());
        // compare in the singular-value-weighted document space
        let scaled = fq.component_mul(&nalgebra::DVector::from_column_slice(&model.sigmas));
        for (d, c) in cosine_similarities(&model.doc_space, &scaled).into_iter().enumerate() {
            sims.push(vec![i.to_string(), d.to_string(), f(c)]);
        }
    }
    ctx.matrix("folded.csv", &folded)?;
    ctx.table("similarities.csv", &["query", "document", "cosine"], &sims)
}

fn run_representability(ctx: &mut Ctx) -> Result<()> {
    let m = ctx.data()?;
    let s = svd_of(&m)?;
    let grid = ctx
        .cfg
        .grid
        .clone()
        .unwrap_or_else(|| (1..=9).map(|i| i as f64 / 10.0).collect());
    ctx.resolve("grid", &grid);
    let rows = pca_representability(&m, &s, &grid)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![f(r.p), r.k_p.to_string(), f(r.alpha), f(r.beta), r.zero_rows.to_string()])
        .collect();
    ctx.table("representability.csv", &["p", "k_p", "alpha", "beta", "zero_rows"], &table)
}

/// Runtime parameters from data and overrides. theta defaults to the
/// midpoint of the gap below sigma_k, the thresholding resolution to the
/// configured gap rule at k.
fn runtime_params(ctx: &mut Ctx, m: &DataMatrix, s: &SvdModel) -> Result<(RuntimeParams, Value)> {
    let mu = runtime::compute_mu(m, &runtime::default_mu_grid())?;
    let p = ctx.cfg.p.unwrap_or(DEFAULT_P);
    let k = match ctx.cfg.k {
        Some(k) => k,
        None => s.k_for_variance(p).ok_or(Error::UnreachableTarget {
            target: p,
            reached: s.cumulative_ratio(s.rank()),
        })?,
    };
    if k == 0 || k > s.rank() {
        return Err(Error::param("k", format!("must lie in 1..={}", s.rank())));
    }
    let sig = s.sigmas();
    let theta = ctx.cfg.theta.unwrap_or(if k < sig.len() {
        0.5 * (sig[k - 1] + sig[k])
    } else {
        sig[k - 1] / 2.0
    });
    let half = runtime::thresholding_epsilon(sig, k, GapRule::HalfGap)?;
    let full = runtime::thresholding_epsilon(sig, k, GapRule::FullGap)?;
    let teps = match ctx.cfg.eps {
        Some(e) => e,
        None => match ctx.cfg.gap_rule {
            GapRule::HalfGap => half.eps,
            GapRule::FullGap => full.eps,
        },
    };
    let spectral = s.sigma_max();
    let (delta, xi) = match (ctx.cfg.delta, ctx.cfg.xi) {
        (Some(d), Some(x)) => (Some(d), Some(x)),
        (Some(d), None) => (Some(d), Some((k as f64).sqrt() * (teps + d * spectral))),
        (None, Some(x)) => (Some(runtime::estimate_delta(x, k, teps, spectral)?), Some(x)),
        (None, None) => (None, None),
    };
    let rp = RuntimeParams {
        mu: Some(mu.mu),
        best_p: Some(mu.best_p),
        spectral: Some(spectral),
        frobenius: Some(s.frobenius()),
        theta: Some(theta),
        thresholding_eps: Some(teps),
        k: Some(k),
        rank: Some(s.rank()),
        p: Some(s.cumulative_ratio(k)),
        delta,
        gamma: Some(ctx.cfg.gamma.unwrap_or(DEFAULT_GAMMA)),
        eta: Some(ctx.cfg.eta.unwrap_or(DEFAULT_ETA)),
        xi,
        n: Some(m.nrows()),
        m: Some(m.ncols()),
    };
    let extra = json!({
        "mu_term": mu.winner,
        "mu_mixed": mu.mixed,
        "eps_half_gap": half.eps,
        "eps_full_gap": full.eps,
        "gap_degenerate": half.degenerate,
        "p_target": p,
    });
    Ok((rp, extra))
}

fn run_runtime(ctx: &mut Ctx, costs: bool) -> Result<()> {
    let m = ctx.data()?;
    let s = svd_of(&m)?;
    let (rp, extra) = runtime_params(ctx, &m, &s)?;
    ctx.resolve("runtime", &rp);
    if !costs {
        let v = serde_json::to_value(&rp)?;
        let mut rows = Vec::new();
        for (key, val) in v.as_object().into_iter().flatten().chain(extra.as_object().into_iter().flatten()) {
            let cell = match val {
                Value::Null => String::new(),
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            rows.push(vec![key.clone(), cell]);
        }
        ctx.table("runtime_params.csv", &["name", "value"], &rows)?;
        return ctx.json("runtime_params.json", &json!({ "params": rp, "derived": extra }));
    }
    let report = runtime::cost_report(&rp)?;
    for r in &report {
        ctx.costs.push(CostRecord::new(r.routine, r.expression, r.value));
    }
    let rows: Vec<Vec<String>> = report.iter().map(|r| r.csv_row()).collect();
    ctx.table("cost_report.csv", &COST_HEADER, &rows)?;
    if let Some(ladder) = ctx.cfg.ladder.clone() {
        let lr = runtime::cost_ladder(&rp, &ladder)?;
        let rows: Vec<Vec<String>> = lr
            .rows
            .iter()
            .map(|r| vec![r.n.to_string(), r.routine.to_string(), f(r.value)])
            .collect();
        ctx.table("ladder.csv", &["n", "routine", "value_unit_constants"], &rows)?;
        ctx.table(
            "crossover.csv",
            &["crossover_n"],
            &[vec![lr.crossover.map(|n| n.to_string()).unwrap_or_default()]],
        )?;
    }
    Ok(())
}

fn run_coupon(ctx: &mut Ctx) -> Result<()> {
    let s = svd_of(&ctx.data()?)?;
    let eps = ctx.eps();
    let rs = qsim::round_spectrum(&s, eps)?;
    let target = ctx.target();
    let stream = SeedStream::new(ctx.cfg.seed);
    let theta = match target {
        Target::Threshold(t) => t,
        _ => {
            let params = ctx.fit_params(target);
            crate::apps::resolve_theta(&s, &rs, &params, &stream)?.theta
        }
    };
    let trials = ctx.cfg.trials.unwrap_or(DEFAULT_COUPON_TRIALS);
    ctx.resolve("theta", theta);
    ctx.resolve("trials", trials);
    let c = qsim::coupon_rounded(&s, &rs, theta, trials, stream.child("coupon"))?;
    ctx.table(
        "coupon.csv",
        &["k", "trials", "mean", "std", "benchmark"],
        &[vec![c.k.to_string(), c.trials.to_string(), f(c.mean), f(c.std), f(c.benchmark)]],
    )
}

fn run_perturb(ctx: &mut Ctx) -> Result<()> {
    let m = ctx.data()?;
    let xi = ctx.cfg.xi.ok_or_else(|| Error::param("xi", "perturb needs --xi"))?;
    ctx.resolve("xi", xi);
    let pm = perturb_matrix_frobenius(m.values(), xi, ctx.cfg.seed)?;
    let err = (&pm - m.values()).norm();
    ctx.matrix("perturbed.csv", &pm)?;
    ctx.table("perturb.csv", &["xi", "observed_frobenius_error"], &[vec![f(xi), f(err)]])
}

/// Representation used by knn-eval and sweep: the exact top-k (or top-p)
/// PCA projection when a target is given, the raw data otherwise.
fn representation(ctx: &mut Ctx, m: &DataMatrix, force: bool) -> Result<DMatrix<f64>> {
    if !force && ctx.cfg.p.is_none() && ctx.cfg.k.is_none() && ctx.cfg.theta.is_none() {
        return Ok(m.values().clone());
    }
    let s = svd_of(m)?;
    let target = ctx.target();
    let params = ctx.fit_params(target);
    let model = pca_fit_model(&s, &params)?;
    ctx.resolve("k", model.k);
    ctx.costs.extend(model.cost.iter().cloned());
    Ok(pca_transform_matrix(&model, m)?.y)
}

fn run_knn(ctx: &mut Ctx) -> Result<()> {
    let m = ctx.data()?;
    let labels = ctx.labels(m.nrows())?;
    let y = representation(ctx, &m, false)?;
    let cfg = ctx.cfg;
    let r = knn_cv_with(&y, &labels, cfg.neighbors, cfg.folds, cfg.fold_mode, cfg.seed)?;
    let rows: Vec<Vec<String>> = r
        .per_fold
        .iter()
        .enumerate()
        .map(|(i, a)| vec![i.to_string(), f(*a)])
        .collect();
    ctx.table("knn_folds.csv", &["fold", "accuracy"], &rows)?;
    ctx.table(
        "knn.csv",
        &["neighbors", "folds", "dims", "accuracy"],
        &[vec![
            cfg.neighbors.to_string(),
            cfg.folds.to_string(),
            y.ncols().to_string(),
            f(r.accuracy),
        ]],
    )
}

fn run_sweep(ctx: &mut Ctx) -> Result<()> {
    let m = ctx.data()?;
    let labels = ctx.labels(m.nrows())?;
    let y = representation(ctx, &m, true)?;
    let grid = match ctx.cfg.grid.clone() {
        Some(g) => g,
        None => {
            let fy = y.norm();
            (0..=8).map(|i| fy * i as f64 / 8.0).collect()
        }
    };
    let trials = ctx.cfg.trials.unwrap_or(DEFAULT_SWEEP_TRIALS);
    ctx.resolve("grid", &grid);
    ctx.resolve("trials", trials);
    let opts = SweepOptions {
        neighbors: ctx.cfg.neighbors,
        folds: ctx.cfg.folds,
        fold_mode: ctx.cfg.fold_mode,
    };
    let rows = sweep_representation(&y, &labels, &grid, trials, opts, ctx.cfg.seed)?;
    let table: Vec<Vec<String>> = rows.iter().map(|r| r.csv_row()).collect();
    ctx.table("sweep.csv", &SWEEP_HEADER, &table)?;
    if rows.len() >= 3 {
        let t = sweep_trend(&rows)?;
        ctx.table(
            "trend.csv",
            &["spearman_rho", "p_value", "points"],
            &[vec![f(t.rho), f(t.p_value), t.n.to_string()]],
        )?;
    }
    Ok(())
}
