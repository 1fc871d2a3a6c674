use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use svdsim::analysis::{run_and_record, ExperimentConfig, FoldMode};
use svdsim::matrix_store::MatrixFormat;
use svdsim::noise::{AmplitudeMode, TomographyNorm};
use svdsim::qsim::{CountMode, ProbeMode, Side, ThetaPlacement};
use svdsim::runtime::GapRule;

#[derive(Parser, Debug)]
#[command(name = "svdsim", version, about = "Simulated quantum SVD routines and data representations")]
struct Cli {
    /// Master seed; every stochastic step derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Input format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// CSV inputs start with a header row.
    #[arg(long, global = true)]
    header: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Csv,
    Idx,
    Raw,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Norm {
    L2,
    Linf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SideArg {
    Left,
    Right,
    Both,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Amp {
    Exact,
    Additive,
    Relative,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ExactNoisy {
    Exact,
    Noisy,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CountArg {
    Exact,
    Relative,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Gap {
    Half,
    Full,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Folding {
    Stratified,
    Random,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Placement {
    Midpoint,
    LastMinusEps,
}

#[derive(Args, Debug, Clone)]
struct Input {
    /// Data matrix, samples in rows.
    input: PathBuf,
    /// Subtract the column means.
    #[arg(long)]
    center: bool,
    /// Divide by the largest singular value (after centering).
    #[arg(long)]
    spectral_normalize: bool,
}

#[derive(Args, Debug, Clone, Default)]
struct Target {
    /// Fraction of variance to retain.
    #[arg(long)]
    p: Option<f64>,
    /// Number of components.
    #[arg(long)]
    k: Option<usize>,
    /// Singular value threshold.
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
struct Fit {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, conflicts_with = "xi")]
    delta: Option<f64>,
    /// Frobenius error budget, converted to a vector precision.
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long, value_enum)]
    norm: Option<Norm>,
    #[arg(long, value_enum)]
    placement: Option<Placement>,
}

#[derive(Args, Debug, Clone)]
struct Knn {
    #[arg(long, default_value_t = 7)]
    neighbors: usize,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, value_enum, default_value_t = Folding::Stratified)]
    fold_mode: Folding,
    /// Label file: one integer per line, or IDX with --format idx.
    #[arg(long)]
    labels: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Center and/or spectrally normalize a matrix.
    Preprocess(Input),
    /// Exact SVD: sigmas, U, V.
    Svd(Input),
    /// Sample the factor score ratio distribution.
    SampleFsr {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        /// Number of measurements; default is the Wald size for gamma.
        #[arg(long)]
        samples: Option<u64>,
        /// Also select k for this variance target.
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, value_enum)]
        placement: Option<Placement>,
    },
    /// Estimate the retained factor score ratio mass above theta.
    CheckSum {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, value_enum, default_value_t = Amp::Exact)]
        mode: Amp,
    },
    /// Binary search for theta reaching a variance target.
    FindThreshold {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, value_enum, default_value_t = ExactNoisy::Exact)]
        probe: ExactNoisy,
    },
    /// Count singular values above theta.
    CountK {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, value_enum, default_value_t = CountArg::Exact)]
        mode: CountArg,
    },
    /// Extract the singular vectors above theta with tomography noise.
    ExtractTopk {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, value_enum, default_value_t = SideArg::Both)]
        side: SideArg,
        #[arg(long, value_enum, default_value_t = Norm::L2)]
        norm: Norm,
    },
    /// Fit a PCA model and project the input.
    Pca {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        fit: Fit,
    },
    /// Correspondence analysis of a contingency table of counts.
    Ca {
        table: PathBuf,
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        fit: Fit,
        /// Added to every cell before the marginals are taken.
        #[arg(long)]
        smoothing: Option<f64>,
    },
    /// Latent semantic analysis of a term-document matrix.
    Lsa {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        fit: Fit,
    },
    /// Fold query vectors into an LSA model.
    FoldQuery {
        #[command(flatten)]
        input: Input,
        /// Queries, one term vector per row.
        #[arg(long)]
        queries: PathBuf,
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        fit: Fit,
    },
    /// Fraction of rows well represented by the top-k subspace.
    Representability {
        #[command(flatten)]
        input: Input,
        /// Variance targets, comma separated.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// mu, norms, thresholds and precisions feeding the cost model.
    RuntimeParams {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        runtime: Runtime,
    },
    /// Evaluate the cost expressions.
    CostReport {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        runtime: Runtime,
        /// Sample counts at which to re-evaluate, comma separated.
        #[arg(long, value_delimiter = ',')]
        ladder: Option<Vec<usize>>,
    },
    /// Coupon-collector statistics of the extraction measurements.
    Coupon {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Add Frobenius-bounded noise to a matrix.
    Perturb {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        xi: f64,
    },
    /// k-NN cross-validation, optionally on a PCA projection.
    KnnEval {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        knn: Knn,
        #[command(flatten)]
        target: Target,
    },
    /// Accuracy against Frobenius perturbation of the PCA projection.
    Sweep {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        knn: Knn,
        #[command(flatten)]
        target: Target,
        /// xi values, comma separated.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Factor score ratio distribution.
    FsrReport(Input),
}

#[derive(Args, Debug, Clone)]
struct Runtime {
    #[command(flatten)]
    target: Target,
    /// Thresholding resolution; default from --gap-rule.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, value_enum, default_value_t = Gap::Half)]
    gap_rule: Gap,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
}

fn apply_input(cfg: &mut ExperimentConfig, i: Input) {
    cfg.input = Some(i.input);
    cfg.center = i.center;
    cfg.spectral_normalize = i.spectral_normalize;
}

fn apply_target(cfg: &mut ExperimentConfig, t: Target) {
    cfg.p = t.p;
    cfg.k = t.k;
    cfg.theta = t.theta;
}

fn norm(n: Norm) -> TomographyNorm {
    match n {
        Norm::L2 => TomographyNorm::L2,
        Norm::Linf => TomographyNorm::Linf,
    }
}

fn placement(p: Placement) -> ThetaPlacement {
    match p {
        Placement::Midpoint => ThetaPlacement::Midpoint,
        Placement::LastMinusEps => ThetaPlacement::LastMinusEpsilon,
    }
}

fn apply_fit(cfg: &mut ExperimentConfig, f: Fit) {
    cfg.gamma = f.gamma;
    cfg.eps = f.eps;
    cfg.delta = f.delta;
    cfg.xi = f.xi;
    if let Some(n) = f.norm {
        cfg.norm = norm(n);
    }
    if let Some(p) = f.placement {
        cfg.placement = placement(p);
    }
}

fn apply_knn(cfg: &mut ExperimentConfig, k: Knn) {
    cfg.neighbors = k.neighbors;
    cfg.folds = k.folds;
    cfg.fold_mode = match k.fold_mode {
        Folding::Stratified => FoldMode::Stratified,
        Folding::Random => FoldMode::Random,
    };
    cfg.labels = Some(k.labels);
}

fn apply_runtime(cfg: &mut ExperimentConfig, r: Runtime) {
    apply_target(cfg, r.target);
    cfg.eps = r.eps;
    cfg.gap_rule = match r.gap_rule {
        Gap::Half => GapRule::HalfGap,
        Gap::Full => GapRule::FullGap,
    };
    cfg.delta = r.delta;
    cfg.xi = r.xi;
    cfg.gamma = r.gamma;
    cfg.eta = r.eta;
}

fn config(cli: Cli) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seed: cli.seed,
        out: cli.out,
        header: cli.header,
        format: match cli.format {
            Format::Csv => MatrixFormat::Csv,
            Format::Idx => MatrixFormat::Idx,
            Format::Raw => MatrixFormat::RawF64,
        },
        ..Default::default()
    };
    let name = match cli.cmd {
        Cmd::Preprocess(i) => {
            apply_input(&mut cfg, i);
            "preprocess"
        }
        Cmd::Svd(i) => {
            apply_input(&mut cfg, i);
            "svd"
        }
        Cmd::SampleFsr {
            input,
            gamma,
            eps,
            samples,
            p,
            placement: pl,
        } => {
            apply_input(&mut cfg, input);
            cfg.gamma = gamma;
            cfg.eps = eps;
            cfg.samples = samples;
            cfg.p = p;
            if let Some(pl) = pl {
                cfg.placement = placement(pl);
            }
            "sample-fsr"
        }
        Cmd::CheckSum {
            input,
            theta,
            eps,
            eta,
            mode,
        } => {
            apply_input(&mut cfg, input);
            cfg.theta = Some(theta);
            cfg.eps = eps;
            cfg.eta = eta;
            cfg.amplitude = match mode {
                Amp::Exact => AmplitudeMode::Exact,
                Amp::Additive => AmplitudeMode::Additive,
                Amp::Relative => AmplitudeMode::Relative,
            };
            "check-sum"
        }
        Cmd::FindThreshold {
            input,
            p,
            eps,
            eta,
            probe,
        } => {
            apply_input(&mut cfg, input);
            cfg.p = Some(p);
            cfg.eps = Some(eps);
            cfg.eta = eta;
            cfg.probe = match probe {
                ExactNoisy::Exact => ProbeMode::Exact,
                ExactNoisy::Noisy => ProbeMode::Noisy,
            };
            "find-threshold"
        }
        Cmd::CountK {
            input,
            theta,
            eps,
            eta,
            mode,
        } => {
            apply_input(&mut cfg, input);
            cfg.theta = Some(theta);
            cfg.eps = eps;
            cfg.eta = eta;
            cfg.count_mode = match mode {
                CountArg::Exact => CountMode::Exact,
                CountArg::Relative => CountMode::Relative,
            };
            "count-k"
        }
        Cmd::ExtractTopk {
            input,
            theta,
            eps,
            delta,
            side,
            norm: n,
        } => {
            apply_input(&mut cfg, input);
            cfg.theta = Some(theta);
            cfg.eps = eps;
            cfg.delta = delta;
            cfg.side = match side {
                SideArg::Left => Side::Left,
                SideArg::Right => Side::Right,
                SideArg::Both => Side::Both,
            };
            cfg.norm = norm(n);
            "extract-topk"
        }
        Cmd::Pca { input, target, fit } => {
            apply_input(&mut cfg, input);
            apply_target(&mut cfg, target);
            apply_fit(&mut cfg, fit);
            "pca"
        }
        Cmd::Ca {
            table,
            target,
            fit,
            smoothing,
        } => {
            cfg.input = Some(table);
            apply_target(&mut cfg, target);
            apply_fit(&mut cfg, fit);
            cfg.smoothing = smoothing;
            "ca"
        }
        Cmd::Lsa { input, target, fit } => {
            apply_input(&mut cfg, input);
            apply_target(&mut cfg, target);
            apply_fit(&mut cfg, fit);
            "lsa"
        }
        Cmd::FoldQuery {
            input,
            queries,
            target,
            fit,
        } => {
            apply_input(&mut cfg, input);
            cfg.queries = Some(queries);
            apply_target(&mut cfg, target);
            apply_fit(&mut cfg, fit);
            "fold-query"
        }
        Cmd::Representability { input, grid } => {
            apply_input(&mut cfg, input);
            cfg.grid = grid;
            "representability"
        }
        Cmd::RuntimeParams { input, runtime } => {
            apply_input(&mut cfg, input);
            apply_runtime(&mut cfg, runtime);
            "runtime-params"
        }
        Cmd::CostReport { input, runtime, ladder } => {
            apply_input(&mut cfg, input);
            apply_runtime(&mut cfg, runtime);
            cfg.ladder = ladder;
            "cost-report"
        }
        Cmd::Coupon {
            input,
            target,
            eps,
            trials,
        } => {
            apply_input(&mut cfg, input);
            apply_target(&mut cfg, target);
            cfg.eps = eps;
            cfg.trials = trials;
            "coupon"
        }
        Cmd::Perturb { input, xi } => {
            apply_input(&mut cfg, input);
            cfg.xi = Some(xi);
            "perturb"
        }
        Cmd::KnnEval { input, knn, target } => {
            apply_input(&mut cfg, input);
            apply_knn(&mut cfg, knn);
            apply_target(&mut cfg, target);
            "knn-eval"
        }
        Cmd::Sweep {
            input,
            knn,
            target,
            grid,
            trials,
        } => {
            apply_input(&mut cfg, input);
            apply_knn(&mut cfg, knn);
            apply_target(&mut cfg, target);
            cfg.grid = grid;
            cfg.trials = trials;
            "sweep"
        }
        Cmd::FsrReport(i) => {
            apply_input(&mut cfg, i);
            "fsr-report"
        }
    };
    cfg.command = name.to_string();
    cfg
}

fn main() -> ExitCode {
    let cfg = config(Cli::parse());
    match run_and_record(&cfg) {
        0 => ExitCode::SUCCESS,
        c => ExitCode::from(c as u8),
    }
}
