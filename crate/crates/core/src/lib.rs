//! Classical, desk-scale simulation of quantum SVD-based data representation.
//!
//! The quantum subroutines (factor score ratio sampling, the sum check on the
//! factor score ratios, the threshold binary search, reduced-rank counting and
//! top-k singular vector extraction) are reproduced as seeded stochastic
//! processes on top of an exact dense SVD. The error-propagation bounds for
//! the PCA, CA and LSA representations are evaluated in closed form and
//! checked empirically.
//!
//! Module map:
//!
//! - [`matrix_store`]: ingestion, preprocessing, contingency tables and the
//!   correspondence-analysis residual matrix.
//! - [`svd_oracle`]: exact SVD, consistent singular value rounding and
//!   spectral-norm estimation.
//! - [`noise`]: tomography, amplitude-estimation and matrix perturbation
//!   noise injectors.
//! - [`qsim`]: the routine simulators with measurement and cost accounting.
//! - [`bounds`]: closed-form error bounds and empirical checkers.
//! - [`apps`]: PCA, CA and LSA pipelines.
//! - [`runtime`]: run-time parameters and cost curves.
//! - [`analysis`]: kNN cross-validation, sweeps, reports and the experiment
//!   driver used by the CLI.

pub mod analysis;
pub mod apps;
pub mod bounds;
pub mod error;
pub mod io;
pub mod matrix_store;
pub mod noise;
pub mod qsim;
pub mod rng;
pub mod runtime;
pub mod svd_oracle;
pub mod synth;

pub use error::{Error, Result};
pub use matrix_store::{ContingencyTable, DataMatrix};
pub use svd_oracle::{RoundedSpectrum, SvdModel};
