use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io;
use crate::svd_oracle::SvdModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsrRow {
    /// 1-based rank index.
    pub index: usize,
    pub sigma: f64,
    pub factor_score: f64,
    pub ratio: f64,
    pub cumulative: f64,
}

pub const FSR_HEADER: [&str; 5] = ["index", "sigma", "factor_score", "ratio", "cumulative"];

pub fn fsr_rows(s: &SvdModel) -> Vec<FsrRow> {
    let mut acc = 0.0;
    s.sigmas()
        .iter()
        .zip(s.factor_scores())
        .zip(s.factor_score_ratios())
        .enumerate()
        .map(|(i, ((&sigma, factor_score), ratio))| {
            acc += ratio;
            FsrRow {
                index: i + 1,
                sigma,
                factor_score,
                ratio,
                cumulative: acc,
            }
        })
        .collect()
}

/// Writes the factor score ratio distribution of `s` to `path` as CSV.
pub fn fsr_distribution_report(s: &SvdModel, path: &Path) -> Result<Vec<FsrRow>> {
    let rows = fsr_rows(s);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.index.to_string(),
                io::fmt(r.sigma),
                io::fmt(r.factor_score),
                io::fmt(r.ratio),
                io::fmt(r.cumulative),
            ]
        })
        .collect();
    io::write_table_csv(path, &FSR_HEADER, &table)?;
    Ok(rows)
}
