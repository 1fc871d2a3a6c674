//! Dataset ingestion and the classical mirror of the quantum-access data
//! structure: a dense matrix that keeps its row norms and Frobenius norm
//! available at all times.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::svd_oracle;

const STOPWORDS_EN: &str = include_str!("../data/stopwords_en.txt");

/// Which preprocessing steps have been applied to a [`DataMatrix`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub row_mean_centered: bool,
    pub spectral_normalized: bool,
}

/// Dense real matrix plus the metadata a quantum-access structure exposes in
/// constant time: the l2 norm of every row and the Frobenius norm.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    row_norms: Vec<f64>,
    frobenius: f64,
    provenance: Provenance,
    nnz: usize,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Self {
        Self::with_provenance(values, Provenance::default())
    }

    pub fn with_provenance(values: DMatrix<f64>, provenance: Provenance) -> Self {
        let (row_norms, nnz) = row_metadata(&values);
        let frobenius = row_norms.iter().map(|r| r * r).sum::<f64>().sqrt();
        Self {
            values,
            row_norms,
            frobenius,
            provenance,
            nnz,
        }
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_slice(n: usize, m: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * m {
            return Err(Error::Structure(format!(
                "expected {} values for a {n}x{m} matrix, got {}",
                n * m,
                data.len()
            )));
        }
        Ok(Self::new(DMatrix::from_row_slice(n, m, data)))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn row_norms(&self) -> &[f64] {
        &self.row_norms
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn nnz(&self) -> usize {
        self.nnz
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0 || self.values.ncols() == 0
    }
}

fn row_metadata(values: &DMatrix<f64>) -> (Vec<f64>, usize) {
    let n = values.nrows();
    let per_row: Vec<(f64, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = values.row(i);
            let sq: f64 = row.iter().map(|x| x * x).sum();
            let nz = row.iter().filter(|x| **x != 0.0).count();
            (sq.sqrt(), nz)
        })
        .collect();
    let nnz = per_row.iter().map(|(_, c)| c).sum();
    (per_row.into_iter().map(|(r, _)| r).collect(), nnz)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFormat {
    Csv,
    Idx,
    RawF64,
}

impl std::str::FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "idx" => Ok(MatrixFormat::Idx),
            "raw_f64" | "raw-f64" | "raw" => Ok(MatrixFormat::RawF64),
            other => Err(Error::param("format", format!("unknown matrix format `{other}`"))),
        }
    }
}

/// Loads a matrix. `skip_header` only applies to CSV input.
pub fn load_matrix(path: &Path, format: MatrixFormat, skip_header: bool) -> Result<DataMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        MatrixFormat::Csv => parse_csv(&bytes, skip_header),
        MatrixFormat::Idx => parse_idx_images(&bytes),
        MatrixFormat::RawF64 => parse_raw_f64(&bytes),
    }
}

pub fn parse_csv(bytes: &[u8], skip_header: bool) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(skip_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut data = Vec::new();
    let mut ncols: Option<usize> = None;
    let mut nrows = 0usize;
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format {
            row,
            col: 0,
            msg: e.to_string(),
        })?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        match ncols {
            None => ncols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(Error::Format {
                    row,
                    col: rec.len().min(c),
                    msg: format!("expected {c} columns, found {}", rec.len()),
                })
            }
            _ => {}
        }
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Format {
                row,
                col,
                msg: format!("cannot parse `{field}` as a number"),
            })?;
            data.push(v);
        }
        nrows += 1;
    }
    let m = ncols.ok_or_else(|| Error::Format {
        row: 0,
        col: 0,
        msg: "empty file".into(),
    })?;
    DataMatrix::from_row_slice(nrows, m, &data)
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Structure("truncated IDX header".into()))
}

/// Parses an IDX image file (magic 0x00000803) into an `n x (rows*cols)`
/// matrix of raw pixel values.
pub fn parse_idx_images(bytes: &[u8]) -> Result<DataMatrix> {
    let magic = be_u32(bytes, 0)?;
    if magic != 0x0000_0803 {
        return Err(Error::Structure(format!(
            "IDX image magic must be 0x00000803, found {magic:#010x}"
        )));
    }
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let m = rows * cols;
    let payload = &bytes[16..];
    if payload.len() != n * m {
        return Err(Error::Structure(format!(
            "IDX header declares {n}x{rows}x{cols} = {} bytes, payload has {}",
            n * m,
            payload.len()
        )));
    }
    if n == 0 || m == 0 {
        return Err(Error::Empty("IDX file holds no images".into()));
    }
    let data: Vec<f64> = payload.iter().map(|&b| f64::from(b)).collect();
    DataMatrix::from_row_slice(n, m, &data)
}

/// Parses an IDX label file (magic 0x00000801).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0)?;
    if magic != 0x0000_0801 {
        return Err(Error::Structure(format!(
            "IDX label magic must be 0x00000801, found {magic:#010x}"
        )));
    }
    let n = be_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() != n {
        return Err(Error::Structure(format!(
            "IDX header declares {n} labels, payload has {}",
            payload.len()
        )));
    }
    Ok(payload.iter().map(|&b| b as usize).collect())
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx_labels(&bytes)
}

fn find_first(dir: &Path, names: &[&str]) -> Option<std::path::PathBuf> {
    names.iter().map(|n| dir.join(n)).find(|p| p.is_file())
}

/// Loads the MNIST distribution from a directory of uncompressed IDX files,
/// concatenating the training and test sets (70000 x 784).
pub fn load_mnist_dir(dir: &Path) -> Result<(DataMatrix, Vec<usize>)> {
    let pick = |stem: &str, kind: &str| -> Result<std::path::PathBuf> {
        let a = format!("{stem}-{kind}");
        let b = a.replacen("-idx", ".idx", 1);
        find_first(dir, &[&a, &b]).ok_or_else(|| {
            Error::io(
                dir.join(&a),
                std::io::Error::new(std::io::ErrorKind::NotFound, "missing MNIST file"),
            )
        })
    };
    let train_x = load_matrix(&pick("train", "images-idx3-ubyte")?, MatrixFormat::Idx, false)?;
    let test_x = load_matrix(&pick("t10k", "images-idx3-ubyte")?, MatrixFormat::Idx, false)?;
    let mut labels = load_idx_labels(&pick("train", "labels-idx1-ubyte")?)?;
    labels.extend(load_idx_labels(&pick("t10k", "labels-idx1-ubyte")?)?);
    if train_x.ncols() != test_x.ncols() {
        return Err(Error::Structure("train and test image sizes differ".into()));
    }
    let (n1, n2, m) = (train_x.nrows(), test_x.nrows(), train_x.ncols());
    if labels.len() != n1 + n2 {
        return Err(Error::Structure("label count does not match image count".into()));
    }
    let mut all = DMatrix::zeros(n1 + n2, m);
    all.rows_mut(0, n1).copy_from(train_x.values());
    all.rows_mut(n1, n2).copy_from(test_x.values());
    Ok((DataMatrix::new(all), labels))
}

/// 16-byte header (two little-endian u64: n, m) followed by `n*m` row-major
/// little-endian f64 values.
pub fn parse_raw_f64(bytes: &[u8]) -> Result<DataMatrix> {
    if bytes.len() < 16 {
        return Err(Error::Format {
            row: 0,
            col: 0,
            msg: "raw_f64 file shorter than its 16-byte header".into(),
        });
    }
    let n = u64::from_le_bytes(bytes[0..8].try_into().expect("8 bytes")) as usize;
    let m = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let payload = &bytes[16..];
    if payload.len() != n * m * 8 {
        return Err(Error::Structure(format!(
            "raw_f64 header declares {n}x{m}, payload holds {} bytes",
            payload.len()
        )));
    }
    if n == 0 || m == 0 {
        return Err(Error::Empty("raw_f64 matrix has a zero dimension".into()));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    DataMatrix::from_row_slice(n, m, &data)
}

pub fn encode_raw_f64(m: &DMatrix<f64>) -> Vec<u8> {
    let (n, c) = m.shape();
    let mut out = Vec::with_capacity(16 + n * c * 8);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(c as u64).to_le_bytes());
    for i in 0..n {
        for j in 0..c {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    pub center: bool,
    pub spectral_normalize: bool,
}

/// Centers every column (feature) to zero mean, then divides by the largest
/// singular value. Metadata is recomputed.
pub fn preprocess(m: &DataMatrix, opts: PreprocessOptions) -> Result<DataMatrix> {
    if m.is_empty() {
        return Err(Error::Empty("cannot preprocess an empty matrix".into()));
    }
    let mut values = m.values().clone();
    let mut prov = m.provenance();
    if opts.center {
        let n = values.nrows() as f64;
        for mut col in values.column_iter_mut() {
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
        }
        prov.row_mean_centered = true;
    }
    if opts.spectral_normalize {
        let smax = svd_oracle::largest_singular_value(&values)?;
        if smax == 0.0 {
            return Err(Error::DivideByZero(
                "spectral normalization of the zero matrix".into(),
            ));
        }
        values /= smax;
        prov.spectral_normalized = true;
    }
    Ok(DataMatrix::with_provenance(values, prov))
}

/// Counts of co-occurrences between two categorical variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    pub counts: DMatrix<f64>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

impl ContingencyTable {
    pub fn new(
        counts: DMatrix<f64>,
        row_labels: Vec<String>,
        col_labels: Vec<String>,
    ) -> Result<Self> {
        if row_labels.len() != counts.nrows() || col_labels.len() != counts.ncols() {
            return Err(Error::Structure(
                "label lists must match the table dimensions".into(),
            ));
        }
        if let Some(bad) = counts.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::Numeric(format!(
                "contingency counts must be finite and non-negative, found {bad}"
            )));
        }
        Ok(Self {
            counts,
            row_labels,
            col_labels,
        })
    }

    /// Table with generated labels `r0.., c0..`.
    pub fn from_counts(counts: DMatrix<f64>) -> Result<Self> {
        let rows = (0..counts.nrows()).map(|i| format!("r{i}")).collect();
        let cols = (0..counts.ncols()).map(|j| format!("c{j}")).collect();
        Self::new(counts, rows, cols)
    }

    pub fn total(&self) -> f64 {
        self.counts.sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusFilters {
    pub drop_stopwords: bool,
    pub min_doc_freq: usize,
    pub max_doc_ratio: f64,
}

impl CorpusFilters {
    pub fn none() -> Self {
        Self {
            drop_stopwords: false,
            min_doc_freq: 1,
            max_doc_ratio: 1.0,
        }
    }
}

impl Default for CorpusFilters {
    fn default() -> Self {
        Self {
            drop_stopwords: true,
            min_doc_freq: 2,
            max_doc_ratio: 0.5,
        }
    }
}

pub fn english_stopwords() -> impl Iterator<Item = &'static str> {
    STOPWORDS_EN.lines().map(str::trim).filter(|l| !l.is_empty())
}

/// Lower-cases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Document-by-word count table. Columns are sorted lexicographically.
pub fn build_contingency<S: AsRef<str>>(
    corpus: &[Vec<S>],
    filters: CorpusFilters,
) -> Result<ContingencyTable> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus has no documents".into()));
    }
    let stop: HashSet<&str> = if filters.drop_stopwords {
        english_stopwords().collect()
    } else {
        HashSet::new()
    };
    let mut doc_freq: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in corpus {
        let uniq: BTreeSet<&str> = doc
            .iter()
            .map(AsRef::as_ref)
            .filter(|w| !stop.contains(w))
            .collect();
        for w in uniq {
            *doc_freq.entry(w).or_default() += 1;
        }
    }
    let n_docs = corpus.len() as f64;
    let vocab: Vec<&str> = doc_freq
        .iter()
        .filter(|(_, &df)| df >= filters.min_doc_freq && df as f64 <= filters.max_doc_ratio * n_docs)
        .map(|(w, _)| *w)
        .collect();
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let index: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(j, w)| (*w, j)).collect();
    let mut counts = DMatrix::zeros(corpus.len(), vocab.len());
    for (i, doc) in corpus.iter().enumerate() {
        for w in doc {
            if let Some(&j) = index.get(w.as_ref()) {
                counts[(i, j)] += 1.0;
            }
        }
    }
    let rows = (0..corpus.len()).map(|i| format!("doc{i}")).collect();
    let cols = vocab.iter().map(|w| w.to_string()).collect();
    ContingencyTable::new(counts, rows, cols)
}

/// The standardized-residual matrix of correspondence analysis together with
/// the marginals needed to map singular vectors back to coordinates.
#[derive(Debug, Clone)]
pub struct CaMatrix {
    pub matrix: DataMatrix,
    pub row_marginals: Vec<f64>,
    pub col_marginals: Vec<f64>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub dropped_rows: Vec<String>,
    pub dropped_cols: Vec<String>,
}

impl CaMatrix {
    /// Frobenius norm of `D_X^{-1/2}`.
    pub fn row_scale_frobenius(&self) -> f64 {
        self.row_marginals.iter().map(|p| 1.0 / p).sum::<f64>().sqrt()
    }

    pub fn col_scale_frobenius(&self) -> f64 {
        self.col_marginals.iter().map(|p| 1.0 / p).sum::<f64>().sqrt()
    }
}

pub fn build_ca_matrix(t: &ContingencyTable) -> Result<CaMatrix> {
    build_ca_matrix_smoothed(t, 0.0)
}

/// Like [`build_ca_matrix`], with `smoothing` added to every cell first.
pub fn build_ca_matrix_smoothed(t: &ContingencyTable, smoothing: f64) -> Result<CaMatrix> {
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::param("smoothing", "must be finite and non-negative"));
    }
    let counts = t.counts.add_scalar(smoothing);
    let total = counts.sum();
    if total <= 0.0 {
        return Err(Error::DegenerateTable("total count is zero".into()));
    }
    let keep_rows: Vec<usize> = (0..counts.nrows()).filter(|&i| counts.row(i).sum() > 0.0).collect();
    let keep_cols: Vec<usize> = (0..counts.ncols()).filter(|&j| counts.column(j).sum() > 0.0).collect();
    let dropped_rows = (0..counts.nrows())
        .filter(|i| !keep_rows.contains(i))
        .map(|i| t.row_labels[i].clone())
        .collect();
    let dropped_cols = (0..counts.ncols())
        .filter(|j| !keep_cols.contains(j))
        .map(|j| t.col_labels[j].clone())
        .collect();

    let p = DMatrix::from_fn(keep_rows.len(), keep_cols.len(), |i, j| {
        counts[(keep_rows[i], keep_cols[j])] / total
    });
    let px: Vec<f64> = (0..p.nrows()).map(|i| p.row(i).sum()).collect();
    let py: Vec<f64> = (0..p.ncols()).map(|j| p.column(j).sum()).collect();
    let a = DMatrix::from_fn(p.nrows(), p.ncols(), |i, j| {
        (p[(i, j)] - px[i] * py[j]) / (px[i] * py[j]).sqrt()
    });
    Ok(CaMatrix {
        matrix: DataMatrix::new(a),
        row_marginals: px,
        col_marginals: py,
        row_labels: keep_rows.iter().map(|&i| t.row_labels[i].clone()).collect(),
        col_labels: keep_cols.iter().map(|&j| t.col_labels[j].clone()).collect(),
        dropped_rows,
        dropped_cols,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn csv_diagonal_metadata() {
        let m = parse_csv(b"4,0\n0,3", false).unwrap();
        assert_eq!(m.shape(), (2, 2));
        assert!(close(m.frobenius(), 5.0, 1e-15));
        assert_eq!(m.row_norms(), &[4.0, 3.0]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.provenance(), Provenance::default());
    }

    #[test]
    fn csv_header_is_skipped_on_request() {
        let m = parse_csv(b"a,b\n1,2\n3,4\n", true).unwrap();
        assert_eq!(m.shape(), (2, 2));
        assert_eq!(m.values()[(1, 0)], 3.0);
    }

    #[test]
    fn empty_csv_is_a_format_error() {
        assert!(matches!(parse_csv(b"", false), Err(Error::Format { .. })));
    }

    #[test]
    fn csv_parse_error_names_position() {
        match parse_csv(b"1,2\n3,x\n", false) {
            Err(Error::Format { row, col, .. }) => assert_eq!((row, col), (1, 1)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_csv(b"1,2\n3\n", false), Err(Error::Format { row: 1, .. })));
    }

    #[test]
    fn idx_roundtrip_and_header_mismatch() {
        let mut bytes = vec![0, 0, 8, 3];
        for d in [2u32, 2, 2] {
            bytes.extend_from_slice(&d.to_be_bytes());
        }
        bytes.extend_from_slice(&[0, 1, 2, 3, 4, 5, 6, 7]);
        let m = parse_idx_images(&bytes).unwrap();
        assert_eq!(m.shape(), (2, 4));
        assert_eq!(m.values()[(1, 3)], 7.0);

        bytes.pop();
        assert!(matches!(parse_idx_images(&bytes), Err(Error::Structure(_))));

        let mut labels = vec![0, 0, 8, 1];
        labels.extend_from_slice(&3u32.to_be_bytes());
        labels.extend_from_slice(&[5, 0, 9]);
        assert_eq!(parse_idx_labels(&labels).unwrap(), vec![5, 0, 9]);
    }

    #[test]
    fn raw_f64_roundtrip() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 3.5, 0.0, 1e-300, 7.0]);
        let m = parse_raw_f64(&encode_raw_f64(&a)).unwrap();
        assert_eq!(m.values(), &a);
        assert!(parse_raw_f64(&[0u8; 8]).is_err());
    }

    #[test]
    fn normalize_diagonal() {
        let m = DataMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 3.0]).unwrap();
        let p = preprocess(
            &m,
            PreprocessOptions {
                center: false,
                spectral_normalize: true,
            },
        )
        .unwrap();
        assert!(close(p.values()[(0, 0)], 1.0, 1e-12));
        assert!(close(p.values()[(1, 1)], 0.75, 1e-12));
        assert!(close(p.frobenius(), 1.25, 1e-12));
        assert!(p.provenance().spectral_normalized);
        assert!(!p.provenance().row_mean_centered);
    }

    #[test]
    fn centering_zeroes_column_means() {
        let m = DataMatrix::from_row_slice(3, 2, &[1.0, 10.0, 2.0, 20.0, 6.0, 0.0]).unwrap();
        let p = preprocess(
            &m,
            PreprocessOptions {
                center: true,
                spectral_normalize: false,
            },
        )
        .unwrap();
        for col in p.values().column_iter() {
            assert!(col.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn normalizing_zero_matrix_fails() {
        let m = DataMatrix::new(DMatrix::zeros(3, 3));
        let r = preprocess(
            &m,
            PreprocessOptions {
                center: false,
                spectral_normalize: true,
            },
        );
        assert!(matches!(r, Err(Error::DivideByZero(_))));
    }

    fn docs(raw: &[&str]) -> Vec<Vec<String>> {
        raw.iter().map(|d| tokenize(d)).collect()
    }

    #[test]
    fn contingency_counts() {
        let t = build_contingency(&docs(&["a b", "b c"]), CorpusFilters::none()).unwrap();
        assert_eq!(t.col_labels, vec!["a", "b", "c"]);
        assert_eq!(t.counts, DMatrix::from_row_slice(2, 3, &[1., 1., 0., 0., 1., 1.]));

        let f = CorpusFilters {
            min_doc_freq: 2,
            ..CorpusFilters::none()
        };
        let t = build_contingency(&docs(&["a b", "b c"]), f).unwrap();
        assert_eq!(t.col_labels, vec!["b"]);
        assert_eq!(t.counts, DMatrix::from_row_slice(2, 1, &[1., 1.]));
    }

    #[test]
    fn contingency_default_filters() {
        let corpus = docs(&[
            "the quantum state quantum",
            "the quantum register",
            "classical register noise",
            "classical noise model",
            "model state",
        ]);
        let t = build_contingency(&corpus, CorpusFilters::default()).unwrap();
        // "the" is a stop word; every other word appears in exactly 2 of 5 docs.
        assert_eq!(
            t.col_labels,
            vec!["classical", "model", "noise", "quantum", "register", "state"]
        );
        let q = t.col_labels.iter().position(|w| w == "quantum").unwrap();
        assert_eq!(t.counts[(0, q)], 2.0);

        let all_out = build_contingency(&docs(&["x", "y"]), CorpusFilters::default());
        assert!(matches!(all_out, Err(Error::EmptyVocabulary)));
    }

    #[test]
    fn stopword_list_is_loaded() {
        let words: Vec<_> = english_stopwords().collect();
        assert!(words.len() > 300);
        assert!(words.contains(&"the"));
    }

    #[test]
    fn ca_matrix_examples() {
        let t = ContingencyTable::from_counts(DMatrix::from_row_slice(2, 2, &[2., 0., 0., 2.])).unwrap();
        let ca = build_ca_matrix(&t).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert!((ca.matrix.values() - expect).norm() < 1e-14);

        let r = [1.0, 2.0, 3.0];
        let c = [4.0, 1.0];
        let indep = DMatrix::from_fn(3, 2, |i, j| r[i] * c[j]);
        let ca = build_ca_matrix(&ContingencyTable::from_counts(indep).unwrap()).unwrap();
        assert!(ca.matrix.frobenius() < 1e-10);
    }

    #[test]
    fn ca_drops_zero_rows_and_reports() {
        let t = ContingencyTable::from_counts(DMatrix::from_row_slice(
            3,
            2,
            &[1., 2., 0., 0., 3., 1.],
        ))
        .unwrap();
        let ca = build_ca_matrix(&t).unwrap();
        assert_eq!(ca.dropped_rows, vec!["r1".to_string()]);
        assert_eq!(ca.matrix.shape(), (2, 2));
        let zero = ContingencyTable::from_counts(DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(build_ca_matrix(&zero), Err(Error::DegenerateTable(_))));
    }

    #[test]
    fn smoothing_keeps_sparse_rows() {
        let t = ContingencyTable::from_counts(DMatrix::from_row_slice(2, 2, &[1., 0., 0., 0.])).unwrap();
        let ca = build_ca_matrix_smoothed(&t, 0.5).unwrap();
        assert!(ca.dropped_rows.is_empty());
        assert_eq!(ca.matrix.shape(), (2, 2));
    }

    #[test]
    fn negative_counts_rejected() {
        let r = ContingencyTable::from_counts(DMatrix::from_row_slice(1, 2, &[1., -1.]));
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
