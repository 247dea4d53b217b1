//! Loading, validating and preprocessing multivariate time series.
//!
//! A [`TimeSeriesDataset`] stores one time point per row and one variable per
//! column. Preprocessing follows a fixed order: polynomial detrending, then
//! band-pass filtering, then (optionally, via [`regress_confounds`]) confound
//! removal, then variance normalization.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Columns whose variance falls below this are zeroed instead of rescaled.
pub const ZERO_VARIANCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    samples: DMatrix<f64>,
    labels: Vec<String>,
    subject_id: String,
}

impl TimeSeriesDataset {
    /// Builds a dataset after checking `n >= 2`, `p >= 1`, finiteness and
    /// label uniqueness.
    pub fn new(
        samples: DMatrix<f64>,
        labels: Vec<String>,
        subject_id: impl Into<String>,
    ) -> Result<Self> {
        if samples.nrows() < 2 {
            return Err(Error::InsufficientSamples(format!(
                "n >= 2 required, got {}",
                samples.nrows()
            )));
        }
        if samples.ncols() == 0 {
            return Err(Error::invalid("p >= 1 required"));
        }
        if labels.len() != samples.ncols() {
            return Err(Error::invalid(format!(
                "{} labels for {} columns",
                labels.len(),
                samples.ncols()
            )));
        }
        check_unique(&labels)?;
        for c in 0..samples.ncols() {
            for r in 0..samples.nrows() {
                if !samples[(r, c)].is_finite() {
                    return Err(Error::invalid(format!(
                        "non-finite value at sample {r}, variable {}",
                        labels[c]
                    )));
                }
            }
        }
        Ok(Self {
            samples,
            labels,
            subject_id: subject_id.into(),
        })
    }

    /// Dataset with generated labels `x0, x1, ...`.
    pub fn from_samples(samples: DMatrix<f64>, subject_id: impl Into<String>) -> Result<Self> {
        let labels = (0..samples.ncols()).map(|i| format!("x{i}")).collect();
        Self::new(samples, labels, subject_id)
    }

    pub fn n(&self) -> usize {
        self.samples.nrows()
    }

    pub fn p(&self) -> usize {
        self.samples.ncols()
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn with_subject_id(mut self, id: impl Into<String>) -> Self {
        self.subject_id = id.into();
        self
    }

    /// Contiguous block of rows `start..end`.
    pub fn rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n() {
            return Err(Error::invalid(format!(
                "row range {start}..{end} outside 0..{}",
                self.n()
            )));
        }
        let block = self.samples.rows(start, end - start).into_owned();
        Self::new(block, self.labels.clone(), self.subject_id.clone())
    }

    pub(crate) fn new_unchecked(samples: DMatrix<f64>, labels: Vec<String>, subject_id: &str) -> Self {
        Self {
            samples,
            labels,
            subject_id: subject_id.to_string(),
        }
    }

    // Internal constructor for transforms that keep the shape and labels.
    fn replace_samples(&self, samples: DMatrix<f64>) -> Self {
        debug_assert_eq!(samples.shape(), self.samples.shape());
        Self {
            samples,
            labels: self.labels.clone(),
            subject_id: self.subject_id.clone(),
        }
    }
}

fn check_unique(labels: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for (i, l) in labels.iter().enumerate() {
        if !seen.insert(l.as_str()) {
            return Err(Error::invalid(format!(
                "duplicate label {l:?} at column {}",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Reads a CSV file: one header row of labels, then one row per time point.
/// The subject id defaults to the file stem.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let (header, body) = read_numeric_csv(path, true)?;
    let labels = header.expect("header requested");
    if let Some((col, dup)) = first_duplicate(&labels) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 1,
            column: col + 1,
            message: format!("duplicate label {dup:?}"),
        });
    }
    if body.nrows() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "{}: n >= 2 required, found {} data rows",
            path.display(),
            body.nrows()
        )));
    }
    let subject = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    TimeSeriesDataset::new(body, labels, subject)
}

/// Reads an `n × q` numeric matrix, e.g. confound time courses.
pub fn load_matrix(path: impl AsRef<Path>, has_header: bool) -> Result<DMatrix<f64>> {
    Ok(read_numeric_csv(path.as_ref(), has_header)?.1)
}

fn first_duplicate(labels: &[String]) -> Option<(usize, String)> {
    let mut seen = HashSet::new();
    labels
        .iter()
        .enumerate()
        .find(|(_, l)| !seen.insert(l.as_str()))
        .map(|(i, l)| (i, l.clone()))
}

pub(crate) fn read_numeric_csv(path: &Path, has_header: bool) -> Result<(Option<Vec<String>>, DMatrix<f64>)> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let parse_err = |row: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };

    let mut header = None;
    let mut width = None;
    let mut values = Vec::new();
    let mut n_rows = 0;
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| parse_err(line, 0, e.to_string()))?;
        if has_header && idx == 0 {
            let labels: Vec<String> = record.iter().map(str::to_string).collect();
            width = Some(labels.len());
            header = Some(labels);
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(parse_err(
                line,
                record.len().min(expected) + 1,
                format!("ragged row: {} fields, expected {expected}", record.len()),
            ));
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, col + 1, format!("non-numeric cell {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(line, col + 1, format!("non-finite cell {cell:?}")));
            }
            values.push(v);
        }
        n_rows += 1;
    }
    let width = width.unwrap_or(0);
    if width == 0 {
        return Err(parse_err(1, 1, "empty file".into()));
    }
    Ok((header, DMatrix::from_row_slice(n_rows, width, &values)))
}

/// Writes `dataset` in the same CSV layout [`load_dataset`] reads.
pub fn save_dataset(dataset: &TimeSeriesDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(dataset.labels()).map_err(io_err)?;
    for r in 0..dataset.n() {
        let row: Vec<String> = dataset
            .samples()
            .row(r)
            .iter()
            .map(|v| v.to_string())
            .collect();
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Polynomial detrending order; `None` skips detrending.
    pub detrend_order: Option<usize>,
    /// Pass band `(low, high)` in cycles per sample, `0 <= low < high <= 0.5`.
    pub band: Option<(f64, f64)>,
    /// Rescale every column to unit sample variance.
    pub standardize: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            detrend_order: Some(1),
            band: None,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub dataset: TimeSeriesDataset,
    /// Column indices left at zero because their variance vanished.
    pub zero_variance: Vec<usize>,
}

/// Detrend, band-pass and variance-normalize each column.
pub fn preprocess(data: &TimeSeriesDataset, config: &PreprocessConfig) -> Result<Preprocessed> {
    let mut x = data.samples().clone();
    if let Some(order) = config.detrend_order {
        detrend_in_place(&mut x, order)?;
    }
    if let Some((low, high)) = config.band {
        band_pass_in_place(&mut x, low, high)?;
    }
    let mut zero_variance = Vec::new();
    if config.standardize {
        zero_variance = standardize_in_place(&mut x);
    }
    Ok(Preprocessed {
        dataset: data.replace_samples(x),
        zero_variance,
    })
}

/// Unit-variance rescaling (divisor `n - 1`); returns flagged columns.
pub fn standardize(data: &TimeSeriesDataset) -> Preprocessed {
    let mut x = data.samples().clone();
    let zero_variance = standardize_in_place(&mut x);
    Preprocessed {
        dataset: data.replace_samples(x),
        zero_variance,
    }
}

fn detrend_in_place(x: &mut DMatrix<f64>, order: usize) -> Result<()> {
    let n = x.nrows();
    if n < order + 2 {
        return Err(Error::InsufficientSamples(format!(
            "detrend order {order} needs at least {} samples, got {n}",
            order + 2
        )));
    }
    // Powers of time rescaled to [-1, 1] keep the basis well conditioned.
    let basis = DMatrix::from_fn(n, order + 1, |t, k| {
        let s = if n > 1 {
            2.0 * t as f64 / (n - 1) as f64 - 1.0
        } else {
            0.0
        };
        s.powi(k as i32)
    });
    let q = basis.qr().q();
    let fitted = &q * (q.transpose() * &*x);
    *x -= fitted;
    Ok(())
}

/// Frequency (cycles/sample) of DCT-II atom `k` for series length `n`.
fn dct_frequency(k: usize, n: usize) -> f64 {
    k as f64 / (2.0 * n as f64)
}

/// DCT-II atom `cos(pi k (2t + 1) / 2n)`.
pub fn dct_atom(k: usize, n: usize) -> Vec<f64> {
    (0..n)
        .map(|t| (PI * k as f64 * (2 * t + 1) as f64 / (2 * n) as f64).cos())
        .collect()
}

/// Indices of DCT atoms whose frequency lies outside `[low, high]`.
pub fn excluded_atoms(n: usize, low: f64, high: f64) -> Vec<usize> {
    (0..n)
        .filter(|&k| {
            let f = dct_frequency(k, n);
            f < low || f > high
        })
        .collect()
}

fn band_pass_in_place(x: &mut DMatrix<f64>, low: f64, high: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&low) || !(0.0..=0.5).contains(&high) || low >= high {
        return Err(Error::invalid(format!(
            "band edges must satisfy 0 <= low < high <= 0.5, got [{low}, {high}]"
        )));
    }
    let n = x.nrows();
    let excluded = excluded_atoms(n, low, high);
    let kept: Vec<usize> = (0..n).filter(|k| !excluded.contains(k)).collect();
    // Atoms are orthogonal, so projecting onto whichever set is smaller gives
    // the same result.
    let reconstruct = kept.len() < excluded.len();
    let atoms = if reconstruct { &kept } else { &excluded };
    let mut projection = DMatrix::zeros(n, x.ncols());
    for &k in atoms {
        let phi = dct_atom(k, n);
        let norm2 = if k == 0 { n as f64 } else { n as f64 / 2.0 };
        for c in 0..x.ncols() {
            let coef = (0..n).map(|t| phi[t] * x[(t, c)]).sum::<f64>() / norm2;
            for t in 0..n {
                projection[(t, c)] += coef * phi[t];
            }
        }
    }
    if reconstruct {
        *x = projection;
    } else {
        *x -= projection;
    }
    Ok(())
}

fn standardize_in_place(x: &mut DMatrix<f64>) -> Vec<usize> {
    let n = x.nrows() as f64;
    let mut flagged = Vec::new();
    for (c, mut col) in x.column_iter_mut().enumerate() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let var = col.norm_squared() / (n - 1.0);
        if var < ZERO_VARIANCE_TOL {
            col.fill(0.0);
            flagged.push(c);
        } else {
            col /= var.sqrt();
        }
    }
    flagged
}

/// Replaces every column by its least-squares residual against the confound
/// columns plus an intercept. Rank-deficient confounds are handled through a
/// truncated SVD, so collinear confounds are not an error.
pub fn regress_confounds(
    data: &TimeSeriesDataset,
    confounds: &DMatrix<f64>,
) -> Result<TimeSeriesDataset> {
    let n = data.n();
    if confounds.nrows() != n {
        return Err(Error::invalid(format!(
            "confounds have {} rows, dataset has {n}",
            confounds.nrows()
        )));
    }
    if confounds.ncols() == 0 {
        return Err(Error::invalid("at least one confound column required"));
    }
    let q = confounds.ncols();
    let design = DMatrix::from_fn(n, q + 1, |r, c| if c == 0 { 1.0 } else { confounds[(r, c - 1)] });
    let svd = design.svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    let tol = smax * n.max(q + 1) as f64 * f64::EPSILON;
    let rank_cols: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > tol)
        .map(|(i, _)| i)
        .collect();
    let basis = crate::linalg::select_columns(&u, &rank_cols);
    let x = data.samples();
    let residual = x - &basis * (basis.transpose() * x);
    Ok(data.replace_samples(residual))
}

/// Stacks datasets in list order. All inputs must carry identical labels in
/// identical order.
pub fn concatenate(datasets: &[TimeSeriesDataset]) -> Result<TimeSeriesDataset> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::invalid("cannot concatenate an empty list"))?;
    for d in &datasets[1..] {
        if d.labels() != first.labels() {
            return Err(Error::invalid(format!(
                "labels of subject {:?} differ from subject {:?}",
                d.subject_id(),
                first.subject_id()
            )));
        }
    }
    let n: usize = datasets.iter().map(TimeSeriesDataset::n).sum();
    let p = first.p();
    let mut samples = DMatrix::zeros(n, p);
    let mut offset = 0;
    for d in datasets {
        samples.rows_mut(offset, d.n()).copy_from(d.samples());
        offset += d.n();
    }
    let id = datasets
        .iter()
        .map(TimeSeriesDataset::subject_id)
        .collect::<Vec<_>>()
        .join("+");
    TimeSeriesDataset::new(samples, first.labels().to_vec(), id)
}
