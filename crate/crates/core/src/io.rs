//! File formats for matrices, graphs, decompositions and evaluation reports.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! file reads back to the exact values that were written.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::covariance::{MatrixKind, SymmetricMatrix};
use crate::dataio::read_numeric_csv;
use crate::eval::{FillPoint, FitReport, WidthPoint};
use crate::graph::{CliqueDecomposition, GraphRecord, UndirectedGraph};
use crate::{Error, Result};

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv_writer(path)?;
    let err = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

fn default_labels(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("x{i}")).collect()
}

fn check_labels(labels: &[String], p: usize) -> Result<()> {
    if labels.len() != p {
        return Err(Error::invalid(format!("{} labels for {p} variables", labels.len())));
    }
    Ok(())
}

/// Dense CSV with a header row of labels.
pub fn write_matrix_csv(m: &SymmetricMatrix, labels: &[String], path: impl AsRef<Path>) -> Result<()> {
    check_labels(labels, m.dim())?;
    let header: Vec<&str> = labels.iter().map(String::as_str).collect();
    let v = m.values();
    write_rows(
        path.as_ref(),
        &header,
        v.row_iter().map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>()),
    )
}

pub fn read_matrix_csv(path: impl AsRef<Path>, kind: MatrixKind) -> Result<(SymmetricMatrix, Vec<String>)> {
    let (header, values) = read_numeric_csv(path.as_ref(), true)?;
    let labels = header.expect("header requested");
    if values.nrows() != values.ncols() {
        return Err(Error::invalid(format!(
            "{}: matrix is {}x{}",
            path.as_ref().display(),
            values.nrows(),
            values.ncols()
        )));
    }
    Ok((SymmetricMatrix::new(values, kind)?, labels))
}

/// JSON form of a matrix with its metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixEnvelope {
    pub kind: MatrixKind,
    pub labels: Vec<String>,
    /// Regularization that produced the matrix, if any.
    pub lambda: Option<f64>,
    pub spd: bool,
    pub values: Vec<Vec<f64>>,
}

impl MatrixEnvelope {
    pub fn new(m: &SymmetricMatrix, labels: Option<&[String]>, lambda: Option<f64>) -> Result<Self> {
        let labels = labels.map(<[String]>::to_vec).unwrap_or_else(|| default_labels(m.dim()));
        check_labels(&labels, m.dim())?;
        Ok(Self {
            kind: m.kind(),
            labels,
            lambda,
            spd: m.is_spd(),
            values: m.values().row_iter().map(|r| r.iter().copied().collect()).collect(),
        })
    }

    pub fn to_matrix(&self) -> Result<SymmetricMatrix> {
        let p = self.values.len();
        check_labels(&self.labels, p)?;
        if let Some(r) = self.values.iter().position(|r| r.len() != p) {
            return Err(Error::invalid(format!("row {r} of a {p}x{p} matrix has {} entries", self.values[r].len())));
        }
        let flat: Vec<f64> = self.values.iter().flatten().copied().collect();
        SymmetricMatrix::new(DMatrix::from_row_slice(p, p, &flat), self.kind)
    }
}

pub fn write_matrix_json(
    m: &SymmetricMatrix,
    labels: Option<&[String]>,
    lambda: Option<f64>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_json(&MatrixEnvelope::new(m, labels, lambda)?, path)
}

pub fn read_matrix_json(path: impl AsRef<Path>) -> Result<MatrixEnvelope> {
    let env: MatrixEnvelope = read_json(path)?;
    env.to_matrix()?;
    Ok(env)
}

/// Edge list with header `i,j`, 0-based, one edge per row with `i < j`.
pub fn write_edge_list(g: &UndirectedGraph, path: impl AsRef<Path>) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["i", "j"],
        g.edges().into_iter().map(|(i, j)| [i.to_string(), j.to_string()]),
    )
}

/// Reads an edge list. A non-numeric first row is taken as a header. The node
/// count defaults to one more than the largest index.
pub fn read_edge_list(path: impl AsRef<Path>, p: Option<usize>) -> Result<UndirectedGraph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let parse_err = |row: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };
    let mut edges = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| parse_err(line, 0, e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != 2 {
            return Err(parse_err(line, 1, format!("expected 2 fields, found {}", record.len())));
        }
        let parsed: Vec<std::result::Result<usize, _>> = record.iter().map(str::parse::<usize>).collect();
        if idx == 0 && parsed.iter().all(|r| r.is_err()) {
            continue;
        }
        let mut pair = [0usize; 2];
        for (c, r) in parsed.into_iter().enumerate() {
            pair[c] = r.map_err(|_| parse_err(line, c + 1, format!("not a node index: {:?}", &record[c])))?;
        }
        if pair[0] == pair[1] {
            return Err(parse_err(line, 2, format!("self-loop on node {}", pair[0])));
        }
        edges.push((pair[0], pair[1]));
    }
    let inferred = edges.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0);
    let p = p.unwrap_or(inferred);
    if inferred > p {
        return Err(Error::invalid(format!(
            "{}: node index {} out of range for {p} nodes",
            path.display(),
            inferred - 1
        )));
    }
    UndirectedGraph::from_edges(p, edges)
}

pub fn write_graph_json(g: &UndirectedGraph, path: impl AsRef<Path>) -> Result<()> {
    write_json(&g.to_record(), path)
}

pub fn read_graph_json(path: impl AsRef<Path>) -> Result<UndirectedGraph> {
    UndirectedGraph::from_record(&read_json::<GraphRecord>(path)?)
}

pub fn write_decomposition_json(d: &CliqueDecomposition, path: impl AsRef<Path>) -> Result<()> {
    write_json(d, path)
}

/// Reads and re-validates a decomposition.
pub fn read_decomposition_json(path: impl AsRef<Path>) -> Result<CliqueDecomposition> {
    read_json(path)
}

pub fn write_reports_json(reports: &[FitReport], path: impl AsRef<Path>) -> Result<()> {
    write_json(reports, path)
}

pub fn read_reports_json(path: impl AsRef<Path>) -> Result<Vec<FitReport>> {
    read_json(path)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const REPORT_CSV_HEADER: [&str; 10] = [
    "method",
    "parameter",
    "fold",
    "subject",
    "status",
    "loglik",
    "mean_loglik",
    "dof",
    "max_clique_width",
    "filling_factor",
];

/// One row per fold and estimator; failed folds carry status `failed` and an
/// empty log-likelihood.
pub fn write_reports_csv(reports: &[FitReport], path: impl AsRef<Path>) -> Result<()> {
    let mut rows = Vec::new();
    for r in reports {
        let shared = |fold: usize, subject: &str, status: &str, ll: String| {
            vec![
                r.estimator.method().name().to_string(),
                opt(r.estimator.parameter()),
                fold.to_string(),
                subject.to_string(),
                status.to_string(),
                ll,
                r.mean_loglik.to_string(),
                opt(r.dof),
                opt(r.graph_metrics.as_ref().map(|m| m.max_clique_width)),
                opt(r.graph_metrics.as_ref().map(|m| m.filling_factor)),
            ]
        };
        let mut fold_rows: Vec<(usize, Vec<String>)> = r
            .failed_folds
            .iter()
            .map(|f| (f.fold, shared(f.fold, &f.subject, "failed", String::new())))
            .collect();
        let mut scored = 0;
        for fold in 0.. {
            if scored == r.per_fold_loglik.len() {
                break;
            }
            if r.failed_folds.iter().any(|f| f.fold == fold) {
                continue;
            }
            fold_rows.push((
                fold,
                shared(fold, &r.fold_subjects[scored], "ok", r.per_fold_loglik[scored].to_string()),
            ));
            scored += 1;
        }
        fold_rows.sort_by_key(|(f, _)| *f);
        rows.extend(fold_rows.into_iter().map(|(_, row)| row));
    }
    write_rows(path.as_ref(), &REPORT_CSV_HEADER, rows)
}

pub fn write_width_curve(points: &[WidthPoint], path: impl AsRef<Path>) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["parameter", "max_clique_width_fraction", "mean_loglik"],
        points.iter().map(|p| {
            [
                opt(p.parameter),
                p.max_clique_width_fraction.to_string(),
                p.mean_loglik.to_string(),
            ]
        }),
    )
}

pub fn write_fill_curve(points: &[FillPoint], path: impl AsRef<Path>) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["parameter", "filling_factor", "mean_loglik", "dof_adjusted_baseline"],
        points.iter().map(|p| {
            [
                opt(p.parameter),
                p.filling_factor.to_string(),
                p.mean_loglik.to_string(),
                p.dof_adjusted_baseline.to_string(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{cross_validate, Estimator};
    use crate::graph::clique_walk;
    use crate::synth;

    fn labels(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("roi{i}")).collect()
    }

    #[test]
    fn matrix_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let m = SymmetricMatrix::new(fastdecomp_testkit::random_spd(4, 0.1, 3), MatrixKind::Precision).unwrap();
        let csv = dir.path().join("m.csv");
        write_matrix_csv(&m, &labels(4), &csv).unwrap();
        let (back, l) = read_matrix_csv(&csv, MatrixKind::Precision).unwrap();
        assert_eq!(back, m);
        assert_eq!(l, labels(4));

        let json = dir.path().join("m.json");
        write_matrix_json(&m, Some(&labels(4)), Some(0.25), &json).unwrap();
        let env = read_matrix_json(&json).unwrap();
        assert_eq!(env.lambda, Some(0.25));
        assert!(env.spd);
        assert_eq!(env.to_matrix().unwrap(), m);
        assert!(write_matrix_csv(&m, &labels(3), dir.path().join("x.csv")).is_err());
    }

    #[test]
    fn graph_and_decomposition_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = synth::watts_strogatz(12, 4, 0.3, 1).unwrap();
        let path = dir.path().join("g.csv");
        write_edge_list(&g, &path).unwrap();
        assert_eq!(read_edge_list(&path, Some(12)).unwrap(), g);

        let g = g.with_labels(labels(12)).unwrap();
        let path = dir.path().join("g.json");
        write_graph_json(&g, &path).unwrap();
        assert_eq!(read_graph_json(&path).unwrap(), g);

        let walk = clique_walk(&g, &(0..12).collect::<Vec<_>>()).unwrap();
        let path = dir.path().join("d.json");
        write_decomposition_json(&walk.decomposition, &path).unwrap();
        assert_eq!(read_decomposition_json(&path).unwrap(), walk.decomposition);
    }

    #[test]
    fn edge_list_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "0,1\n1,2\n0,2\n").unwrap();
        let g = read_edge_list(&path, None).unwrap();
        assert_eq!((g.p(), g.edge_count()), (3, 3));
        std::fs::write(&path, "i,j\n0,1\n1,x\n").unwrap();
        assert!(matches!(read_edge_list(&path, None), Err(Error::Parse { row: 3, column: 2, .. })));
        std::fs::write(&path, "0,5\n").unwrap();
        assert!(read_edge_list(&path, Some(3)).is_err());
    }

    #[test]
    fn reports_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let k = SymmetricMatrix::new(DMatrix::identity(3, 3), MatrixKind::Precision).unwrap();
        let subjects = synth::sample_subjects(&k, 50, 2, 1).unwrap();
        let reports = cross_validate(&subjects, &[Estimator::LedoitWolf, Estimator::FastDecomp { beta: 1.0 }], None).unwrap();
        let path = dir.path().join("r.json");
        write_reports_json(&reports, &path).unwrap();
        let back = read_reports_json(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].per_fold_loglik, reports[1].per_fold_loglik);
        assert_eq!(back[1].estimator, reports[1].estimator);

        let path = dir.path().join("r.csv");
        write_reports_csv(&reports, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(3).unwrap().starts_with("fast_decomp,1,0,subject00,ok,"));
    }
}
