//! Likelihood scoring, degrees of freedom and leave-one-subject-out
//! cross-validation.
//!
//! Log-likelihoods are per sample with the Gaussian normalization constant
//! dropped: `½ (log det K − tr(K Σ̂))`. Only differences between models are
//! meaningful.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::covariance::{empirical_covariance, ledoit_wolf, to_correlation, MatrixKind, SymmetricMatrix};
use crate::dataio::{concatenate, TimeSeriesDataset};
use crate::fastdecomp::fast_decomp;
use crate::graph::{clique_walk, metrics, rcm_ordering, CliqueDecomposition, GraphMetrics, UndirectedGraph};
use crate::linalg;
use crate::pcdag::{fit_precision_on_graph, pc_skeleton};
use crate::sparse::{graphical_lasso, GlassoOptions};
use crate::{Error, Result};

/// `½ (log det K − tr(K Σ̂))`.
pub fn log_likelihood(precision: &SymmetricMatrix, test_cov: &SymmetricMatrix) -> Result<f64> {
    loglik_raw(precision.values(), test_cov.values())
}

fn loglik_raw(k: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<f64> {
    if k.shape() != s.shape() {
        return Err(Error::invalid(format!(
            "precision is {}x{}, covariance {}x{}",
            k.nrows(),
            k.ncols(),
            s.nrows(),
            s.ncols()
        )));
    }
    let logdet = linalg::log_det_spd(k)
        .ok_or_else(|| Error::NotPositiveDefinite("precision for likelihood".into()))?;
    Ok(0.5 * (logdet - k.component_mul(s).sum()))
}

/// Per-clique and per-separator precisions of a decomposable model, in the
/// order of the decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct CliqueModel {
    pub cliques: Vec<DMatrix<f64>>,
    pub separators: Vec<DMatrix<f64>>,
}

/// Marginal precisions `((K⁻¹)_CC)⁻¹` of `precision` on every clique and
/// separator of `d`.
pub fn clique_models(precision: &SymmetricMatrix, d: &CliqueDecomposition) -> Result<CliqueModel> {
    d.validate(precision.dim())?;
    let w = linalg::spd_inverse(precision.values(), "precision")?;
    let block = |idx: &Vec<usize>| {
        if idx.is_empty() {
            return Ok(DMatrix::zeros(0, 0));
        }
        linalg::spd_inverse(&linalg::principal(&w, idx), "marginal covariance")
    };
    Ok(CliqueModel {
        cliques: d.cliques().iter().map(block).collect::<Result<_>>()?,
        separators: d.separators().iter().map(block).collect::<Result<_>>()?,
    })
}

/// Sum of clique log-likelihoods minus separator log-likelihoods, each term
/// scored against the matching block of `test_cov`.
pub fn decomposable_log_likelihood(
    test_cov: &SymmetricMatrix,
    d: &CliqueDecomposition,
    model: &CliqueModel,
) -> Result<f64> {
    d.validate(test_cov.dim())?;
    if model.cliques.len() != d.cliques().len() || model.separators.len() != d.separators().len() {
        return Err(Error::invalid(format!(
            "model has {} cliques and {} separators, decomposition {} and {}",
            model.cliques.len(),
            model.separators.len(),
            d.cliques().len(),
            d.separators().len()
        )));
    }
    let term = |idx: &[usize], k: &DMatrix<f64>| {
        if idx.is_empty() {
            return Ok(0.0);
        }
        loglik_raw(k, &linalg::principal(test_cov.values(), idx))
    };
    let mut total = 0.0;
    for (c, k) in d.cliques().iter().zip(&model.cliques) {
        total += term(c, k)?;
    }
    for (s, k) in d.separators().iter().zip(&model.separators) {
        total -= term(s, k)?;
    }
    Ok(total)
}

/// Free parameters of a precision with zeros off `g`: `p + |E|`.
pub fn degrees_of_freedom(g: &UndirectedGraph) -> usize {
    g.p() + g.edge_count()
}

/// `(mean_a − mean_b) · n_test − ½ (dof_a − dof_b)`: the total likelihood
/// gain of `a` over `b` beyond what its extra parameters buy under the null.
pub fn dof_adjusted_delta(a: &FitReport, b: &FitReport, n_test: usize) -> Result<f64> {
    if a.fold_subjects != b.fold_subjects {
        return Err(Error::invalid("reports were scored on different folds"));
    }
    let (Some(da), Some(db)) = (a.dof, b.dof) else {
        return Err(Error::invalid("degrees of freedom unavailable"));
    };
    Ok((a.mean_loglik - b.mean_loglik) * n_test as f64 - 0.5 * (da as f64 - db as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LedoitWolf,
    Shrinkage,
    GraphicalLasso,
    FastDecomp,
    PcDag,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::LedoitWolf,
        Method::Shrinkage,
        Method::GraphicalLasso,
        Method::FastDecomp,
        Method::PcDag,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::LedoitWolf => "ledoit_wolf",
            Method::Shrinkage => "shrinkage",
            Method::GraphicalLasso => "graphical_lasso",
            Method::FastDecomp => "fast_decomp",
            Method::PcDag => "pc_dag",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let key = s.replace('-', "_").to_ascii_lowercase();
        Self::ALL.into_iter().find(|m| {
            m.name() == key
                || matches!(
                    (m, key.as_str()),
                    (Method::LedoitWolf, "lw")
                        | (Method::GraphicalLasso, "glasso")
                        | (Method::FastDecomp, "fastdecomp")
                        | (Method::PcDag, "pcdag" | "pc")
                )
        })
    }

    /// Hyperparameter swept by the method, if any.
    pub fn parameter_name(self) -> Option<&'static str> {
        match self {
            Method::LedoitWolf => None,
            Method::Shrinkage | Method::GraphicalLasso => Some("lambda"),
            Method::FastDecomp => Some("beta"),
            Method::PcDag => Some("alpha"),
        }
    }

    /// Twenty log-spaced penalties on `[1e-3, 1]`, twenty evenly spaced
    /// thresholds on `[0.5, 6]` for the decomposable fit, and log-spaced
    /// levels on `[1e-4, 0.2]` for the PC tests.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            Method::LedoitWolf => vec![],
            Method::Shrinkage | Method::GraphicalLasso => log_grid(1e-3, 1.0, 20),
            Method::FastDecomp => (0..20).map(|i| 0.5 + 5.5 * i as f64 / 19.0).collect(),
            Method::PcDag => log_grid(1e-4, 0.2, 10),
        }
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Settings shared by every grid point of a method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorSettings {
    pub glasso_tol: Option<f64>,
    pub glasso_max_iter: usize,
    pub pc_max_condition_size: usize,
    pub ips_tol: f64,
    pub ips_max_iter: usize,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            glasso_tol: None,
            glasso_max_iter: GlassoOptions::default().max_iter,
            pc_max_condition_size: 3,
            ips_tol: 1e-8,
            ips_max_iter: 1000,
        }
    }
}

/// A fully specified estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Estimator {
    LedoitWolf,
    /// `((S + λ diag(S)) / (1 + λ))⁻¹`, which keeps the variances of `S`.
    Shrinkage { lambda: f64 },
    GraphicalLasso { lambda: f64, tol: Option<f64>, max_iter: usize },
    FastDecomp { beta: f64 },
    PcDag { alpha: f64, max_condition_size: usize, tol: f64, max_iter: usize },
}

impl Estimator {
    /// `method` at hyperparameter `value` (ignored for Ledoit-Wolf).
    pub fn new(method: Method, value: f64, settings: &EstimatorSettings) -> Self {
        match method {
            Method::LedoitWolf => Estimator::LedoitWolf,
            Method::Shrinkage => Estimator::Shrinkage { lambda: value },
            Method::GraphicalLasso => Estimator::GraphicalLasso {
                lambda: value,
                tol: settings.glasso_tol,
                max_iter: settings.glasso_max_iter,
            },
            Method::FastDecomp => Estimator::FastDecomp { beta: value },
            Method::PcDag => Estimator::PcDag {
                alpha: value,
                max_condition_size: settings.pc_max_condition_size,
                tol: settings.ips_tol,
                max_iter: settings.ips_max_iter,
            },
        }
    }

    /// One estimator per grid value; Ledoit-Wolf has a single point.
    pub fn sweep(method: Method, grid: &[f64], settings: &EstimatorSettings) -> Vec<Self> {
        if method == Method::LedoitWolf {
            return vec![Estimator::LedoitWolf];
        }
        grid.iter().map(|&v| Self::new(method, v, settings)).collect()
    }

    pub fn method(&self) -> Method {
        match self {
            Estimator::LedoitWolf => Method::LedoitWolf,
            Estimator::Shrinkage { .. } => Method::Shrinkage,
            Estimator::GraphicalLasso { .. } => Method::GraphicalLasso,
            Estimator::FastDecomp { .. } => Method::FastDecomp,
            Estimator::PcDag { .. } => Method::PcDag,
        }
    }

    pub fn parameter(&self) -> Option<f64> {
        match *self {
            Estimator::LedoitWolf => None,
            Estimator::Shrinkage { lambda } | Estimator::GraphicalLasso { lambda, .. } => Some(lambda),
            Estimator::FastDecomp { beta } => Some(beta),
            Estimator::PcDag { alpha, .. } => Some(alpha),
        }
    }
}

/// A fitted model. Dense and non-chordal supports carry the decomposition of
/// their RCM clique-walk completion, which is what the clique width refers to.
#[derive(Debug, Clone)]
pub struct Fit {
    pub precision: SymmetricMatrix,
    pub support: UndirectedGraph,
    pub decomposition: CliqueDecomposition,
    pub converged: bool,
}

/// Nonzero pattern of the off-diagonal entries.
pub fn support_graph(precision: &SymmetricMatrix) -> UndirectedGraph {
    let p = precision.dim();
    let edges = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j)));
    UndirectedGraph::from_edges(p, edges.filter(|&(i, j)| precision.get(i, j) != 0.0)).expect("in range")
}

fn walk_decomposition(g: &UndirectedGraph) -> Result<CliqueDecomposition> {
    Ok(clique_walk(g, &rcm_ordering(g).ordering)?.decomposition)
}

/// Fits `estimator` to `data`.
pub fn fit(estimator: &Estimator, data: &TimeSeriesDataset) -> Result<Fit> {
    let (precision, converged, decomposition) = match *estimator {
        Estimator::LedoitWolf => (ledoit_wolf(data).covariance.inverse()?, true, None),
        Estimator::Shrinkage { lambda } => {
            if !(lambda >= 0.0) || !lambda.is_finite() {
                return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
            }
            let s = empirical_covariance(data).into_values();
            let shrunk = DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| {
                let target = if i == j { lambda * s[(i, i)] } else { 0.0 };
                (s[(i, j)] + target) / (1.0 + lambda)
            });
            let k = linalg::spd_inverse(&shrunk, "")
                .map_err(|_| Error::Singular("shrunk covariance; increase lambda".into()))?;
            (SymmetricMatrix::new(k, MatrixKind::Precision)?, true, None)
        }
        Estimator::GraphicalLasso { lambda, tol, max_iter } => {
            let r = graphical_lasso(&empirical_covariance(data), lambda, GlassoOptions { tol, max_iter })?;
            (r.precision, r.converged, None)
        }
        Estimator::FastDecomp { beta } => {
            let r = fast_decomp(data, beta)?;
            (r.precision, true, Some(r.decomposition))
        }
        Estimator::PcDag {
            alpha,
            max_condition_size,
            tol,
            max_iter,
        } => {
            let pc = pc_skeleton(data, alpha, max_condition_size)?;
            let r = fit_precision_on_graph(&empirical_covariance(data), &pc.moral_graph, tol, max_iter)?;
            (r.precision, r.converged, None)
        }
    };
    let support = support_graph(&precision);
    let decomposition = match decomposition {
        Some(d) => d,
        None => walk_decomposition(&support)?,
    };
    Ok(Fit {
        precision,
        support,
        decomposition,
        converged,
    })
}

/// Centers and scales every column to unit population variance, so the
/// empirical covariance of the result is the correlation matrix.
pub fn standardize_population(data: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
    let mut x = linalg::center_columns(data.samples());
    let n = x.nrows() as f64;
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let sd = (col.norm_squared() / n).sqrt();
        if !(sd > 0.0) {
            return Err(Error::invalid(format!("column {} has zero variance", data.labels()[j])));
        }
        col /= sd;
    }
    TimeSeriesDataset::new(x, data.labels().to_vec(), data.subject_id())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFailure {
    pub fold: usize,
    pub subject: String,
    pub message: String,
}

/// Cross-validated scores of one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub estimator: Estimator,
    /// Held-out subject of each scored fold, parallel to `per_fold_loglik`.
    pub fold_subjects: Vec<String>,
    pub per_fold_loglik: Vec<f64>,
    pub failed_folds: Vec<FoldFailure>,
    /// Mean of `per_fold_loglik`; NaN (null in JSON) when every fold failed.
    #[serde(serialize_with = "ser_nan", deserialize_with = "de_nan")]
    pub mean_loglik: f64,
    /// Mean number of samples in the held-out subjects.
    pub mean_test_samples: f64,
    /// `p + |E|` of the model fitted on all subjects.
    pub dof: Option<usize>,
    /// Metrics of the model fitted on all subjects.
    pub graph_metrics: Option<GraphMetrics>,
    pub full_fit_error: Option<String>,
    /// False if any fit hit its iteration cap.
    pub converged: bool,
    /// Wall-clock seconds over all fits; not serialized so that reports are
    /// reproducible byte for byte.
    #[serde(skip)]
    pub runtime_seconds: f64,
}

fn ser_nan<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_nan() {
        s.serialize_none()
    } else {
        s.serialize_some(v)
    }
}

fn de_nan<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

struct Fold {
    train: std::result::Result<TimeSeriesDataset, String>,
    test_cov: std::result::Result<SymmetricMatrix, String>,
    subject: String,
    n_test: usize,
}

fn prepare_fold(subjects: &[TimeSeriesDataset], s: usize) -> Fold {
    let others: Vec<TimeSeriesDataset> = subjects
        .iter()
        .enumerate()
        .filter(|&(t, _)| t != s)
        .map(|(_, d)| d.clone())
        .collect();
    let test = &subjects[s];
    Fold {
        train: concatenate(&others)
            .and_then(|d| standardize_population(&d))
            .map_err(|e| e.to_string()),
        test_cov: to_correlation(&empirical_covariance(test)).map_err(|e| e.to_string()),
        subject: test.subject_id().to_string(),
        n_test: test.n(),
    }
}

/// Leave-one-subject-out cross-validation of every estimator.
///
/// Each fold fits on the remaining subjects, concatenated and standardized,
/// and scores against the held-out subject's correlation matrix. A fit that
/// fails is recorded in the report and its fold skipped. Each estimator is
/// also fitted on all subjects together to obtain its degrees of freedom and
/// graph metrics. With `jobs` set, work runs on a dedicated pool of that
/// many threads; results do not depend on it.
pub fn cross_validate(
    subjects: &[TimeSeriesDataset],
    estimators: &[Estimator],
    jobs: Option<usize>,
) -> Result<Vec<FitReport>> {
    if subjects.len() < 2 {
        return Err(Error::invalid(format!(
            "cross-validation needs at least 2 subjects, got {}",
            subjects.len()
        )));
    }
    let labels = subjects[0].labels();
    if let Some(bad) = subjects.iter().find(|d| d.labels() != labels) {
        return Err(Error::invalid(format!(
            "subject {} has different variable labels",
            bad.subject_id()
        )));
    }
    let run = || cross_validate_inner(subjects, estimators);
    match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

type Scored = std::result::Result<(f64, bool), String>;

fn cross_validate_inner(subjects: &[TimeSeriesDataset], estimators: &[Estimator]) -> Result<Vec<FitReport>> {
    let folds: Vec<Fold> = (0..subjects.len())
        .into_par_iter()
        .map(|s| prepare_fold(subjects, s))
        .collect();
    let all = concatenate(subjects)
        .and_then(|d| standardize_population(&d))
        .map_err(|e| e.to_string());

    let tasks: Vec<(usize, usize)> = (0..estimators.len())
        .flat_map(|e| (0..folds.len()).map(move |f| (e, f)))
        .collect();
    let scored: Vec<(Scored, f64)> = tasks
        .par_iter()
        .map(|&(e, f)| {
            let start = Instant::now();
            let fold = &folds[f];
            let result = match (&fold.train, &fold.test_cov) {
                (Err(m), _) | (_, Err(m)) => Err(m.clone()),
                (Ok(train), Ok(test)) => fit(&estimators[e], train)
                    .and_then(|m| Ok((log_likelihood(&m.precision, test)?, m.converged)))
                    .map_err(|err| err.to_string()),
            };
            (result, start.elapsed().as_secs_f64())
        })
        .collect();
    let full: Vec<(std::result::Result<(usize, GraphMetrics, bool), String>, f64)> = estimators
        .par_iter()
        .map(|est| {
            let start = Instant::now();
            let out = all.clone().and_then(|d| {
                fit(est, &d)
                    .and_then(|m| {
                        let gm = metrics(&m.support, Some(&m.decomposition))?;
                        Ok((degrees_of_freedom(&m.support), gm, m.converged))
                    })
                    .map_err(|e| e.to_string())
            });
            (out, start.elapsed().as_secs_f64())
        })
        .collect();

    let mut reports = Vec::with_capacity(estimators.len());
    for (e, est) in estimators.iter().enumerate() {
        let mut report = FitReport {
            estimator: est.clone(),
            fold_subjects: vec![],
            per_fold_loglik: vec![],
            failed_folds: vec![],
            mean_loglik: f64::NAN,
            mean_test_samples: 0.0,
            dof: None,
            graph_metrics: None,
            full_fit_error: None,
            converged: true,
            runtime_seconds: full[e].1,
        };
        let mut n_test = 0usize;
        for (f, fold) in folds.iter().enumerate() {
            let (result, secs) = &scored[e * folds.len() + f];
            report.runtime_seconds += secs;
            match result {
                Ok((ll, conv)) => {
                    report.fold_subjects.push(fold.subject.clone());
                    report.per_fold_loglik.push(*ll);
                    report.converged &= conv;
                    n_test += fold.n_test;
                }
                Err(message) => report.failed_folds.push(FoldFailure {
                    fold: f,
                    subject: fold.subject.clone(),
                    message: message.clone(),
                }),
            }
        }
        let scored_folds = report.per_fold_loglik.len();
        if scored_folds > 0 {
            report.mean_loglik = report.per_fold_loglik.iter().sum::<f64>() / scored_folds as f64;
            report.mean_test_samples = n_test as f64 / scored_folds as f64;
        }
        match &full[e].0 {
            Ok((dof, gm, conv)) => {
                report.dof = Some(*dof);
                report.graph_metrics = Some(gm.clone());
                report.converged &= conv;
            }
            Err(message) => report.full_fit_error = Some(message.clone()),
        }
        reports.push(report);
    }
    Ok(reports)
}

/// Row of the clique-width curve: `(max clique width / p, mean log-likelihood)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthPoint {
    pub parameter: Option<f64>,
    pub max_clique_width_fraction: f64,
    pub mean_loglik: f64,
}

/// Row of the filling-factor curve. `dof_adjusted_baseline` is the baseline
/// score lowered by half its extra degrees of freedom per held-out sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FillPoint {
    pub parameter: Option<f64>,
    pub filling_factor: f64,
    pub mean_loglik: f64,
    pub dof_adjusted_baseline: f64,
}

/// Clique-width curve over the reports that have graph metrics.
pub fn width_curve(reports: &[FitReport]) -> Vec<WidthPoint> {
    reports
        .iter()
        .filter_map(|r| {
            let m = r.graph_metrics.as_ref()?;
            Some(WidthPoint {
                parameter: r.estimator.parameter(),
                max_clique_width_fraction: m.max_clique_width as f64 / m.node_count.max(1) as f64,
                mean_loglik: r.mean_loglik,
            })
        })
        .collect()
}

/// Filling-factor curve of `reports` against `baseline`.
pub fn fill_curve(reports: &[FitReport], baseline: &FitReport) -> Vec<FillPoint> {
    let Some(base_dof) = baseline.dof else {
        return vec![];
    };
    reports
        .iter()
        .filter_map(|r| {
            let m = r.graph_metrics.as_ref()?;
            let dof = r.dof?;
            let n_test = if r.mean_test_samples > 0.0 {
                r.mean_test_samples
            } else {
                baseline.mean_test_samples
            };
            Some(FillPoint {
                parameter: r.estimator.parameter(),
                filling_factor: m.filling_factor,
                mean_loglik: r.mean_loglik,
                dof_adjusted_baseline: baseline.mean_loglik - 0.5 * (base_dof as f64 - dof as f64) / n_test,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fastdecomp::decomposable_mle;
    use crate::graph::chordal_decomposition;
    use crate::synth;

    fn sym(m: DMatrix<f64>, kind: MatrixKind) -> SymmetricMatrix {
        SymmetricMatrix::new(m, kind).unwrap()
    }

    #[test]
    fn likelihood_examples() {
        let i4 = sym(DMatrix::identity(4, 4), MatrixKind::Precision);
        let c4 = sym(DMatrix::identity(4, 4), MatrixKind::Covariance);
        assert_eq!(log_likelihood(&i4, &c4).unwrap(), -2.0);
        let e2 = 1f64.exp().powi(2);
        let s = sym(DMatrix::from_diagonal(&nalgebra::dvector![1.0, e2]), MatrixKind::Covariance);
        let k = s.inverse().unwrap();
        assert!((log_likelihood(&k, &s).unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_covariance_maximizes_likelihood() {
        let s = sym(fastdecomp_testkit::random_spd(5, 0.3, 1), MatrixKind::Covariance);
        let k = s.inverse().unwrap();
        let best = log_likelihood(&k, &s).unwrap();
        for t in 0..100 {
            let e = fastdecomp_testkit::random_spd(5, 0.0, 100 + t) * 0.05;
            let other = sym(k.values() + e, MatrixKind::Precision);
            assert!(log_likelihood(&other, &s).unwrap() <= best);
        }
    }

    #[test]
    fn non_spd_precision_rejected() {
        let k = sym(DMatrix::from_diagonal(&nalgebra::dvector![1.0, -1.0]), MatrixKind::Precision);
        let s = sym(DMatrix::identity(2, 2), MatrixKind::Covariance);
        assert!(matches!(log_likelihood(&k, &s), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn clique_factorization_examples() {
        let s = sym(fastdecomp_testkit::random_spd(3, 0.3, 5), MatrixKind::Covariance);
        let k = sym(fastdecomp_testkit::random_spd(3, 0.3, 6), MatrixKind::Precision);

        let one = CliqueDecomposition::new(vec![0, 1, 2], vec![vec![0, 1, 2]], vec![], 3).unwrap();
        let model = clique_models(&k, &one).unwrap();
        let direct = log_likelihood(&k, &s).unwrap();
        assert!((decomposable_log_likelihood(&s, &one, &model).unwrap() - direct).abs() < 1e-12);

        let singletons =
            CliqueDecomposition::new(vec![0, 1, 2], vec![vec![0], vec![1], vec![2]], vec![vec![], vec![]], 3).unwrap();
        let diag = sym(DMatrix::from_diagonal(&nalgebra::dvector![2.0, 3.0, 0.5]), MatrixKind::Precision);
        let expected: f64 = (0..3)
            .map(|i| 0.5 * (diag.get(i, i).ln() - diag.get(i, i) * s.get(i, i)))
            .sum();
        let model = clique_models(&diag, &singletons).unwrap();
        assert!((decomposable_log_likelihood(&s, &singletons, &model).unwrap() - expected).abs() < 1e-12);

        let g = UndirectedGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let chain = chordal_decomposition(&g).unwrap();
        let k = decomposable_mle(&s, &chain).unwrap();
        let test = sym(fastdecomp_testkit::random_spd(3, 0.5, 7), MatrixKind::Covariance);
        let by_cliques = decomposable_log_likelihood(&test, &chain, &clique_models(&k, &chain).unwrap()).unwrap();
        assert!((by_cliques - log_likelihood(&k, &test).unwrap()).abs() < 1e-8);

        let short = CliqueModel {
            cliques: vec![],
            separators: vec![],
        };
        assert!(decomposable_log_likelihood(&s, &chain, &short).is_err());
    }

    #[test]
    fn dof_examples() {
        assert_eq!(degrees_of_freedom(&UndirectedGraph::complete(3)), 6);
        assert_eq!(degrees_of_freedom(&UndirectedGraph::empty(5)), 5);
        let chain = UndirectedGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(degrees_of_freedom(&chain), 7);
    }

    fn report(mean: f64, dof: usize) -> FitReport {
        FitReport {
            estimator: Estimator::LedoitWolf,
            fold_subjects: vec!["a".into()],
            per_fold_loglik: vec![mean],
            failed_folds: vec![],
            mean_loglik: mean,
            mean_test_samples: 100.0,
            dof: Some(dof),
            graph_metrics: None,
            full_fit_error: None,
            converged: true,
            runtime_seconds: 0.0,
        }
    }

    #[test]
    fn dof_adjusted_delta_examples() {
        assert_eq!(dof_adjusted_delta(&report(-1.0, 10), &report(-1.0, 4), 100).unwrap(), -3.0);
        let d = dof_adjusted_delta(&report(-1.0, 10), &report(-1.01, 10), 100).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        let mut other = report(-1.0, 4);
        other.fold_subjects = vec!["b".into()];
        assert!(dof_adjusted_delta(&report(-1.0, 10), &other, 100).is_err());
    }

    #[test]
    fn grids() {
        let lam = Method::GraphicalLasso.default_grid();
        assert_eq!(lam.len(), 20);
        assert!((lam[0] - 1e-3).abs() < 1e-15 && lam[19] == 1.0);
        let beta = Method::FastDecomp.default_grid();
        assert_eq!((beta[0], beta[19], beta.len()), (0.5, 6.0, 20));
        assert_eq!(Estimator::sweep(Method::LedoitWolf, &lam, &Default::default()).len(), 1);
        assert_eq!(Method::parse("fastdecomp"), Some(Method::FastDecomp));
        assert_eq!(Method::parse("graphical-lasso"), Some(Method::GraphicalLasso));
        assert_eq!(Method::parse("nope"), None);
    }

    fn identity_subjects(count: usize, n: usize, p: usize) -> Vec<TimeSeriesDataset> {
        let k = sym(DMatrix::identity(p, p), MatrixKind::Precision);
        synth::sample_subjects(&k, n, count, 31).unwrap()
    }

    #[test]
    fn maximal_shrinkage_wins_at_identity_truth() {
        let p = 10;
        let subjects = identity_subjects(2, 2000, p);
        let grid = Method::Shrinkage.default_grid();
        let est = Estimator::sweep(Method::Shrinkage, &grid, &Default::default());
        let reports = cross_validate(&subjects, &est, None).unwrap();
        let best = reports
            .iter()
            .max_by(|a, b| a.mean_loglik.total_cmp(&b.mean_loglik))
            .unwrap();
        assert_eq!(best.estimator, Estimator::Shrinkage { lambda: 1.0 });
        assert!((best.mean_loglik + p as f64 / 2.0).abs() < 0.05, "{}", best.mean_loglik);
    }

    #[test]
    fn one_score_per_fold_and_mean() {
        let subjects = identity_subjects(3, 100, 4);
        let reports = cross_validate(&subjects, &[Estimator::FastDecomp { beta: 2.0 }], Some(2)).unwrap();
        let r = &reports[0];
        assert_eq!(r.per_fold_loglik.len(), 3);
        assert_eq!(r.fold_subjects, vec!["subject00", "subject01", "subject02"]);
        let mean = r.per_fold_loglik.iter().sum::<f64>() / 3.0;
        assert_eq!(r.mean_loglik, mean);
        assert!(r.dof.unwrap() >= 4);
        assert_eq!(r.mean_test_samples, 100.0);
    }

    #[test]
    fn failures_are_recorded_per_fold() {
        // Three variables from two samples per training fold: the unshrunk
        // covariance is singular, so every fold fails but the run does not.
        let subjects = identity_subjects(2, 2, 3);
        let reports = cross_validate(&subjects, &[Estimator::Shrinkage { lambda: 0.0 }], None).unwrap();
        assert_eq!(reports[0].failed_folds.len(), 2);
        assert!(reports[0].mean_loglik.is_nan());
        let json = serde_json::to_string(&reports[0]).unwrap();
        let back: FitReport = serde_json::from_str(&json).unwrap();
        assert!(back.mean_loglik.is_nan());
    }

    #[test]
    fn cross_validation_is_deterministic_across_pools() {
        let g = synth::watts_strogatz(12, 4, 0.1, 1).unwrap();
        let k = synth::precision_from_graph(&g, 0.4, 2).unwrap();
        let subjects = synth::sample_subjects(&k, 150, 3, 3).unwrap();
        let est: Vec<Estimator> = [
            Estimator::LedoitWolf,
            Estimator::GraphicalLasso { lambda: 0.05, tol: None, max_iter: 200 },
            Estimator::FastDecomp { beta: 2.0 },
            Estimator::PcDag { alpha: 0.01, max_condition_size: 2, tol: 1e-8, max_iter: 500 },
        ]
        .into();
        let a = cross_validate(&subjects, &est, Some(1)).unwrap();
        let b = cross_validate(&subjects, &est, Some(4)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.iter().all(|r| r.failed_folds.is_empty()));
    }

    #[test]
    fn curves() {
        let subjects = identity_subjects(2, 200, 5);
        let mut est = vec![Estimator::LedoitWolf];
        est.extend(Estimator::sweep(Method::FastDecomp, &[0.5, 6.0], &Default::default()));
        let reports = cross_validate(&subjects, &est, None).unwrap();
        let width = width_curve(&reports[1..]);
        assert_eq!(width.len(), 2);
        assert!(width.iter().all(|w| w.max_clique_width_fraction > 0.0 && w.max_clique_width_fraction <= 1.0));
        let fill = fill_curve(&reports[1..], &reports[0]);
        assert_eq!(fill.len(), 2);
        let base = &reports[0];
        for (pt, r) in fill.iter().zip(&reports[1..]) {
            let expected = base.mean_loglik - 0.5 * (base.dof.unwrap() - r.dof.unwrap()) as f64 / 200.0;
            assert!((pt.dof_adjusted_baseline - expected).abs() < 1e-12);
        }
    }
}
