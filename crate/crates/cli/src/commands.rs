use std::path::{Path, PathBuf};

use fastdecomp::covariance::empirical_covariance;
use fastdecomp::dataio::{self, load_dataset, PreprocessConfig, TimeSeriesDataset};
use fastdecomp::eval::{self, Estimator, EstimatorSettings, Method};
use fastdecomp::graph::{self, chordal_decomposition, is_chordal, UndirectedGraph};
use fastdecomp::{fastdecomp as fd, io, pcdag, sparse, synth, CliqueDecomposition, SymmetricMatrix};
use serde_json::{json, Value};

use crate::run::{CmdResult, Failure, RunContext};
use crate::{ConfigFile, CvArgs, EstimateArgs, EstimatorFlags, MetricsArgs, PreprocessArgs, SimulateArgs};

const DEFAULT_BETA: f64 = 3.0;
const DEFAULT_LAMBDA: f64 = 0.1;
const DEFAULT_ALPHA: f64 = 0.01;

fn load_config(path: Option<&Path>, ctx: &mut RunContext) -> CmdResult<ConfigFile> {
    if let Some(p) = path {
        ctx.input(p)?;
    }
    ConfigFile::load(path)
}

struct Resolved {
    method: Method,
    parameter: f64,
    settings: EstimatorSettings,
    preprocess: Option<PreprocessConfig>,
}

fn resolve_estimator(flags: &EstimatorFlags, cfg: &ConfigFile, ctx: &mut RunContext) -> CmdResult<Resolved> {
    let name = flags
        .method
        .clone()
        .or_else(|| cfg.method.clone())
        .ok_or_else(|| Failure::usage("--method is required"))?;
    let method = Method::parse(&name).ok_or_else(|| {
        let known: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
        Failure::usage(format!("unknown method {name:?}; expected one of {}", known.join(", ")))
    })?;
    let parameter = match method {
        Method::LedoitWolf => f64::NAN,
        Method::Shrinkage | Method::GraphicalLasso => flags.lambda.or(cfg.lambda).unwrap_or(DEFAULT_LAMBDA),
        Method::FastDecomp => flags.beta.or(cfg.beta).unwrap_or(DEFAULT_BETA),
        Method::PcDag => flags.alpha.or(cfg.alpha).unwrap_or(DEFAULT_ALPHA),
    };
    let defaults = EstimatorSettings::default();
    let settings = EstimatorSettings {
        glasso_tol: flags.tol.or(cfg.tol).or(defaults.glasso_tol),
        glasso_max_iter: flags.max_iter.or(cfg.max_iter).unwrap_or(defaults.glasso_max_iter),
        pc_max_condition_size: flags
            .max_condition_size
            .or(cfg.max_condition_size)
            .unwrap_or(defaults.pc_max_condition_size),
        ips_tol: cfg.ips_tol.unwrap_or(defaults.ips_tol),
        ips_max_iter: cfg.ips_max_iter.unwrap_or(defaults.ips_max_iter),
    };
    let preprocess = match (&cfg.preprocess, flags.preprocess) {
        (Some(p), _) => Some(p.clone()),
        (None, true) => Some(PreprocessConfig::default()),
        (None, false) => None,
    };
    ctx.set_config("method", method);
    if let Some(name) = method.parameter_name() {
        ctx.set_config(name, parameter);
    }
    ctx.set_config("settings", settings);
    ctx.set_config("preprocess", &preprocess);
    Ok(Resolved {
        method,
        parameter,
        settings,
        preprocess,
    })
}

fn load_subject(path: &Path, preprocess: Option<&PreprocessConfig>, ctx: &mut RunContext) -> CmdResult<TimeSeriesDataset> {
    ctx.input(path)?;
    let data = load_dataset(path)?;
    Ok(match preprocess {
        Some(cfg) => dataio::preprocess(&data, cfg)?.dataset,
        None => data,
    })
}

fn write_graph(ctx: &mut RunContext, stem: &str, g: &UndirectedGraph) -> CmdResult<()> {
    io::write_edge_list(g, ctx.output(&format!("{stem}.csv")))?;
    io::write_graph_json(g, ctx.output(&format!("{stem}.json")))?;
    Ok(())
}

pub fn estimate(a: &EstimateArgs, ctx: &mut RunContext) -> CmdResult<()> {
    let cfg = load_config(a.common.config.as_deref(), ctx)?;
    let r = resolve_estimator(&a.estimator, &cfg, ctx)?;
    let data = load_subject(&a.input, r.preprocess.as_ref(), ctx)?;
    let labels = data.labels().to_vec();
    let estimator = Estimator::new(r.method, r.parameter, &r.settings);

    let mut summary = json!({ "estimator": estimator, "n": data.n(), "p": data.p() });
    let (precision, support, decomposition): (SymmetricMatrix, UndirectedGraph, CliqueDecomposition) = match estimator {
        Estimator::FastDecomp { beta } => {
            let res = fd::fast_decomp(&data, beta)?;
            write_graph(ctx, "pruned_graph", &res.pruned_graph.clone().with_labels(labels.clone())?)?;
            summary["converged"] = true.into();
            summary["clique_widths"] = res.decomposition.cliques().iter().map(Vec::len).collect::<Vec<_>>().into();
            summary["max_clique_width"] = res.decomposition.max_clique_width().into();
            summary["fill_edges_added"] = res.fill_edges_added.into();
            summary["peripheral_node"] = res.peripheral_node.into();
            summary["ledoit_wolf_shrinkage"] = res.shrinkage.into();
            (res.precision, res.completed_graph, res.decomposition)
        }
        Estimator::GraphicalLasso { lambda, tol, max_iter } => {
            let res = sparse::graphical_lasso(&empirical_covariance(&data), lambda, sparse::GlassoOptions { tol, max_iter })?;
            summary["converged"] = res.converged.into();
            summary["dual_gap"] = res.dual_gap.into();
            summary["iterations"] = res.iterations.into();
            let support = eval::support_graph(&res.precision);
            let walk = graph::clique_walk(&support, &graph::rcm_ordering(&support).ordering)?;
            (res.precision, support, walk.decomposition)
        }
        Estimator::PcDag {
            alpha,
            max_condition_size,
            tol,
            max_iter,
        } => {
            let pc = pcdag::pc_skeleton(&data, alpha, max_condition_size)?;
            write_graph(ctx, "skeleton", &pc.skeleton)?;
            write_graph(ctx, "moral_graph", &pc.moral_graph.clone().with_labels(labels.clone())?)?;
            let sepsets: Vec<Value> = pc
                .sepsets
                .iter()
                .map(|(&(i, j), s)| json!({ "i": i, "j": j, "sepset": s }))
                .collect();
            ctx.write_json("sepsets.json", &sepsets)?;
            let fit = pcdag::fit_precision_on_graph(&empirical_covariance(&data), &pc.moral_graph, tol, max_iter)?;
            summary["converged"] = fit.converged.into();
            summary["iterations"] = fit.iterations.into();
            summary["max_moment_mismatch"] = fit.max_mismatch.into();
            summary["max_degree_reached"] = pc.max_degree_reached.into();
            let support = eval::support_graph(&fit.precision);
            let walk = graph::clique_walk(&support, &graph::rcm_ordering(&support).ordering)?;
            (fit.precision, support, walk.decomposition)
        }
        Estimator::LedoitWolf | Estimator::Shrinkage { .. } => {
            let fit = eval::fit(&estimator, &data)?;
            summary["converged"] = fit.converged.into();
            (fit.precision, fit.support, fit.decomposition)
        }
    };
    let lambda = match estimator {
        Estimator::Shrinkage { lambda } | Estimator::GraphicalLasso { lambda, .. } => Some(lambda),
        _ => None,
    };
    io::write_matrix_csv(&precision, &labels, ctx.output("precision.csv"))?;
    io::write_matrix_json(&precision, Some(&labels), lambda, ctx.output("precision.json"))?;
    write_graph(ctx, "graph", &support.clone().with_labels(labels)?)?;
    io::write_decomposition_json(&decomposition, ctx.output("decomposition.json"))?;
    let m = graph::metrics(&support, Some(&decomposition))?;
    summary["dof"] = eval::degrees_of_freedom(&support).into();
    ctx.write_json("metrics.json", &m)?;
    ctx.write_json("summary.json", &summary)
}

fn subject_paths(a: &CvArgs) -> CmdResult<Vec<PathBuf>> {
    let mut paths = a.subjects.clone();
    if let Some(dir) = &a.subject_dir {
        let entries = std::fs::read_dir(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        found.sort();
        paths.extend(found);
    }
    if paths.is_empty() {
        return Err(Failure::usage("give --subjects or --subject-dir"));
    }
    Ok(paths)
}

pub fn cv(a: &CvArgs, ctx: &mut RunContext) -> CmdResult<()> {
    let cfg = load_config(a.common.config.as_deref(), ctx)?;
    let r = resolve_estimator(&a.estimator, &cfg, ctx)?;
    let grid = a
        .grid
        .clone()
        .or_else(|| cfg.grid.clone())
        .unwrap_or_else(|| r.method.default_grid());
    ctx.set_config("grid", &grid);
    let paths = subject_paths(a)?;
    let subjects = paths
        .iter()
        .map(|p| load_subject(p, r.preprocess.as_ref(), ctx))
        .collect::<CmdResult<Vec<_>>>()?;
    ctx.set_config(
        "subjects",
        subjects.iter().map(|s| s.subject_id().to_string()).collect::<Vec<_>>(),
    );

    let mut estimators = vec![Estimator::LedoitWolf];
    if r.method != Method::LedoitWolf {
        estimators.extend(Estimator::sweep(r.method, &grid, &r.settings));
    }
    let reports = eval::cross_validate(&subjects, &estimators, None)?;
    ctx.diagnostics.insert(
        "runtime_seconds_per_estimator".into(),
        reports.iter().map(|r| r.runtime_seconds).collect::<Vec<_>>().into(),
    );
    let failed: usize = reports.iter().map(|r| r.failed_folds.len()).sum();
    if failed > 0 {
        eprintln!("warning: {failed} fold fits failed; see reports.json");
    }
    io::write_reports_json(&reports, ctx.output("reports.json"))?;
    io::write_reports_csv(&reports, ctx.output("reports.csv"))?;
    let (baseline, sweep) = reports.split_first().expect("baseline present");
    let sweep = if sweep.is_empty() { std::slice::from_ref(baseline) } else { sweep };
    io::write_width_curve(&eval::width_curve(sweep), ctx.output("width_curve.csv"))?;
    io::write_fill_curve(&eval::fill_curve(sweep, baseline), ctx.output("fill_curve.csv"))?;
    Ok(())
}

pub fn metrics(a: &MetricsArgs, ctx: &mut RunContext) -> CmdResult<()> {
    ctx.input(&a.graph)?;
    let g = if a.graph.extension().is_some_and(|x| x == "json") {
        io::read_graph_json(&a.graph)?
    } else {
        io::read_edge_list(&a.graph, a.nodes)?
    };
    if let Some(p) = a.nodes {
        if p != g.p() {
            return Err(Failure::data(format!("graph has {} nodes, --nodes says {p}", g.p())));
        }
    }
    let decomposition = if is_chordal(&g).is_chordal() {
        Some(chordal_decomposition(&g)?)
    } else if g.p() > graph::MAX_ENUMERATION_NODES {
        Some(graph::clique_walk(&g, &graph::rcm_ordering(&g).ordering)?.decomposition)
    } else {
        None
    };
    ctx.set_config("nodes", g.p());
    ctx.write_json("metrics.json", &graph::metrics(&g, decomposition.as_ref())?)
}

pub fn simulate(a: &SimulateArgs, ctx: &mut RunContext) -> CmdResult<()> {
    let cfg = load_config(a.common.config.as_deref(), ctx)?;
    let generator = a
        .generator
        .clone()
        .or(cfg.generator.clone())
        .unwrap_or_else(|| "watts-strogatz".into());
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let strength = a.strength.or(cfg.strength).unwrap_or(0.5);
    let n = a.n.or(cfg.n).unwrap_or(800);
    let subjects = a.subjects.or(cfg.subjects).unwrap_or(4);
    let (g, params) = match generator.replace('_', "-").as_str() {
        "watts-strogatz" | "ws" => {
            let p = a.p.or(cfg.p).unwrap_or(40);
            let k = a.k.or(cfg.k).unwrap_or(6);
            let q = a.rewire_prob.or(cfg.rewire_prob).unwrap_or(0.1);
            (
                synth::watts_strogatz(p, k, q, seed)?,
                json!({ "generator": "watts-strogatz", "p": p, "k": k, "rewire_prob": q }),
            )
        }
        "blocks" => {
            let blocks = a.blocks.or(cfg.blocks).unwrap_or(2);
            let size = a.block_size.or(cfg.block_size).unwrap_or(4);
            (
                synth::block_graph(blocks, size),
                json!({ "generator": "blocks", "blocks": blocks, "block_size": size }),
            )
        }
        other => return Err(Failure::usage(format!("unknown generator {other:?}"))),
    };
    if subjects == 0 {
        return Err(Failure::data("--subjects must be at least 1"));
    }
    let (precision_seed, sample_seed) = (seed.wrapping_add(1), seed.wrapping_add(2));
    let mut params = params;
    params["strength"] = strength.into();
    params["n"] = n.into();
    params["subjects"] = subjects.into();
    for (k, v) in params.as_object().expect("object") {
        ctx.config.insert(k.clone(), v.clone());
    }
    let seeds = json!({ "graph": seed, "precision": precision_seed, "samples": sample_seed });
    ctx.seeds = seeds.as_object().expect("object").clone();

    let precision = synth::precision_from_graph(&g, strength, precision_seed)?;
    let data = synth::sample_subjects(&precision, n, subjects, sample_seed)?;
    let labels: Vec<String> = (0..g.p()).map(|i| format!("x{i}")).collect();
    let mut files = vec![];
    let subject_dir = ctx.output("subjects");
    std::fs::create_dir_all(&subject_dir).map_err(|e| Failure::data(format!("{}: {e}", subject_dir.display())))?;
    for d in &data {
        let name = format!("subjects/{}.csv", d.subject_id());
        dataio::save_dataset(d, ctx.output(&name))?;
        files.push(name);
    }
    io::write_matrix_csv(&precision, &labels, ctx.output("true_precision.csv"))?;
    io::write_matrix_json(&precision, Some(&labels), None, ctx.output("true_precision.json"))?;
    write_graph(ctx, "true_graph", &g)?;
    let manifest = json!({
        "parameters": params,
        "seeds": seeds,
        "rng": synth::RNG_ALGORITHM,
        "subject_files": files,
        "graph": g.to_record(),
    });
    ctx.write_json("manifest.json", &manifest)
}

pub fn preprocess(a: &PreprocessArgs, ctx: &mut RunContext) -> CmdResult<()> {
    let cfg = load_config(a.common.config.as_deref(), ctx)?;
    let mut pc = cfg.preprocess.clone().unwrap_or_default();
    if a.no_detrend {
        pc.detrend_order = None;
    } else if let Some(order) = a.detrend_order {
        pc.detrend_order = Some(order);
    }
    if let Some(b) = &a.band {
        let &[low, high] = b.as_slice() else {
            return Err(Failure::usage(format!("--band takes LOW,HIGH, got {} values", b.len())));
        };
        pc.band = Some((low, high));
    }
    if a.no_standardize {
        pc.standardize = false;
    }
    let confounds_header = a.confounds_header || cfg.confounds_header.unwrap_or(false);
    ctx.set_config("preprocess", &pc);
    ctx.set_config("confounds_header", confounds_header);

    ctx.input(&a.input)?;
    let data = load_dataset(&a.input)?;
    let standardize = pc.standardize;
    let filtered = dataio::preprocess(
        &data,
        &PreprocessConfig {
            standardize: false,
            ..pc
        },
    )?
    .dataset;
    let cleaned = match &a.confounds {
        Some(path) => {
            ctx.input(path)?;
            let c = dataio::load_matrix(path, confounds_header)?;
            dataio::regress_confounds(&filtered, &c)?
        }
        None => filtered,
    };
    let (out, zero_variance) = if standardize {
        let s = dataio::standardize(&cleaned);
        (s.dataset, s.zero_variance)
    } else {
        (cleaned, vec![])
    };
    if !zero_variance.is_empty() {
        eprintln!("warning: {} zero-variance columns left at zero", zero_variance.len());
    }
    let name = a
        .input
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "preprocessed.csv".into());
    dataio::save_dataset(&out, ctx.output(&name))?;
    let zero_labels: Vec<&str> = zero_variance.iter().map(|&i| out.labels()[i].as_str()).collect();
    ctx.write_json("summary.json", &json!({ "n": out.n(), "p": out.p(), "zero_variance": zero_labels }))
}
