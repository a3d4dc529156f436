//! One function per subcommand. Each returns its artifacts and checks;
//! writing them to disk is the runner's job.

use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use netdiff_core::coeff::{linear_form, DriftTable};
use netdiff_core::gaussian::{
    build_linear_system, conditional_covariance, covariance_at, edges_to_json, matrix_to_csv, path_covariance,
    path_precision_blocks, precision_at, GaussianSystem, Scheme,
};
use netdiff_core::graph::{Graph, InfiniteGraph, VertexSet};
use netdiff_core::hc::{
    check_mrf_bruteforce, conditional_specification, factorize_positive_2mrf, joint_table, project_to_truncation,
    projection_counterexample_search, small_connected_graphs, FactorModel, MRF_TOL,
};
use netdiff_core::mrf::{mrf_order_scan, reports_csv, CiSource, PartialCorrelationOptions};
use netdiff_core::sde::{
    convergence_csv, girsanov_weights, simulate, simulate_driftless, truncation_convergence, ConvergenceStudy,
    InitialLaw, Simulation, VertexLaw,
};
use netdiff_core::stats::mean_and_se;

use crate::config::{CiSourceChoice, ExperimentConfig, HcLabParams, MeasureChoice, SchemeChoice, Topology};
use crate::run::{Artifact, Check, Outcome, RunError};
use crate::Command;

pub const DEFAULT_REPLICAS: usize = 1000;

pub fn dispatch(command: Command, cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    match command {
        Command::Graph => graph(cfg),
        Command::Gaussian => gaussian(cfg),
        Command::Simulate => simulate_cmd(cfg),
        Command::GirsanovCheck => girsanov_check(cfg),
        Command::CiScan => ci_scan(cfg),
        Command::Approx => approx(cfg),
        Command::HcLab => hc_lab(cfg),
        Command::ReproducePaper => crate::golden::reproduce(cfg).map(|(_, o)| o),
    }
}

fn set_of(g: &Graph, labels: &[String]) -> Result<VertexSet, RunError> {
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    Ok(g.vertex_set(&refs)?)
}

fn names(g: &Graph, set: &VertexSet) -> Vec<String> {
    g.labels_of(set).into_iter().map(str::to_string).collect()
}

fn join(labels: &[String]) -> String {
    format!("{{{}}}", labels.join(","))
}

fn time_tag(t: f64) -> String {
    format!("{t}")
}

fn scheme(choice: SchemeChoice) -> Scheme {
    match choice {
        SchemeChoice::Euler => Scheme::Euler,
        SchemeChoice::Exact => Scheme::Exact,
    }
}

fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Drift matrix of the linear system: from the configured drift when it is
/// linear in the current states, otherwise adjacency plus `diag_shift`.
/// The exact Gaussian formulas assume unit diffusion.
pub fn linear_system(cfg: &ExperimentConfig, g: &Graph, diag_shift: f64) -> Result<GaussianSystem, RunError> {
    if cfg.diffusion.is_some() {
        let table = cfg.diffusion_table()?;
        let unit = table.default.scalar() == Some(1.0) && table.overrides.values().all(|d| d.scalar() == Some(1.0));
        if !unit {
            return Err(RunError::Config("exact Gaussian computations need unit diffusion".into()));
        }
    }
    let Some(drift) = cfg.drift_table() else {
        return Ok(build_linear_system(g, diag_shift));
    };
    let n = g.len();
    let mut l = DMatrix::zeros(n, n);
    for v in 0..n {
        let spec = drift.spec_for(g.label(v));
        let form = linear_form(spec.expr(), 1)
            .ok_or_else(|| RunError::Config(format!("drift `{spec}` at vertex `{}` is not linear", g.label(v))))?;
        let r = form.resolve(g.degree(v));
        if r.constant != 0.0 {
            return Err(RunError::Config(format!("drift at vertex `{}` has a constant term", g.label(v))));
        }
        l[(v, v)] = r.own;
        for &u in g.neighbors(v) {
            l[(v, u)] = r.neighbor;
        }
    }
    Ok(GaussianSystem::custom(l, g.labels().to_vec())?)
}

fn simulation(cfg: &ExperimentConfig, g: &Graph) -> Result<Simulation, RunError> {
    let sim = Simulation::new(
        g,
        &cfg.require_drift()?,
        &cfg.diffusion_table()?,
        cfg.time_grid()?,
        cfg.replicas_or(DEFAULT_REPLICAS),
        cfg.seed(),
    )?;
    Ok(sim.with_initial(cfg.initial_law()))
}

#[derive(Serialize)]
struct SetReport {
    set: Vec<String>,
    boundary: Vec<String>,
    second_boundary: Vec<String>,
    diameter: Option<usize>,
}

#[derive(Serialize)]
struct TruncationReport {
    depth: usize,
    ball: Vec<String>,
    annulus: Vec<String>,
    edges: usize,
}

#[derive(Serialize)]
struct GraphReport {
    vertices: Vec<String>,
    edges: Vec<[String; 2]>,
    root: Option<String>,
    max_degree: usize,
    connected: bool,
    clique_counts: Option<[usize; 2]>,
    sets: Vec<SetReport>,
    truncations: Vec<TruncationReport>,
}

pub fn graph(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let g = cfg.finite_graph()?;
    let params = cfg.graph_report.clone().unwrap_or_default();
    let mut out = Outcome::default();
    let mut clique_counts = None;
    if params.cliques {
        let mut csv = String::from("order,members\n");
        let mut counts = [0; 2];
        for order in [1, 2] {
            for c in g.cliques(order)? {
                csv.push_str(&format!("{order},{}\n", names(&g, &c).join("|")));
                counts[order - 1] += 1;
            }
        }
        out.say(format!("cliques: {} of order 1, {} of order 2", counts[0], counts[1]));
        out.add(Artifact::text("cliques.csv", csv));
        clique_counts = Some(counts);
    }
    let mut sets = Vec::new();
    for labels in &params.sets {
        let a = set_of(&g, labels)?;
        let report = SetReport {
            set: names(&g, &a),
            boundary: names(&g, &g.boundary(&a)?),
            second_boundary: names(&g, &g.boundary2(&a)?),
            diameter: g.diameter(&a)?,
        };
        out.say(format!(
            "A={}: boundary {}, second boundary {}",
            join(&report.set),
            join(&report.boundary),
            join(&report.second_boundary)
        ));
        sets.push(report);
    }
    let mut truncations = Vec::new();
    for &n in &params.truncations {
        let gn = g.augmented_truncation(n)?;
        let report = TruncationReport {
            depth: n,
            ball: names(&g, &g.ball(n)?),
            annulus: names(&g, &g.annulus(n)?),
            edges: gn.edge_count(),
        };
        out.say(format!("G_{n}: {} vertices, {} edges", report.ball.len(), report.edges));
        out.add(Artifact::text(format!("truncation_{n}.txt"), gn.to_edge_list()));
        truncations.push(report);
    }
    let report = GraphReport {
        vertices: g.labels().to_vec(),
        edges: g.edges().into_iter().map(|(u, v)| [g.label(u).to_string(), g.label(v).to_string()]).collect(),
        root: g.root().map(|r| g.label(r).to_string()),
        max_degree: g.max_degree(),
        connected: g.is_connected(),
        clique_counts,
        sets,
        truncations,
    };
    out.say(format!("{} vertices, {} edges, max degree {}", g.len(), g.edge_count(), report.max_degree));
    out.add(Artifact::json("graph_report.json", &report));
    out.add(Artifact::text("square_graph.txt", g.square_graph().to_edge_list()));
    Ok(out)
}

fn max_dev(m: &DMatrix<f64>, expected: &[Vec<f64>]) -> Option<f64> {
    if expected.len() != m.nrows() || expected.iter().any(|r| r.len() != m.ncols()) {
        return None;
    }
    let mut worst: f64 = 0.0;
    for (i, row) in expected.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            worst = worst.max((m[(i, j)] - x).abs());
        }
    }
    Some(worst)
}

fn deviation_check(name: String, m: &DMatrix<f64>, expected: &[Vec<f64>], tol: f64) -> Check {
    match max_dev(m, expected) {
        Some(d) => Check::new(name, d <= tol, format!("max deviation {d:.3e} (tol {tol:e})")),
        None => Check::new(name, false, format!("expected a {}x{} matrix", m.nrows(), m.ncols())),
    }
}

pub fn gaussian(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let g = cfg.finite_graph()?;
    let p = cfg.gaussian.clone().ok_or_else(|| RunError::Config("`gaussian` section is required".into()))?;
    if p.times.is_empty() {
        return Err(RunError::Config("`gaussian.times` is empty".into()));
    }
    let sys = linear_system(cfg, &g, p.diag_shift)?;
    let labels = sys.labels().to_vec();
    let requests = p
        .conditionals
        .iter()
        .map(|c| Ok((set_of(&g, &c.target)?.to_vec(), set_of(&g, &c.given)?.to_vec())))
        .collect::<Result<Vec<_>, RunError>>()?;
    let mut out = Outcome::default();
    out.add(Artifact::text("drift_matrix.csv", matrix_to_csv(&labels, sys.drift())));
    for (i, &t) in p.times.iter().enumerate() {
        let tag = time_tag(t);
        let cov = covariance_at(&sys, t)?.sigma;
        let prec = precision_at(&sys, t, p.support_tol)?;
        if !all_finite(&cov) || !all_finite(&prec.q) {
            return Err(RunError::Numerical(format!("non-finite covariance or precision at t={t}")));
        }
        out.add(Artifact::text(format!("covariance_t{tag}.csv"), matrix_to_csv(&labels, &cov)));
        out.add(Artifact::text(format!("precision_t{tag}.csv"), matrix_to_csv(&labels, &prec.q)));
        out.add(Artifact::text(format!("support_t{tag}.json"), edges_to_json(&labels, &prec.ci_edges) + "\n"));
        out.say(format!("t={t}: precision support has {} off-diagonal pairs", prec.ci_edges.len()));
        for (k, (target, given)) in requests.iter().enumerate() {
            let c = conditional_covariance(&cov, target, given)?;
            let target_labels: Vec<String> = target.iter().map(|&v| labels[v].clone()).collect();
            out.add(Artifact::text(format!("conditional_{}_t{tag}.csv", k + 1), matrix_to_csv(&target_labels, &c)));
            if i == 0 {
                if let Some(Some(expected)) = p.expect.as_ref().and_then(|e| e.conditionals.get(k)) {
                    let tol = p.expect.as_ref().map(|e| e.tol).unwrap_or(0.0);
                    out.check(deviation_check(format!("conditional {} at t={t}", k + 1), &c, expected, tol));
                }
            }
        }
        if i == 0 {
            if let Some(expected) = p.expect.as_ref().and_then(|e| e.covariance.as_ref()) {
                let tol = p.expect.as_ref().map(|e| e.tol).unwrap_or(0.0);
                out.check(deviation_check(format!("covariance at t={t}"), &cov, expected, tol));
            }
        }
    }
    if let Some(choice) = p.path_scheme {
        let stacked = path_covariance(&sys, &cfg.time_grid()?, scheme(choice), None)?;
        let mut csv = String::from("u,v,max_abs,relative\n");
        for b in path_precision_blocks(&stacked)? {
            csv.push_str(&format!("{},{},{:.12e},{:.12e}\n", b.label_u, b.label_v, b.max_abs, b.relative));
        }
        out.say(format!("path precision blocks over {} times", stacked.n_times()));
        out.add(Artifact::text("path_precision_blocks.csv", csv));
    }
    Ok(out)
}

pub fn simulate_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let g = cfg.finite_graph()?;
    let p = cfg.simulate.clone().unwrap_or_default();
    let sim = simulation(cfg, &g)?.with_recording(p.recording);
    let ens = match p.measure {
        MeasureChoice::Interacting => simulate(&sim)?,
        MeasureChoice::Driftless => simulate_driftless(&sim)?,
    };
    let mut bytes = Vec::new();
    ens.write_to(&mut bytes)?;
    let mut out = Outcome::default();
    out.say(format!(
        "{} replicas, {} vertices, {} recorded times, seed {}",
        ens.replicas,
        ens.n_vertices(),
        ens.n_times(),
        ens.seed
    ));
    out.add(Artifact { name: "ensemble.bin".into(), bytes });
    out.add(Artifact::text("summary.csv", ens.summary_csv()));
    Ok(out)
}

#[derive(Serialize)]
struct GirsanovReport {
    replicas: usize,
    mean: f64,
    standard_error: f64,
    sigmas: f64,
    z_score: f64,
    max_weight: f64,
    effective_sample_size: f64,
}

pub fn girsanov_check(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let g = cfg.finite_graph()?;
    let p = cfg.girsanov.clone().unwrap_or_default();
    let sim = simulation(cfg, &g)?;
    let ens = simulate_driftless(&sim)?;
    let w = girsanov_weights(&ens, &sim)?;
    let weights = w.weights();
    if weights.iter().any(|x| !x.is_finite()) {
        return Err(RunError::Numerical("non-finite Girsanov weight".into()));
    }
    let (mean, se) = mean_and_se(&weights);
    let (sum, sum_sq) = weights.iter().fold((0.0, 0.0), |(a, b), x| (a + x, b + x * x));
    let report = GirsanovReport {
        replicas: weights.len(),
        mean,
        standard_error: se,
        sigmas: p.sigmas,
        z_score: (mean - 1.0) / se,
        max_weight: weights.iter().cloned().fold(0.0, f64::max),
        effective_sample_size: sum * sum / sum_sq,
    };
    let mut csv = String::from("replica,log_weight,weight\n");
    for (r, (lw, x)) in w.log_weights.iter().zip(&weights).enumerate() {
        csv.push_str(&format!("{r},{lw:.12e},{x:.12e}\n"));
    }
    let mut out = Outcome::default();
    out.say(format!(
        "weight mean {mean:.5} ± {se:.5} over {} replicas, effective sample size {:.0}",
        report.replicas, report.effective_sample_size
    ));
    out.check(Check::new(
        "weight mean within band around 1",
        (mean - 1.0).abs() <= p.sigmas * se,
        format!("|mean - 1| = {:.3e}, {} se = {:.3e}", (mean - 1.0).abs(), p.sigmas, p.sigmas * se),
    ));
    out.add(Artifact::text("weights.csv", csv));
    out.add(Artifact::json("girsanov.json", &report));
    Ok(out)
}

/// Linear drift, scalar diffusion and a Gaussian or deterministic product
/// initial law give a jointly Gaussian ensemble.
fn is_gaussian(cfg: &ExperimentConfig, drift: &DriftTable) -> Result<bool, RunError> {
    let linear =
        std::iter::once(&drift.default).chain(drift.overrides.values()).all(|s| linear_form(s.expr(), 1).is_some());
    let table = cfg.diffusion_table()?;
    let scalar = table.default.scalar().is_some() && table.overrides.values().all(|d| d.scalar().is_some());
    let gaussian_law = |l: &VertexLaw| matches!(l, VertexLaw::Point { .. } | VertexLaw::Normal { .. });
    let initial = match cfg.initial_law() {
        InitialLaw::Product { default, overrides } => gaussian_law(&default) && overrides.values().all(gaussian_law),
        InitialLaw::Gibbs { .. } => false,
    };
    Ok(linear && scalar && initial)
}

pub fn ci_scan(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let g = cfg.finite_graph()?;
    let p = cfg.ci_scan.clone().unwrap_or_default();
    let sets = match &p.sets {
        Some(ss) => Some(ss.iter().map(|s| set_of(&g, s)).collect::<Result<Vec<_>, _>>()?),
        None => None,
    };
    let scans = match p.source {
        CiSourceChoice::Exact => {
            let sys = linear_system(cfg, &g, p.diag_shift)?;
            let stacked = path_covariance(&sys, &cfg.time_grid()?, scheme(p.scheme), None)?;
            mrf_order_scan(&g, &CiSource::Exact { stacked: &stacked, tol: p.tol }, &p.orders, sets.as_deref())?
        }
        CiSourceChoice::Ensemble => {
            let drift = cfg.require_drift()?;
            let sim = simulation(cfg, &g)?.with_recording(p.recording);
            let ens = simulate(&sim)?;
            let options = PartialCorrelationOptions {
                feature_times: p.feature_times.clone().unwrap_or_else(|| (1..ens.n_times()).collect()),
                alpha: p.alpha,
                gaussian: is_gaussian(cfg, &drift)?,
            };
            mrf_order_scan(&g, &CiSource::Ensemble { ensemble: &ens, options }, &p.orders, sets.as_deref())?
        }
    };
    let mut out = Outcome::default();
    for scan in &scans {
        out.say(format!(
            "order {}: {} ({} tests)",
            scan.order,
            if scan.passed { "all independent" } else { "dependence found" },
            scan.reports.len()
        ));
        if let Some(&want) = p.expect.get(&scan.order) {
            out.check(Check::new(
                format!("order {} scan", scan.order),
                scan.passed == want,
                format!("expected passed={want}, got {}", scan.passed),
            ));
        }
    }
    for order in p.expect.keys().filter(|o| !p.orders.contains(o)) {
        out.check(Check::new(format!("order {order} scan"), false, "order was not scanned"));
    }
    let all: Vec<_> = scans.iter().flat_map(|s| s.reports.iter().cloned()).collect();
    out.add(Artifact::text("ci_reports.csv", reports_csv(&all)));
    out.add(Artifact::json("ci_scan.json", &scans));
    Ok(out)
}

pub fn approx(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let p = cfg.approx.clone().ok_or_else(|| RunError::Config("`approx` section is required".into()))?;
    let topo = cfg.topology()?;
    let graph: &dyn InfiniteGraph = match &topo {
        Topology::Finite(g) if g.root().is_none() => {
            return Err(RunError::Config("`approx` on a finite graph needs a root".into()))
        }
        Topology::Finite(g) => g,
        Topology::Infinite(inf) => inf.as_ref(),
    };
    let grid = cfg.grid.ok_or_else(|| RunError::Config("`grid` is required".into()))?;
    let study = ConvergenceStudy {
        graph,
        window: p.window.clone(),
        horizon: grid.t_max,
        steps: grid.steps,
        levels: p.levels.clone(),
        replicas: cfg.replicas_or(DEFAULT_REPLICAS),
        seed: cfg.seed(),
        drift: cfg.require_drift()?,
        diffusion: cfg.diffusion_table()?,
        initial: cfg.initial_law(),
    };
    let rows = truncation_convergence(&study)?;
    if rows.iter().any(|r| !r.energy_distance.is_finite()) {
        return Err(RunError::Numerical("non-finite energy distance".into()));
    }
    let mut out = Outcome::default();
    for r in &rows {
        out.say(format!("n={}: energy distance {:.4e}, max KS {:.4}", r.n, r.energy_distance, r.ks_max));
    }
    if p.expect_decreasing {
        let reference = p.levels.iter().max().copied().unwrap_or(0);
        let mut sorted: Vec<_> = rows.iter().filter(|r| r.n != reference).collect();
        sorted.sort_by_key(|r| r.n);
        let decreasing = sorted.windows(2).all(|w| w[1].energy_distance < w[0].energy_distance);
        let seq: Vec<String> = sorted.iter().map(|r| format!("{:.3e}", r.energy_distance)).collect();
        out.check(Check::new("energy distance decreases with depth", decreasing, seq.join(" > ")));
    }
    out.add(Artifact::text("convergence.csv", convergence_csv(&rows)));
    out.add(Artifact::json("convergence.json", &rows));
    Ok(out)
}

pub fn hc_lab(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let p = cfg.hc_lab.clone().ok_or_else(|| RunError::Config("`hc_lab` section is required".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
    let mut out = Outcome::default();
    match p {
        HcLabParams::Factorization { max_vertices, models, states } => {
            let graphs = match cfg.graph {
                Some(_) => vec![cfg.finite_graph()?],
                None => small_connected_graphs(max_vertices),
            };
            let (mut worst_ci, mut worst_rt, mut count): (f64, f64, usize) = (0.0, 0.0, 0);
            for g in &graphs {
                for _ in 0..models {
                    let m = FactorModel::random(g, states, 2, 1.0, &mut rng)?;
                    let t = joint_table(&m)?;
                    worst_ci = worst_ci.max(check_mrf_bruteforce(&t, g, 2)?.max_violation);
                    worst_rt = worst_rt.max(t.tv(&joint_table(&factorize_positive_2mrf(&t, g)?)?));
                    count += 1;
                }
            }
            out.say(format!("{} graphs, {count} models", graphs.len()));
            out.check(Check::new(
                "2-clique factorization gives a second-order Markov field",
                worst_ci <= MRF_TOL,
                format!("max violation {worst_ci:.2e}"),
            ));
            out.check(Check::new(
                "canonical factorization reproduces the law",
                worst_rt <= MRF_TOL,
                format!("max total variation {worst_rt:.2e}"),
            ));
            out.add(Artifact::json(
                "hc_report.json",
                &serde_json::json!({"suite": "factorization", "graphs": graphs.len(), "models": count,
                    "max_violation": worst_ci, "max_round_trip_tv": worst_rt}),
            ));
        }
        HcLabParams::Projection { depth, models } => {
            let g = cfg.finite_graph()?;
            let ball = g.ball(depth)?.to_vec();
            let (mut worst_tv, mut worst_mrf): (f64, f64) = (0.0, 0.0);
            for _ in 0..models {
                let m = FactorModel::random(&g, 2, 2, 1.0, &mut rng)?;
                let projected = project_to_truncation(&m, depth)?;
                let table = joint_table(&projected)?;
                worst_tv = worst_tv.max(joint_table(&m)?.marginal(&ball).tv(&table));
                worst_mrf = worst_mrf.max(check_mrf_bruteforce(&table, projected.graph(), 2)?.max_violation);
            }
            out.say(format!("{models} models projected onto G_{depth} ({} vertices)", ball.len()));
            out.check(Check::new(
                "projection keeps the marginal",
                worst_tv <= MRF_TOL,
                format!("max TV {worst_tv:.2e}"),
            ));
            out.check(Check::new(
                "projection is second-order Markov on the truncation",
                worst_mrf <= MRF_TOL,
                format!("max violation {worst_mrf:.2e}"),
            ));
            out.add(Artifact::json(
                "hc_report.json",
                &serde_json::json!({"suite": "projection", "depth": depth, "models": models,
                    "max_tv": worst_tv, "max_violation": worst_mrf}),
            ));
        }
        HcLabParams::Search { subset, trials, order, min_gap, expect_found } => {
            let g = cfg.finite_graph()?;
            let sub = set_of(&g, &subset)?;
            let induced = g.induced_subgraph(&sub)?;
            let found = projection_counterexample_search(&g, &sub, trials, cfg.seed(), order, min_gap)?;
            let label = |idx: &[usize]| idx.iter().map(|&v| induced.label(v).to_string()).collect::<Vec<_>>();
            let report = match &found {
                Some(w) => {
                    out.say(format!(
                        "witness at trial {}: {} and {} dependent given {}, gap {:.4}",
                        w.trial,
                        join(&label(&w.triple.a)),
                        join(&label(&w.triple.b)),
                        join(&label(&w.triple.s)),
                        w.tv_gap
                    ));
                    out.add(Artifact::text("witness_model.json", w.model.to_json() + "\n"));
                    serde_json::json!({"suite": "search", "found": true, "trial": w.trial, "tv_gap": w.tv_gap,
                        "a": label(&w.triple.a), "s": label(&w.triple.s), "b": label(&w.triple.b)})
                }
                None => {
                    out.say(format!("no witness in {trials} trials"));
                    serde_json::json!({"suite": "search", "found": false, "trials": trials})
                }
            };
            if let Some(want) = expect_found {
                out.check(Check::new(
                    "witness search",
                    found.is_some() == want,
                    format!("expected found={want}, got {}", found.is_some()),
                ));
            }
            out.add(Artifact::json("hc_report.json", &report));
        }
        HcLabParams::Specification { set, models, states } => {
            let g = cfg.finite_graph()?;
            let a = set_of(&g, &set)?;
            let (mut worst, mut zero_rows): (f64, usize) = (0.0, 0);
            for _ in 0..models {
                let m = FactorModel::random(&g, states, 2, 1.0, &mut rng)?;
                let check = conditional_specification(&m, &a)?;
                worst = worst.max(check.max_difference);
                zero_rows += check.zero_probability_rows;
            }
            out.say(format!("{models} models, boundary {}", join(&names(&g, &g.boundary2(&a)?))));
            out.check(Check::new(
                "local and joint kernels agree",
                worst <= MRF_TOL,
                format!("max difference {worst:.2e}"),
            ));
            out.add(Artifact::json(
                "hc_report.json",
                &serde_json::json!({"suite": "specification", "set": names(&g, &a), "models": models,
                    "max_difference": worst, "zero_probability_rows": zero_rows}),
            ));
        }
    }
    Ok(out)
}
