//! Acceptance suite: one PASS/FAIL line per criterion with its measured
//! statistic, wall time and time budget. Exits non-zero when any
//! criterion fails. `ACCEPTANCE_ONLY=3,7` restricts the run.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netdiff_core::coeff::{DiffusionSpec, DiffusionTable, DriftSpec, DriftTable};
use netdiff_core::gaussian::{
    build_linear_system, conditional_covariance, conditional_law, covariance_at, path_covariance,
    path_precision_blocks, precision_at, stationary_precision, GaussianSystem, Scheme, TimeGrid,
};
use netdiff_core::graph::generators::{grid, path};
use netdiff_core::graph::{Graph, VertexSet, ZLine};
use netdiff_core::hc::{
    check_mrf_bruteforce, conditional_specification, factorize_positive_2mrf, joint_table, project_to_truncation,
    projection_counterexample_search, small_connected_graphs, FactorModel,
};
use netdiff_core::sde::{
    girsanov_weights, simulate, simulate_driftless, truncation_convergence, ConvergenceStudy, InitialLaw, Recording,
    Simulation,
};
use netdiff_core::stats::mean_and_se;

const GOLDEN_COV: [[f64; 5]; 5] = [
    [0.3611, 0.2388, 0.1435, 0.0767, 0.0324],
    [0.2388, 0.5046, 0.3156, 0.1759, 0.0767],
    [0.1435, 0.3156, 0.5370, 0.3156, 0.1435],
    [0.0767, 0.1759, 0.3156, 0.5046, 0.2388],
    [0.0324, 0.0767, 0.1435, 0.2388, 0.3611],
];
const GOLDEN_COND_13_GIVEN_2: [[f64; 2]; 2] = [[0.2481, -0.0058], [-0.0058, 0.3397]];
const GOLDEN_COND_14_GIVEN_23: [[f64; 2]; 2] = [[0.2480, -0.0030], [-0.0030, 0.3189]];
const LINEAR_DRIFT: &str = "nbr_sum(y) - 2*x";

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn p5_standard() -> GaussianSystem {
    build_linear_system(&path(5), -2.0)
}

fn linear_tables() -> (DriftTable, DiffusionTable) {
    (
        DriftTable::homogeneous(DriftSpec::parse(LINEAR_DRIFT).expect("drift parses")),
        DiffusionTable::homogeneous(DiffusionSpec::identity(1)),
    )
}

fn max_dev<const N: usize>(m: &DMatrix<f64>, golden: &[[f64; N]; N]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..N {
        for j in 0..N {
            worst = worst.max((m[(i, j)] - golden[i][j]).abs());
        }
    }
    worst
}

fn gaussian_golden() -> Outcome {
    let cov = covariance_at(&p5_standard(), 2.0).expect("covariance").sigma;
    let full = max_dev(&cov, &GOLDEN_COV);
    let c13 = conditional_covariance(&cov, &[0, 2], &[1]).expect("conditional");
    let c14 = conditional_covariance(&cov, &[0, 3], &[1, 2]).expect("conditional");
    let d13 = max_dev(&c13, &GOLDEN_COND_13_GIVEN_2);
    let d14 = max_dev(&c14, &GOLDEN_COND_14_GIVEN_23);
    outcome(
        full < 1e-4 && d13 < 1e-4 && d14 < 1e-4,
        format!("max dev covariance {full:.2e}, Cov(1,3|2) {d13:.2e}, Cov(1,4|2,3) {d14:.2e} (tol 1e-4)"),
    )
}

fn zero_diagonal() -> Outcome {
    let sys = build_linear_system(&path(5), 0.0);
    let mut worst_zero: f64 = 0.0;
    for t in [0.5, 1.0, 2.0, 5.0] {
        let q = precision_at(&sys, t, 1e-12).expect("precision").q;
        worst_zero = worst_zero.max(q[(0, 3)].abs()).max(q[(1, 4)].abs());
    }
    let q = precision_at(&sys, 2.0, 1e-12).expect("precision").q;
    let mut smallest_other = f64::INFINITY;
    for i in 0..5 {
        for j in i + 1..5 {
            if (i, j) != (0, 3) && (i, j) != (1, 4) {
                smallest_other = smallest_other.min(q[(i, j)].abs());
            }
        }
    }
    outcome(
        worst_zero < 1e-10 && smallest_other > 1e-6,
        format!("max |Q14|,|Q25| over t {worst_zero:.2e} (tol 1e-10); min other |Q_ij| at t=2 {smallest_other:.2e} (> 1e-6)"),
    )
}

fn sup_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn long_time_precision() -> Outcome {
    let sys = p5_standard();
    let limit = stationary_precision(&sys);
    let errs: Vec<f64> = [5.0, 10.0, 20.0]
        .iter()
        .map(|&t| sup_norm(&(precision_at(&sys, t, 1e-12).expect("precision").q - &limit)))
        .collect();
    let literal = sup_norm(&(precision_at(&sys, 20.0, 1e-12).expect("precision").q - sys.drift() * 2.0));
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    outcome(
        errs[2] < 1e-3 && monotone,
        format!(
            "|Q(t)+2L| at t=5,10,20: {:.2e}, {:.2e}, {:.2e} (tol 1e-3, decreasing); limit is -2L, |Q(20)-2L| = {literal:.3}",
            errs[0], errs[1], errs[2]
        ),
    )
}

/// Nonisomorphic trees on `n` vertices from Prüfer codes, deduplicated by
/// the least rooted canonical string over all roots.
fn all_trees(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n == 1 {
        return vec![Vec::new()];
    }
    if n == 2 {
        return vec![vec![(0, 1)]];
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let total = n.pow((n - 2) as u32);
    for code_idx in 0..total {
        let mut code = Vec::with_capacity(n - 2);
        let mut r = code_idx;
        for _ in 0..n - 2 {
            code.push(r % n);
            r /= n;
        }
        let edges = prufer_edges(&code, n);
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        let canon = (0..n).map(|root| rooted_code(&adj, root, usize::MAX)).min().expect("nonempty");
        if seen.insert(canon) {
            out.push(edges);
        }
    }
    out
}

fn prufer_edges(code: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1; n];
    for &c in code {
        degree[c] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &c in code {
        let leaf = (0..n).find(|&v| degree[v] == 1).expect("a leaf exists");
        edges.push((leaf.min(c), leaf.max(c)));
        degree[leaf] -= 1;
        degree[c] -= 1;
    }
    let last: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push((last[0], last[1]));
    edges
}

fn rooted_code(adj: &[Vec<usize>], v: usize, parent: usize) -> String {
    let mut kids: Vec<String> = adj[v].iter().filter(|&&u| u != parent).map(|&u| rooted_code(adj, u, v)).collect();
    kids.sort();
    format!("({})", kids.concat())
}

fn path_space_2mrf() -> Outcome {
    let sys = p5_standard();
    let grid8 = TimeGrid::uniform(2.0, 7).expect("grid");
    let stacked = path_covariance(&sys, &grid8, Scheme::Euler, None).expect("stacked");
    let blocks = path_precision_blocks(&stacked).expect("blocks");
    let rel = |u: usize, v: usize| blocks.iter().find(|b| b.u == u && b.v == v).expect("pair").relative;
    let far = [rel(0, 3), rel(0, 4), rel(1, 4)];
    let near = rel(0, 2);
    let p5_ok = far.iter().all(|&x| x < 1e-8) && near > 1e-3;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut systems, mut violations) = (0, 0);
    let mut worst_far: f64 = 0.0;
    for n in 2..=8 {
        for edges in all_trees(n) {
            let labels: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
            let g = Graph::new(labels.clone(), &edges).expect("tree");
            let mut l = DMatrix::zeros(n, n);
            for &(u, v) in &edges {
                l[(u, v)] = rng.random_range(-1.0..1.0);
                l[(v, u)] = rng.random_range(-1.0..1.0);
            }
            for v in 0..n {
                l[(v, v)] = -rng.random_range(0.5..2.0);
            }
            let sys = GaussianSystem::custom(l, labels).expect("system");
            let stacked = path_covariance(&sys, &grid8, Scheme::Euler, None).expect("stacked");
            let dist = g.distance_matrix();
            for b in path_precision_blocks(&stacked).expect("blocks") {
                if dist[b.u][b.v].is_some_and(|d| d >= 3) {
                    worst_far = worst_far.max(b.relative);
                    if b.relative >= 1e-8 {
                        violations += 1;
                    }
                }
            }
            systems += 1;
        }
    }
    outcome(
        p5_ok && violations == 0,
        format!(
            "P5 blocks (1,4),(1,5),(2,5): {:.1e}, {:.1e}, {:.1e} (< 1e-8); (1,3): {near:.2e} (> 1e-3); {systems} random tree systems, worst far block {worst_far:.1e}, {violations} violations",
            far[0], far[1], far[2]
        ),
    )
}

fn girsanov_mean() -> Outcome {
    let (drift, diffusion) = linear_tables();
    let mut lines = Vec::new();
    let mut all = true;
    for seed in 1..=5 {
        let sim =
            Simulation::new(&path(3), &drift, &diffusion, TimeGrid::uniform(1.0, 50).expect("grid"), 100_000, seed)
                .expect("simulation")
                .with_initial(InitialLaw::normal(0.0, 1.0));
        let ens = simulate_driftless(&sim).expect("driftless run");
        let w = girsanov_weights(&ens, &sim).expect("weights").weights();
        let (mean, se) = mean_and_se(&w);
        let ok = (mean - 1.0).abs() <= 3.0 * se;
        all &= ok;
        lines.push(format!("seed {seed}: {mean:.4}±{se:.4}"));
    }
    outcome(all, format!("weight means (3σ around 1): {}", lines.join(", ")))
}

fn monte_carlo_vs_exact() -> Outcome {
    let (drift, diffusion) = linear_tables();
    let run = |steps: usize| {
        let sim =
            Simulation::new(&path(5), &drift, &diffusion, TimeGrid::uniform(2.0, steps).expect("grid"), 200_000, 11)
                .expect("simulation")
                .with_recording(Recording::Endpoints);
        let ens = simulate(&sim).expect("run");
        ens.sample_covariance(1, 0)
    };
    let (cov, se) = run(1 << 10);
    let mut worst_ratio: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    let mut ok = true;
    for i in 0..5 {
        for j in 0..5 {
            let dev = (cov[(i, j)] - GOLDEN_COV[i][j]).abs();
            ok &= dev <= 3.0 * se[(i, j)] + 5e-3;
            worst_abs = worst_abs.max(dev);
            worst_ratio = worst_ratio.max(dev / (3.0 * se[(i, j)] + 5e-3));
        }
    }
    let (coarse, _) = run(1 << 9);
    let step_effect = sup_norm(&(&coarse - &cov));
    outcome(
        ok,
        format!(
            "max |Ĉ-C| {worst_abs:.2e}, worst dev/(3se+5e-3) {worst_ratio:.2}; |Ĉ(2^-9)-Ĉ(2^-10)| {step_effect:.2e}"
        ),
    )
}

fn hammersley_clifford() -> Outcome {
    let graphs = small_connected_graphs(6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut models, mut worst_ci, mut worst_rt): (usize, f64, f64) = (0, 0.0, 0.0);
    for g in &graphs {
        for _ in 0..100 {
            let m = FactorModel::random(g, 2, 2, 1.0, &mut rng).expect("model");
            let t = joint_table(&m).expect("table");
            worst_ci = worst_ci.max(check_mrf_bruteforce(&t, g, 2).expect("check").max_violation);
            let back = joint_table(&factorize_positive_2mrf(&t, g).expect("factorization")).expect("table");
            worst_rt = worst_rt.max(t.tv(&back));
            models += 1;
        }
    }
    outcome(
        worst_ci < 1e-10 && worst_rt < 1e-10,
        format!(
            "{} graphs, {models} models: max CI violation {worst_ci:.1e}, max round-trip TV {worst_rt:.1e} (tol 1e-10)",
            graphs.len()
        ),
    )
}

fn projection_lemma() -> Outcome {
    let g = path(9).with_root("5").expect("root");
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = FactorModel::random(&g, 2, 2, 1.0, &mut rng).expect("model");
    let projected = project_to_truncation(&m, 4).expect("projection");
    let vn = g.ball(4).expect("ball").to_vec();
    let exact = joint_table(&m).expect("table").marginal(&vn);
    let proj_table = joint_table(&projected).expect("table");
    let tv = exact.tv(&proj_table);
    let markov = check_mrf_bruteforce(&proj_table, projected.graph(), 2).expect("check");

    // a truncation that actually drops vertices
    let g13 = path(13).with_root("7").expect("root");
    let m13 = FactorModel::random(&g13, 2, 2, 1.0, &mut rng).expect("model");
    let p13 = project_to_truncation(&m13, 4).expect("projection");
    let exact13 = joint_table(&m13).expect("table").marginal(&g13.ball(4).expect("ball").to_vec());
    let t13 = joint_table(&p13).expect("table");
    let tv13 = exact13.tv(&t13);
    let markov13 = check_mrf_bruteforce(&t13, p13.graph(), 2).expect("check");

    let g33 = grid(3, 3);
    let row = g33.vertex_set(&["1_0", "1_1", "1_2"]).expect("row");
    let mut found = Vec::new();
    for seed in 1..=5 {
        let w = projection_counterexample_search(&g33, &row, 200, seed, 1, 1e-3).expect("search");
        found.push(
            w.map(|w| format!("seed {seed}: trial {} gap {:.3}", w.trial, w.tv_gap))
                .unwrap_or(format!("seed {seed}: none")),
        );
    }
    let hits = found.iter().filter(|s| !s.ends_with("none")).count();
    outcome(
        tv < 1e-10 && markov.holds && tv13 < 1e-10 && markov13.holds && hits >= 3,
        format!(
            "P9 n=4 TV {tv:.1e}, 2MRF on G_4 {}; P13 n=4 TV {tv13:.1e}, 2MRF {}; grid witnesses {hits}/5 [{}]",
            markov.holds,
            markov13.holds,
            found.join("; ")
        ),
    )
}

fn specification_insensitivity() -> Outcome {
    let g = path(7);
    let mut h_edges: Vec<(usize, usize)> = (0..6).map(|i| (i, i + 1)).collect();
    h_edges.extend([(0, 6), (0, 7), (6, 7)]);
    let h = Graph::new((1..=8).map(|i| i.to_string()).collect::<Vec<_>>(), &h_edges).expect("graph");
    let a = VertexSet::singleton(3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mg = FactorModel::random(&g, 2, 2, 1.0, &mut rng).expect("model");
    let mh_random = FactorModel::random(&h, 2, 2, 1.0, &mut rng).expect("model");
    let mut factors: BTreeMap<Vec<usize>, Vec<f64>> =
        mh_random.factors().iter().filter(|(k, _)| !k.contains(&3)).map(|(k, t)| (k.clone(), t.clone())).collect();
    for (k, t) in mg.factors().iter().filter(|(k, _)| k.contains(&3)) {
        factors.insert(k.clone(), t.clone());
    }
    let mut base: Vec<Vec<f64>> =
        (0..8).map(|_| vec![rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)]).collect();
    let mut base_g: Vec<Vec<f64>> =
        (0..7).map(|_| vec![rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)]).collect();
    base[3] = vec![1.3, 0.7];
    base_g[3] = vec![1.3, 0.7];
    let mg = FactorModel::new(g.clone(), 2, mg.factors().clone().into_iter().collect(), Some(base_g)).expect("model");
    let mh = FactorModel::new(h.clone(), 2, factors.into_iter().collect(), Some(base)).expect("model");
    let kg = conditional_specification(&mg, &a).expect("kernel");
    let kh = conditional_specification(&mh, &a).expect("kernel");
    let discrete = kg.exact.max_difference(&kh.exact).unwrap_or(f64::INFINITY);
    let joint_gap = joint_table(&mg)
        .expect("table")
        .marginal(&[0, 1, 2, 3, 4, 5, 6])
        .tv(&joint_table(&mh).expect("table").marginal(&[0, 1, 2, 3, 4, 5, 6]));

    // Gaussian: rows of vertices 1 and 7 differ, A = {4}, ∂²A = {2,3,5,6}
    let base_l = build_linear_system(&g, -2.0).drift().clone();
    let mut other = base_l.clone();
    other[(0, 0)] = -3.5;
    other[(0, 1)] = 0.4;
    other[(6, 6)] = -1.2;
    other[(6, 5)] = 2.0;
    let grid8 = TimeGrid::uniform(2.0, 7).expect("grid");
    let labels = g.labels().to_vec();
    let law = |l: DMatrix<f64>| {
        let sys = GaussianSystem::custom(l, labels.clone()).expect("system");
        let st = path_covariance(&sys, &grid8, Scheme::Euler, None).expect("stacked");
        conditional_law(&st.matrix, &st.indices_of(&[3]), &st.indices_of(&[1, 2, 4, 5])).expect("law")
    };
    let (l1, l2) = (law(base_l), law(other));
    let gauss = sup_norm(&(&l1.regression - &l2.regression)).max(sup_norm(&(&l1.covariance - &l2.covariance)));
    outcome(
        discrete < 1e-10 && gauss < 1e-8,
        format!(
            "discrete kernel gap {discrete:.1e} (tol 1e-10; joint laws differ by TV {joint_gap:.3}); Gaussian conditional law gap {gauss:.1e} (tol 1e-8)"
        ),
    )
}

fn truncation_trend() -> Outcome {
    let (drift, diffusion) = linear_tables();
    let mut decreasing = 0;
    let mut lines = Vec::new();
    for seed in 1..=5 {
        let study = ConvergenceStudy {
            graph: &ZLine,
            window: vec!["-1".into(), "0".into(), "1".into()],
            horizon: 1.0,
            steps: 100,
            levels: vec![4, 6, 8, 10],
            replicas: 4000,
            seed,
            drift: drift.clone(),
            diffusion: diffusion.clone(),
            initial: InitialLaw::normal(0.0, 1.0),
        };
        let rows = truncation_convergence(&study).expect("study");
        let ed: Vec<f64> = rows.iter().map(|r| r.energy_distance).collect();
        if ed[0] > ed[1] && ed[1] > ed[2] {
            decreasing += 1;
        }
        lines.push(format!("seed {seed}: {:.2e} > {:.2e} > {:.2e}", ed[0], ed[1], ed[2]));
    }
    outcome(decreasing >= 3, format!("{decreasing}/5 seeds decreasing over n=4,6,8 [{}]", lines.join("; ")))
}

fn main() {
    let only: Option<BTreeSet<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    type Check = fn() -> Outcome;
    let criteria: [(usize, &str, u64, Check); 10] = [
        (1, "gaussian golden numbers", 1, gaussian_golden),
        (2, "zero-diagonal precision zeros", 1, zero_diagonal),
        (3, "long-time precision limit", 1, long_time_precision),
        (4, "path-space 2MRF of the Euler chain", 30, path_space_2mrf),
        (5, "girsanov martingale mean", 60, girsanov_mean),
        (6, "monte carlo vs exact covariance", 300, monte_carlo_vs_exact),
        (7, "hammersley-clifford brute force", 120, hammersley_clifford),
        (8, "projection lemma", 120, projection_lemma),
        (9, "specification insensitivity", 60, specification_insensitivity),
        (10, "truncation convergence trend", 300, truncation_trend),
    ];
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let out = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let passed = out.passed && in_time;
        failed += usize::from(!passed);
        println!(
            "criterion {id:>2} {} {name}: {} [{:.2}s of {budget}s]",
            if passed { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
