use nalgebra::DMatrix;
use proptest::prelude::*;

use netdiff_core::gaussian::{
    build_linear_system, conditional_covariance, covariance_at, covariance_by_quadrature, path_covariance,
    path_precision_blocks, precision_at, GaussianSystem, Scheme, TimeGrid,
};
use netdiff_core::graph::generators::{cycle, grid, path};
use netdiff_core::graph::Graph;

fn sup(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn systems() -> Vec<GaussianSystem> {
    let mut asym = build_linear_system(&path(4), -2.0).drift().clone();
    asym[(0, 1)] = 0.3;
    asym[(2, 1)] = -0.7;
    vec![
        build_linear_system(&path(5), -2.0),
        build_linear_system(&path(5), 0.0),
        build_linear_system(&cycle(6), -3.0),
        build_linear_system(&grid(2, 3), -1.0),
        GaussianSystem::custom(asym, (1..=4).map(|i| i.to_string()).collect()).unwrap(),
    ]
}

#[test]
fn covariance_times_precision_is_identity() {
    for sys in systems() {
        for t in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let s = covariance_at(&sys, t).unwrap().sigma;
            let q = precision_at(&sys, t, 1e-12).unwrap().q;
            let n = sys.len();
            assert!(sup(&(&s * &q - DMatrix::identity(n, n))) < 1e-8, "t={t}");
        }
    }
}

#[test]
fn covariance_solves_the_lyapunov_equation() {
    let h = 1e-4;
    for sys in systems() {
        let l = sys.drift();
        for t in [0.5, 1.0, 2.0] {
            let plus = covariance_at(&sys, t + h).unwrap().sigma;
            let minus = covariance_at(&sys, t - h).unwrap().sigma;
            let s = covariance_at(&sys, t).unwrap().sigma;
            let derivative = (plus - minus) / (2.0 * h);
            let n = sys.len();
            let rhs = l * &s + &s * l.transpose() + DMatrix::identity(n, n);
            let rel = sup(&(&derivative - &rhs)) / sup(&rhs);
            assert!(rel < 1e-5, "t={t}: {rel:.2e}");
        }
    }
}

#[test]
fn quadrature_agrees_with_closed_form() {
    for sys in systems() {
        let a = covariance_at(&sys, 1.5).unwrap().sigma;
        let b = covariance_by_quadrature(&sys, 1.5, 1e-11).unwrap().sigma;
        assert!(sup(&(a - b)) < 1e-8);
    }
}

#[test]
fn conditioning_on_the_rest_inverts_the_precision_diagonal() {
    for sys in systems() {
        let s = covariance_at(&sys, 2.0).unwrap().sigma;
        let q = precision_at(&sys, 2.0, 1e-12).unwrap().q;
        let n = sys.len();
        for i in 0..n {
            let rest: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let c = conditional_covariance(&s, &[i], &rest).unwrap();
            assert!((c[(0, 0)] - 1.0 / q[(i, i)]).abs() < 1e-10 * c[(0, 0)].max(1.0));
        }
    }
}

fn prufer_tree(code: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1; n];
    for &c in code {
        degree[c] += 1;
    }
    let mut edges = Vec::new();
    for &c in code {
        let leaf = (0..n).find(|&v| degree[v] == 1).unwrap();
        edges.push((leaf.min(c), leaf.max(c)));
        degree[leaf] -= 1;
        degree[c] -= 1;
    }
    let last: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push((last[0], last[1]));
    edges
}

fn tree_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (3usize..=8)
        .prop_flat_map(|n| proptest::collection::vec(0..n, n - 2).prop_map(move |code| (n, prufer_tree(&code, n))))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn euler_chain_blocks_vanish_beyond_distance_two(
        (n, edges) in tree_strategy(),
        weights in proptest::collection::vec(-1.0f64..1.0, 16),
        diag in proptest::collection::vec(0.3f64..2.0, 8),
        steps in 2usize..7,
    ) {
        let labels: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
        let g = Graph::new(labels.clone(), &edges).unwrap();
        let mut l = DMatrix::zeros(n, n);
        for (k, &(u, v)) in edges.iter().enumerate() {
            l[(u, v)] = weights[2 * k];
            l[(v, u)] = weights[2 * k + 1];
        }
        for v in 0..n {
            l[(v, v)] = -diag[v];
        }
        let sys = GaussianSystem::custom(l, labels).unwrap();
        let st = path_covariance(&sys, &TimeGrid::uniform(1.5, steps).unwrap(), Scheme::Euler, None).unwrap();
        let dist = g.distance_matrix();
        for b in path_precision_blocks(&st).unwrap() {
            if dist[b.u][b.v].unwrap() >= 3 {
                prop_assert!(b.relative < 1e-8, "{}-{}: {:.2e}", b.label_u, b.label_v, b.relative);
            }
        }
    }
}

#[test]
fn exact_scheme_marginals_match_closed_form() {
    let sys = build_linear_system(&path(4), -2.0);
    let grid = TimeGrid::uniform(2.0, 5).unwrap();
    let st = path_covariance(&sys, &grid, Scheme::Exact, None).unwrap();
    let k = st.n_times();
    for (j, &t) in st.times.iter().enumerate() {
        let idx: Vec<usize> = (0..4).map(|v| v * k + j).collect();
        let block = DMatrix::from_fn(4, 4, |a, b| st.matrix[(idx[a], idx[b])]);
        assert!(sup(&(block - covariance_at(&sys, t).unwrap().sigma)) < 1e-10);
    }
}
