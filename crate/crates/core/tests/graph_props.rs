use proptest::prelude::*;

use netdiff_core::graph::generators::{cycle, grid, path, regular_tree};
use netdiff_core::graph::{materialize_ball, Graph, VertexSet, ZSquare};

fn random_graph(n: usize, mask: u64) -> Graph {
    let mut edges = Vec::new();
    let mut bit = 0;
    for u in 0..n {
        for v in u + 1..n {
            if mask >> (bit % 64) & 1 == 1 {
                edges.push((u, v));
            }
            bit += 1;
        }
    }
    Graph::new((0..n).map(|i| format!("v{i}")).collect::<Vec<_>>(), &edges).unwrap()
}

fn subset(n: usize, mask: u64) -> VertexSet {
    (0..n).filter(|v| mask >> v & 1 == 1).collect()
}

fn sets_of(mut cliques: Vec<VertexSet>) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = cliques.drain(..).map(|c| c.to_vec()).collect();
    out.sort();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn second_boundary_is_square_graph_boundary(n in 1usize..=10, mask in any::<u64>()) {
        let g = random_graph(n, mask);
        let sq = g.square_graph();
        for a in 1u64..(1 << n) {
            let a = subset(n, a);
            prop_assert_eq!(g.boundary2(&a).unwrap(), sq.boundary(&a).unwrap());
        }
    }

    #[test]
    fn second_order_cliques_are_square_graph_cliques(n in 1usize..=8, mask in any::<u64>()) {
        let g = random_graph(n, mask);
        prop_assert_eq!(sets_of(g.cliques(2).unwrap()), sets_of(g.square_graph().cliques(1).unwrap()));
    }

    #[test]
    fn boundary_identities(n in 1usize..=9, mask in any::<u64>(), amask in 1u64..512) {
        let g = random_graph(n, mask);
        let a = subset(n, amask);
        prop_assume!(!a.is_empty());
        let d1 = g.boundary(&a).unwrap();
        let d2 = g.boundary2(&a).unwrap();
        prop_assert!(d1.is_disjoint(&a));
        prop_assert!(d1.is_subset(&d2));
        let closed = a.union(&d1);
        prop_assert_eq!(d2, d1.union(&g.boundary(&closed).unwrap()));
        for v in g.boundary_of_order(&a, 2).unwrap().iter() {
            let d = a.iter().filter_map(|u| g.distance(u, v).unwrap()).min().unwrap();
            prop_assert!(d == 1 || d == 2);
        }
    }

    #[test]
    fn cutset_agrees_with_path_search(n in 2usize..=7, mask in any::<u64>(), s1 in any::<u64>()) {
        let g = random_graph(n, mask);
        let labels: Vec<usize> = (0..n).map(|v| ((s1 >> (2 * v)) & 3) as usize).collect();
        let pick = |k: usize| -> VertexSet { (0..n).filter(|&v| labels[v] == k).collect() };
        let (a, b, s) = (pick(0), pick(1), pick(2));
        prop_assume!(!a.is_empty() && !b.is_empty());
        prop_assert_eq!(g.is_2cutset(&a, &b, &s).unwrap(), g.is_2cutset_by_paths(&a, &b, &s).unwrap());
    }
}

fn check_truncation(g: &Graph, n: usize) {
    let gn = g.augmented_truncation(n).unwrap();
    let vn = g.ball(n).unwrap().to_vec();
    for (i, &u) in vn.iter().enumerate() {
        assert_eq!(gn.label(i), g.label(u));
        for (j, &v) in vn.iter().enumerate() {
            let dg = g.distance(u, v).unwrap().unwrap();
            let dn = gn.distance(i, j).unwrap().unwrap();
            assert!(dn <= dg, "{} {}: {dn} > {dg}", g.label(u), g.label(v));
        }
    }
    // the annulus is a clique in G_n, so enumerating its cliques is exponential
    for k in g.cliques(2).unwrap() {
        if k.iter().all(|v| vn.contains(&v)) {
            let mapped: VertexSet = k.iter().map(|v| vn.iter().position(|&w| w == v).unwrap()).collect();
            assert!(gn.is_clique(&mapped, 2).unwrap(), "{:?}", mapped.to_vec());
        }
    }
}

#[test]
fn truncation_shortens_distances_and_keeps_cliques() {
    check_truncation(&path(11).with_root("6").unwrap(), 4);
    check_truncation(&cycle(12).with_root("1").unwrap(), 5);
    check_truncation(&grid(7, 7).with_root("3_3").unwrap(), 4);
    check_truncation(&regular_tree(3, 5).with_root_index(0).unwrap(), 4);
    check_truncation(&materialize_ball(&ZSquare, 6), 5);
}

#[test]
fn edge_list_round_trip() {
    for g in [path(6), cycle(5), grid(3, 4), regular_tree(3, 2)] {
        let back = Graph::parse_edge_list(&g.to_edge_list()).unwrap();
        assert!(back.same_labeled_graph(&g));
    }
}
