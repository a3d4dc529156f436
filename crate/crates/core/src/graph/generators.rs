//! Named finite graph families.

use super::Graph;

/// Path `1 – 2 – … – n`.
pub fn path(n: usize) -> Graph {
    let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    Graph::new((1..=n).map(|i| i.to_string()), &edges).expect("path is simple")
}

/// Cycle `1 – 2 – … – n – 1`; for `n < 3` this degenerates to a path.
pub fn cycle(n: usize) -> Graph {
    let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    if n >= 3 {
        edges.push((n - 1, 0));
    }
    Graph::new((1..=n).map(|i| i.to_string()), &edges).expect("cycle is simple")
}

/// Complete graph on labels `1..=n`.
pub fn complete(n: usize) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            edges.push((i, j));
        }
    }
    Graph::new((1..=n).map(|i| i.to_string()), &edges).expect("complete graph is simple")
}

/// `rows × cols` nearest-neighbor lattice with labels `r_c` (zero based).
pub fn grid(rows: usize, cols: usize) -> Graph {
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    let labels = (0..rows).flat_map(|r| (0..cols).map(move |c| format!("{r}_{c}")));
    Graph::new(labels, &edges).expect("grid is simple")
}

/// Complete `branching`-ary tree of the given depth, rooted at `0`, labels
/// in BFS order.
pub fn tree(branching: usize, depth: usize) -> Graph {
    rooted_tree(|_| branching, depth)
}

/// Tree in which every internal vertex has degree `degree`: the root has
/// `degree` children, other internal vertices `degree - 1`.
pub fn regular_tree(degree: usize, depth: usize) -> Graph {
    rooted_tree(|level| if level == 0 { degree } else { degree.saturating_sub(1) }, depth)
}

fn rooted_tree(children: impl Fn(usize) -> usize, depth: usize) -> Graph {
    let mut level_of = vec![0usize];
    let mut edges = Vec::new();
    let mut head = 0;
    while head < level_of.len() {
        let level = level_of[head];
        if level < depth {
            for _ in 0..children(level) {
                edges.push((head, level_of.len()));
                level_of.push(level + 1);
            }
        }
        head += 1;
    }
    Graph::new((0..level_of.len()).map(|i| i.to_string()), &edges)
        .expect("tree is simple")
        .with_root_index(0)
        .expect("root exists")
}
