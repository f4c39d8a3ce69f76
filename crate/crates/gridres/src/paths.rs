//! Simple-path enumeration between node pairs, in increasing weighted-length
//! order.
//!
//! Uses best-first expansion of partial paths: with nonnegative edge weights,
//! complete paths pop off the frontier in nondecreasing weight, so the first
//! `max_paths` completions are exactly the shortest ones and enumeration can
//! stop there instead of materializing the (potentially exponential) full set.

use crate::grid::Grid;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Enumeration caps. `max_hops` of `None` means the grid's node count (a
/// simple path can never have more edges than that anyway).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathCaps {
    pub max_paths: Option<usize>,
    pub max_hops: Option<usize>,
}

impl Default for PathCaps {
    fn default() -> Self {
        PathCaps { max_paths: Some(100), max_hops: None }
    }
}

impl PathCaps {
    pub fn unbounded() -> Self {
        PathCaps { max_paths: None, max_hops: None }
    }
}

/// A simple path: node indices, the edge indices between them, total edge
/// weight, and hop count.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplePath {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
    pub weight: f64,
}

impl SimplePath {
    pub fn hops(&self) -> usize {
        self.edges.len()
    }
}

struct Frontier {
    nodes: Vec<usize>,
    edges: Vec<usize>,
    weight: f64,
}

impl Frontier {
    fn key(&self) -> (f64, usize, &[usize]) {
        (self.weight, self.edges.len(), &self.nodes)
    }
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Frontier {}
impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Frontier {
    // reversed so the BinaryHeap pops the lightest entry; ties broken by hop
    // count then node sequence for a deterministic order
    fn cmp(&self, other: &Self) -> Ordering {
        let (wa, ha, na) = self.key();
        let (wb, hb, nb) = other.key();
        wb.total_cmp(&wa).then_with(|| hb.cmp(&ha)).then_with(|| nb.cmp(na))
    }
}

/// Enumerates simple paths from `from` to `to`, sorted by ascending weighted
/// length. Returns an empty list when the pair is disconnected or identical.
pub fn simple_paths(g: &Grid, from: usize, to: usize, caps: &PathCaps) -> Vec<SimplePath> {
    let max_paths = caps.max_paths.unwrap_or(usize::MAX);
    let max_hops = caps.max_hops.unwrap_or(g.node_count());
    if from == to || max_paths == 0 || g.node_count() == 0 {
        return Vec::new();
    }
    let adj = g.adjacency_list();
    let mut heap = BinaryHeap::new();
    heap.push(Frontier { nodes: vec![from], edges: vec![], weight: 0.0 });
    let mut out = Vec::new();
    while let Some(partial) = heap.pop() {
        let last = *partial.nodes.last().expect("frontier paths are nonempty");
        if last == to {
            out.push(SimplePath { nodes: partial.nodes, edges: partial.edges, weight: partial.weight });
            if out.len() >= max_paths {
                break;
            }
            continue;
        }
        if partial.edges.len() >= max_hops {
            continue;
        }
        for &(nbr, edge, w) in &adj[last] {
            if partial.nodes.contains(&nbr) {
                continue;
            }
            let mut nodes = partial.nodes.clone();
            nodes.push(nbr);
            let mut edges = partial.edges.clone();
            edges.push(edge);
            heap.push(Frontier { nodes, edges, weight: partial.weight + w });
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::grid::{EdgeStatus, Grid, NodeKind};

    fn grid_from(edges: &[(&str, &str, &str, f64)], nodes: &[(&str, NodeKind)]) -> Grid {
        Grid::new(
            nodes.iter().map(|(id, k)| (id.to_string(), *k, 1.0)).collect(),
            edges
                .iter()
                .map(|(id, u, v, w)| {
                    (id.to_string(), u.to_string(), v.to_string(), *w, EdgeStatus::Existing)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_edge_gives_one_path() {
        let g = grid_from(
            &[("e0", "l", "s", 3.0)],
            &[("l", NodeKind::Load), ("s", NodeKind::Substation)],
        );
        let paths = simple_paths(&g, g.node_idx("l").unwrap(), g.node_idx("s").unwrap(), &PathCaps::unbounded());
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].weight, 3.0);
        assert_eq!(paths[0].hops(), 1);
    }

    #[test]
    fn triangle_paths_come_out_weight_sorted() {
        let g = grid_from(
            &[("e0", "l", "s", 5.0), ("e1", "l", "a", 1.0), ("e2", "a", "s", 1.0)],
            &[("l", NodeKind::Load), ("a", NodeKind::Load), ("s", NodeKind::Substation)],
        );
        let (l, s, a) =
            (g.node_idx("l").unwrap(), g.node_idx("s").unwrap(), g.node_idx("a").unwrap());
        let paths = simple_paths(&g, l, s, &PathCaps::unbounded());
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].nodes, vec![l, a, s]);
        assert_eq!(paths[0].weight, 2.0);
        assert_eq!(paths[1].nodes, vec![l, s]);
        assert_eq!(paths[1].weight, 5.0);
    }

    #[test]
    fn disconnected_pair_yields_empty_list() {
        let g = grid_from(
            &[("e0", "a", "b", 1.0)],
            &[
                ("a", NodeKind::Load),
                ("b", NodeKind::Load),
                ("s", NodeKind::Substation),
            ],
        );
        let paths =
            simple_paths(&g, g.node_idx("a").unwrap(), g.node_idx("s").unwrap(), &PathCaps::unbounded());
        assert!(paths.is_empty());
    }

    #[test]
    fn max_paths_cap_keeps_the_shortest() {
        // square with a heavy chord: l-s direct (10), l-a-s (2), l-b-s (4)
        let g = grid_from(
            &[
                ("e0", "l", "s", 10.0),
                ("e1", "l", "a", 1.0),
                ("e2", "a", "s", 1.0),
                ("e3", "l", "b", 2.0),
                ("e4", "b", "s", 2.0),
            ],
            &[
                ("l", NodeKind::Load),
                ("a", NodeKind::Load),
                ("b", NodeKind::Load),
                ("s", NodeKind::Substation),
            ],
        );
        let caps = PathCaps { max_paths: Some(2), max_hops: None };
        let paths = simple_paths(&g, g.node_idx("l").unwrap(), g.node_idx("s").unwrap(), &caps);
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].weight, 2.0);
        assert_eq!(paths[1].weight, 4.0);
    }

    #[test]
    fn max_hops_prunes_long_routes() {
        let g = grid_from(
            &[("e0", "l", "a", 1.0), ("e1", "a", "s", 1.0), ("e2", "l", "s", 9.0)],
            &[("l", NodeKind::Load), ("a", NodeKind::Load), ("s", NodeKind::Substation)],
        );
        let caps = PathCaps { max_paths: None, max_hops: Some(1) };
        let paths = simple_paths(&g, g.node_idx("l").unwrap(), g.node_idx("s").unwrap(), &caps);
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].hops(), 1);
    }

    /// brute-force DFS enumeration used as the test oracle
    pub(crate) fn dfs_all_paths(g: &Grid, from: usize, to: usize) -> Vec<SimplePath> {
        fn recurse(
            adj: &[Vec<(usize, usize, f64)>],
            path: &mut Vec<usize>,
            edges: &mut Vec<usize>,
            weight: f64,
            to: usize,
            out: &mut Vec<SimplePath>,
        ) {
            let last = *path.last().unwrap();
            if last == to {
                out.push(SimplePath { nodes: path.clone(), edges: edges.clone(), weight });
                return;
            }
            for &(nbr, edge, w) in &adj[last] {
                if path.contains(&nbr) {
                    continue;
                }
                path.push(nbr);
                edges.push(edge);
                recurse(adj, path, edges, weight + w, to, out);
                path.pop();
                edges.pop();
            }
        }
        if from == to {
            return Vec::new();
        }
        let adj = g.adjacency_list();
        let mut out = Vec::new();
        recurse(&adj, &mut vec![from], &mut Vec::new(), 0.0, to, &mut out);
        out.sort_by(|a, b| {
            a.weight
                .total_cmp(&b.weight)
                .then_with(|| a.hops().cmp(&b.hops()))
                .then_with(|| a.nodes.cmp(&b.nodes))
        });
        out
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        prop_compose! {
            fn random_small_grid()(
                n in 3usize..9,
                pairs in proptest::collection::vec((0usize..9, 0usize..9, 1u8..5), 2..16),
            ) -> Grid {
                let mut nodes = vec![("s0".to_string(), NodeKind::Substation, 0.0)];
                for i in 1..n {
                    nodes.push((format!("l{i}"), NodeKind::Load, 1.0));
                }
                let id_of = |i: usize| if i == 0 { "s0".to_string() } else { format!("l{i}") };
                let mut seen = std::collections::HashSet::new();
                let mut edges = Vec::new();
                for (k, (a, b, w)) in pairs.into_iter().enumerate() {
                    let (a, b) = (a % n, b % n);
                    if a == b || !seen.insert((a.min(b), a.max(b))) {
                        continue;
                    }
                    edges.push((format!("e{k:02}"), id_of(a), id_of(b), w as f64, EdgeStatus::Existing));
                }
                Grid::new(nodes, edges).unwrap()
            }
        }

        proptest! {
            // uncapped enumeration matches brute-force DFS: same paths, same order
            #[test]
            fn matches_bruteforce_oracle(g in random_small_grid(), from in 0usize..9, to in 0usize..9) {
                let (from, to) = (from % g.node_count(), to % g.node_count());
                let fast = simple_paths(&g, from, to, &PathCaps::unbounded());
                let brute = dfs_all_paths(&g, from, to);
                prop_assert_eq!(fast, brute);
            }

            // every path is simple and the list is weight-sorted
            #[test]
            fn paths_are_simple_and_sorted(g in random_small_grid(), from in 0usize..9, to in 0usize..9) {
                let (from, to) = (from % g.node_count(), to % g.node_count());
                let paths = simple_paths(&g, from, to, &PathCaps::unbounded());
                for p in &paths {
                    let mut uniq = p.nodes.clone();
                    uniq.sort_unstable();
                    uniq.dedup();
                    prop_assert_eq!(uniq.len(), p.nodes.len(), "repeated node in path");
                }
                for w in paths.windows(2) {
                    prop_assert!(w[0].weight <= w[1].weight);
                }
            }

            // grafting a fresh 2-hop detour through a new node never loses paths
            #[test]
            fn extra_disjoint_route_never_decreases_count(g in random_small_grid()) {
                let from = 0usize;
                let to = g.node_count() - 1;
                if from == to { return Ok(()); }
                let before = simple_paths(&g, from, to, &PathCaps::unbounded()).len();
                let mut nodes: Vec<_> = g.nodes().iter().map(|n| (n.id.clone(), n.kind, n.demand)).collect();
                nodes.push(("zz_new".into(), NodeKind::Load, 1.0));
                let mut edges: Vec<_> = g
                    .edges()
                    .iter()
                    .map(|e| {
                        (e.id.clone(), g.nodes()[e.u].id.clone(), g.nodes()[e.v].id.clone(), e.weight, e.status)
                    })
                    .collect();
                edges.push(("zz_e0".into(), g.nodes()[from].id.clone(), "zz_new".into(), 1.0, EdgeStatus::Existing));
                edges.push(("zz_e1".into(), "zz_new".into(), g.nodes()[to].id.clone(), 1.0, EdgeStatus::Existing));
                let g2 = Grid::new(nodes, edges).unwrap();
                let from2 = g2.node_idx(&g.nodes()[from].id).unwrap();
                let to2 = g2.node_idx(&g.nodes()[to].id).unwrap();
                let after = simple_paths(&g2, from2, to2, &PathCaps::unbounded()).len();
                prop_assert!(after >= before + 1);
            }
        }
    }
}
