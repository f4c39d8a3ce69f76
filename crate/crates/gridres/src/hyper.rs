//! Hyperstructure construction over combined grids.
//!
//! A hyperedge groups a substation with its k nearest nodes in node-feature
//! space; a hypernode groups a substation-incident line with its k nearest
//! lines in concatenated endpoint-feature space. Both are represented as
//! binary incidence matrices: `Q_E` is nodes x hyperedges, `Q_V` is edges x
//! hypernodes. Nearest neighbors use Euclidean distance with ties broken by
//! ascending canonical index, so construction is deterministic.

use crate::grid::{Grid, NodeKind};
use crate::tensor::Tensor;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum HyperError {
    #[error("node {0} belongs to no hyperedge; its hypergraph degree is zero")]
    ZeroDegreeNode(usize),
    #[error("hyperedge {0} is empty")]
    EmptyHyperedge(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperstructure {
    /// Node-in-hyperedge incidence, N x H_E; one column per substation.
    pub q_e: Tensor,
    /// Edge-in-hypernode incidence, M x H_V; one column per substation-incident edge.
    pub q_v: Tensor,
    /// Hyperedge weights (diagonal), default 1.
    pub w_e: Vec<f64>,
    /// Hypernode weights (diagonal), default 1.
    pub w_v: Vec<f64>,
    /// Seed substation node index of each hyperedge column.
    pub hyperedge_seeds: Vec<usize>,
    /// Seed edge index of each hypernode column.
    pub hypernode_seeds: Vec<usize>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Indices of the k nearest candidates to `target` (excluding it), ties by
/// ascending index.
fn k_nearest(target: usize, features: &[Vec<f64>], k: usize) -> Vec<usize> {
    let mut others: Vec<(f64, usize)> = features
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target)
        .map(|(i, f)| (euclidean(&features[target], f), i))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    others.truncate(k);
    others.into_iter().map(|(_, i)| i).collect()
}

/// One hyperedge per substation: the substation plus its k nearest nodes in
/// `x_v` space. Column support is min(k+1, N).
pub fn build_hyperedges(g: &Grid, x_v: &Tensor, k: usize) -> (Tensor, Vec<usize>) {
    let n = g.node_count();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x_v.row(i).to_vec()).collect();
    let seeds = g.substations();
    let mut q = Tensor::zeros(n, seeds.len());
    for (col, &s) in seeds.iter().enumerate() {
        q.set(s, col, 1.0);
        for member in k_nearest(s, &rows, k) {
            q.set(member, col, 1.0);
        }
    }
    (q, seeds)
}

/// Concatenated endpoint feature row of an edge, endpoints ordered by
/// canonical node index so undirected edges get a stable orientation.
fn edge_feature_row(g: &Grid, x_v: &Tensor, edge: usize) -> Vec<f64> {
    let e = &g.edges()[edge];
    let (lo, hi) = (e.u.min(e.v), e.u.max(e.v));
    let mut row = x_v.row(lo).to_vec();
    row.extend_from_slice(x_v.row(hi));
    row
}

/// One hypernode per substation-incident edge: the edge plus its k nearest
/// edges in concatenated endpoint-feature space.
pub fn build_hypernodes(g: &Grid, x_v: &Tensor, k: usize) -> (Tensor, Vec<usize>) {
    let m = g.edge_count();
    let rows: Vec<Vec<f64>> = (0..m).map(|e| edge_feature_row(g, x_v, e)).collect();
    let seeds: Vec<usize> = g
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| {
            g.nodes()[e.u].kind == NodeKind::Substation || g.nodes()[e.v].kind == NodeKind::Substation
        })
        .map(|(i, _)| i)
        .collect();
    let mut q = Tensor::zeros(m, seeds.len());
    for (col, &seed) in seeds.iter().enumerate() {
        q.set(seed, col, 1.0);
        for member in k_nearest(seed, &rows, k) {
            q.set(member, col, 1.0);
        }
    }
    (q, seeds)
}

/// Builds both incidence matrices with unit weights.
pub fn build_hyperstructure(g: &Grid, x_v: &Tensor, k: usize) -> Hyperstructure {
    let (q_e, hyperedge_seeds) = build_hyperedges(g, x_v, k);
    let (q_v, hypernode_seeds) = build_hypernodes(g, x_v, k);
    let w_e = vec![1.0; q_e.cols()];
    let w_v = vec![1.0; q_v.cols()];
    Hyperstructure { q_e, q_v, w_e, w_v, hyperedge_seeds, hypernode_seeds }
}

/// Normalized hypergraph Laplacian
/// `L = I - 1/2 D^{-1/2} Q W D_h^{-1} Q^T D^{-1/2}`
/// where `D` holds weighted element degrees and `D_h` hyperedge cardinalities.
pub fn hypergraph_laplacian(q: &Tensor, weights: &[f64]) -> Result<Tensor, HyperError> {
    let n = q.rows();
    let h = q.cols();
    assert_eq!(weights.len(), h, "one weight per hyperedge");
    let mut hyper_degree = vec![0.0; h];
    for col in 0..h {
        for row in 0..n {
            hyper_degree[col] += q.get(row, col);
        }
        if hyper_degree[col] == 0.0 {
            return Err(HyperError::EmptyHyperedge(col));
        }
    }
    let mut node_degree = vec![0.0; n];
    for row in 0..n {
        for col in 0..h {
            node_degree[row] += weights[col] * q.get(row, col);
        }
        if node_degree[row] == 0.0 {
            return Err(HyperError::ZeroDegreeNode(row));
        }
    }
    let mut lap = Tensor::identity(n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for col in 0..h {
                acc += q.get(i, col) * weights[col] / hyper_degree[col] * q.get(j, col);
            }
            let val = 0.5 * acc / (node_degree[i].sqrt() * node_degree[j].sqrt());
            lap.set(i, j, lap.get(i, j) - val);
        }
    }
    Ok(lap)
}

/// Writes an incidence matrix as sparse triplets (`row,col,value` with
/// header), one line per nonzero.
pub fn write_incidence_csv(q: &Tensor, path: impl AsRef<std::path::Path>) -> std::io::Result<()> {
    let mut out = String::from("row,col,value\n");
    for r in 0..q.rows() {
        for c in 0..q.cols() {
            if q.get(r, c) != 0.0 {
                out.push_str(&format!("{r},{c},1\n"));
            }
        }
    }
    std::fs::write(path, out)
}

/// Reads a sparse triplet CSV back into a dense incidence matrix of the
/// given shape.
pub fn read_incidence_csv(
    path: impl AsRef<std::path::Path>,
    rows: usize,
    cols: usize,
) -> std::io::Result<Tensor> {
    let text = std::fs::read_to_string(path)?;
    let mut q = Tensor::zeros(rows, cols);
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |p: Option<&str>| {
            p.and_then(|s| s.trim().parse::<usize>().ok()).ok_or_else(|| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("bad triplet: {line}"))
            })
        };
        let r = parse(parts.next())?;
        let c = parse(parts.next())?;
        q.set(r, c, 1.0);
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::EdgeStatus;
    use approx::assert_relative_eq;

    fn star_grid() -> Grid {
        Grid::new(
            vec![
                ("s0".into(), NodeKind::Substation, 0.0),
                ("l1".into(), NodeKind::Load, 1.0),
                ("l2".into(), NodeKind::Load, 1.0),
                ("l3".into(), NodeKind::Load, 1.0),
            ],
            vec![
                ("e1".into(), "s0".into(), "l1".into(), 1.0, EdgeStatus::Existing),
                ("e2".into(), "s0".into(), "l2".into(), 1.0, EdgeStatus::Existing),
                ("e3".into(), "s0".into(), "l3".into(), 1.0, EdgeStatus::Existing),
            ],
        )
        .unwrap()
    }

    #[test]
    fn hyperedge_support_is_k_plus_one() {
        let g = star_grid();
        let x_v = Tensor::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![2.0, 0.0],
            vec![3.0, 0.0],
        ])
        .unwrap();
        let (q, seeds) = build_hyperedges(&g, &x_v, 2);
        assert_eq!(q.cols(), 1);
        assert_eq!(seeds, vec![g.node_idx("s0").unwrap()]);
        let support: f64 = (0..q.rows()).map(|r| q.get(r, 0)).sum();
        assert_eq!(support, 3.0); // seed + 2 nearest
        assert_eq!(q.get(g.node_idx("s0").unwrap(), 0), 1.0);
    }

    #[test]
    fn k_saturation_covers_all_nodes() {
        let g = star_grid();
        let x_v = Tensor::zeros(4, 2);
        let (q, _) = build_hyperedges(&g, &x_v, g.node_count() - 1);
        for r in 0..q.rows() {
            assert_eq!(q.get(r, 0), 1.0);
        }
    }

    #[test]
    fn identical_features_tie_break_by_canonical_index() {
        // two substations with equal feature rows both pick the first load
        let g = Grid::new(
            vec![
                ("s0".into(), NodeKind::Substation, 0.0),
                ("s1".into(), NodeKind::Substation, 0.0),
                ("l0".into(), NodeKind::Load, 1.0),
                ("l1".into(), NodeKind::Load, 1.0),
            ],
            vec![
                ("e0".into(), "s0".into(), "l0".into(), 1.0, EdgeStatus::Existing),
                ("e1".into(), "s1".into(), "l1".into(), 1.0, EdgeStatus::Existing),
            ],
        )
        .unwrap();
        let x_v = Tensor::zeros(4, 2); // all identical -> pure tie-break
        let (q, seeds) = build_hyperedges(&g, &x_v, 1);
        assert_eq!(q.cols(), 2);
        // node order is l0, l1, s0, s1; nearest-by-tie for both seeds is index 0 (l0)
        assert_eq!(seeds, vec![2, 3]);
        assert_eq!(q.get(0, 0), 1.0);
        assert_eq!(q.get(0, 1), 1.0);
        assert_eq!(q.get(1, 0), 0.0);
        assert_eq!(q.get(1, 1), 0.0);
    }

    #[test]
    fn star_hypernodes_with_k2_cover_all_edges() {
        let g = star_grid();
        let x_v = Tensor::zeros(4, 2);
        let (q, seeds) = build_hypernodes(&g, &x_v, 2);
        assert_eq!(seeds.len(), 3); // every edge touches the substation
        for c in 0..q.cols() {
            for r in 0..q.rows() {
                assert_eq!(q.get(r, c), 1.0);
            }
        }
    }

    #[test]
    fn single_edge_grid_has_one_singleton_hypernode() {
        let g = Grid::new(
            vec![
                ("s0".into(), NodeKind::Substation, 0.0),
                ("l0".into(), NodeKind::Load, 1.0),
            ],
            vec![("e0".into(), "s0".into(), "l0".into(), 1.0, EdgeStatus::Existing)],
        )
        .unwrap();
        let x_v = Tensor::zeros(2, 2);
        let (q, seeds) = build_hypernodes(&g, &x_v, 2);
        assert_eq!(q.cols(), 1);
        assert_eq!(seeds, vec![0]);
        assert_eq!(q.get(0, 0), 1.0);
    }

    #[test]
    fn hypernode_count_equals_substation_incident_edges() {
        let g = Grid::new(
            vec![
                ("s0".into(), NodeKind::Substation, 0.0),
                ("l0".into(), NodeKind::Load, 1.0),
                ("l1".into(), NodeKind::Load, 1.0),
                ("l2".into(), NodeKind::Load, 1.0),
            ],
            vec![
                ("e0".into(), "s0".into(), "l0".into(), 1.0, EdgeStatus::Existing),
                ("e1".into(), "l0".into(), "l1".into(), 1.0, EdgeStatus::Existing),
                ("e2".into(), "l1".into(), "l2".into(), 1.0, EdgeStatus::Existing),
            ],
        )
        .unwrap();
        let x_v = Tensor::zeros(4, 2);
        let hs = build_hyperstructure(&g, &x_v, 1);
        assert_eq!(hs.q_v.cols(), 1);
        assert_eq!(hs.q_e.cols(), 1);
        assert_eq!(hs.w_e, vec![1.0]);
        assert_eq!(hs.w_v, vec![1.0]);
    }

    #[test]
    fn laplacian_of_one_hyperedge_over_two_nodes() {
        let q = Tensor::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let lap = hypergraph_laplacian(&q, &[1.0]).unwrap();
        assert_relative_eq!(lap.get(0, 0), 0.75);
        assert_relative_eq!(lap.get(0, 1), -0.25);
        assert_relative_eq!(lap.get(1, 0), -0.25);
        assert_relative_eq!(lap.get(1, 1), 0.75);
    }

    #[test]
    fn laplacian_of_singleton_hyperedges_is_half_identity() {
        let q = Tensor::identity(3);
        let lap = hypergraph_laplacian(&q, &[1.0; 3]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.5 } else { 0.0 };
                assert_relative_eq!(lap.get(i, j), expect);
            }
        }
    }

    #[test]
    fn zero_degree_node_is_rejected() {
        let q = Tensor::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(hypergraph_laplacian(&q, &[1.0]), Err(HyperError::ZeroDegreeNode(1)));
    }

    #[test]
    fn incidence_csv_round_trips() {
        let q = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        write_incidence_csv(&q, &path).unwrap();
        let back = read_incidence_csv(&path, 3, 2).unwrap();
        assert_eq!(back, q);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        prop_compose! {
            fn random_incidence()(
                n in 2usize..7,
                h in 1usize..5,
                bits in proptest::collection::vec(any::<bool>(), 42),
            ) -> Tensor {
                let mut q = Tensor::zeros(n, h);
                for r in 0..n {
                    for c in 0..h {
                        if bits[r * h + c] {
                            q.set(r, c, 1.0);
                        }
                    }
                    // keep every node covered so the Laplacian is defined
                    q.set(r, r % h, 1.0);
                }
                // and every hyperedge nonempty
                for c in 0..h {
                    q.set(c % n, c, 1.0);
                }
                q
            }
        }

        proptest! {
            #[test]
            fn laplacian_is_symmetric(q in random_incidence()) {
                let w = vec![1.0; q.cols()];
                let lap = hypergraph_laplacian(&q, &w).unwrap();
                for i in 0..lap.rows() {
                    for j in 0..lap.cols() {
                        prop_assert!((lap.get(i, j) - lap.get(j, i)).abs() == 0.0);
                    }
                }
            }

            // when every hyperedge has exactly 2 nodes the structure is a
            // plain graph: all column sums are 2
            #[test]
            fn two_uniform_columns_have_degree_two(n in 2usize..8) {
                let mut q = Tensor::zeros(n, n - 1);
                for c in 0..n - 1 {
                    q.set(c, c, 1.0);
                    q.set(c + 1, c, 1.0);
                }
                for c in 0..q.cols() {
                    let degree: f64 = (0..q.rows()).map(|r| q.get(r, c)).sum();
                    prop_assert_eq!(degree, 2.0);
                }
            }
        }
    }
}
