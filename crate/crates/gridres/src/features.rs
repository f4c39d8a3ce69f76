//! Topological features of combined grids: uniqueness scores between loads
//! and substations, classical shortest-path metrics, and the node/edge
//! feature matrices fed to the classifier.
//!
//! The uniqueness score (U-score) of a node pair rewards having many short,
//! edge-disjoint routes between them. Paths are enumerated in increasing
//! weighted length; the shortest scores 1, and each later path scores the
//! fraction of its edges not already covered by earlier paths. The pair's
//! score is the sum of path scores divided by the total hop count of the
//! enumerated paths, so a lone direct line scores exactly 1 and a pair with
//! no route scores 0.

use crate::grid::{Grid, NodeKind};
use crate::paths::{simple_paths, PathCaps};
use crate::tensor::Tensor;
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("input lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("{0} has zero variance")]
    DegenerateVariance(&'static str),
    #[error("CVaR value {0} is not positive; its inverse is undefined")]
    NonPositiveCvar(f64),
}

/// U-score of a single (node, substation) pair. Zero when the pair is
/// disconnected or identical.
pub fn u_score(g: &Grid, from: usize, substation: usize, caps: &PathCaps) -> f64 {
    let paths = simple_paths(g, from, substation, caps);
    if paths.is_empty() {
        return 0.0;
    }
    let mut covered: HashSet<usize> = HashSet::new();
    let mut score_sum = 0.0;
    let mut total_hops = 0usize;
    for path in &paths {
        let overlap = path.edges.iter().filter(|e| covered.contains(e)).count();
        score_sum += 1.0 - overlap as f64 / path.edges.len() as f64;
        total_hops += path.edges.len();
        covered.extend(path.edges.iter().copied());
    }
    score_sum / total_hops as f64
}

/// Sum of U-scores over every (load, substation) pair. Higher values mean
/// more redundant routing into the loads.
pub fn u_score_summary(g: &Grid, caps: &PathCaps) -> f64 {
    let substations = g.substations();
    let mut total = 0.0;
    for (li, node) in g.nodes().iter().enumerate() {
        if node.kind != NodeKind::Load {
            continue;
        }
        for &s in &substations {
            total += u_score(g, li, s, caps);
        }
    }
    total
}

/// Dijkstra from one source; `f64::INFINITY` marks unreachable nodes.
fn dijkstra(adj: &[Vec<(usize, usize, f64)>], source: usize) -> Vec<f64> {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    dist[source] = 0.0;
    let mut heap = std::collections::BinaryHeap::new();
    heap.push((std::cmp::Reverse(OrdF64(0.0)), source));
    while let Some((std::cmp::Reverse(OrdF64(d)), u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, _, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push((std::cmp::Reverse(OrdF64(nd)), v));
            }
        }
    }
    dist
}

#[derive(PartialEq)]
struct OrdF64(f64);
impl Eq for OrdF64 {}
impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Weighted betweenness centrality for every node (Brandes' accumulation,
/// endpoints excluded, unnormalized; each unordered pair counted once).
pub fn betweenness(g: &Grid) -> Vec<f64> {
    let n = g.node_count();
    let adj = g.adjacency_list();
    let mut bc = vec![0.0; n];
    for s in 0..n {
        // Dijkstra with shortest-path counts and predecessor lists
        let mut dist = vec![f64::INFINITY; n];
        let mut sigma = vec![0.0f64; n];
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut settled_order = Vec::with_capacity(n);
        let mut settled = vec![false; n];
        dist[s] = 0.0;
        sigma[s] = 1.0;
        let mut heap = std::collections::BinaryHeap::new();
        heap.push((std::cmp::Reverse(OrdF64(0.0)), s));
        while let Some((std::cmp::Reverse(OrdF64(d)), u)) = heap.pop() {
            if settled[u] {
                continue;
            }
            settled[u] = true;
            settled_order.push(u);
            for &(v, _, w) in &adj[u] {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    sigma[v] = sigma[u];
                    preds[v].clear();
                    preds[v].push(u);
                    heap.push((std::cmp::Reverse(OrdF64(nd)), v));
                } else if nd == dist[v] && !settled[v] {
                    sigma[v] += sigma[u];
                    preds[v].push(u);
                }
            }
        }
        let mut delta = vec![0.0; n];
        for &w in settled_order.iter().rev() {
            for &p in &preds[w] {
                delta[p] += sigma[p] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    // undirected: every pair was visited from both endpoints
    bc.iter_mut().for_each(|v| *v *= 0.5);
    bc
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalMetrics {
    /// Mean weighted shortest-path distance over connected node pairs.
    pub apl: f64,
    /// Largest weighted shortest-path distance over connected pairs.
    pub diameter: f64,
    pub avg_betweenness: f64,
}

/// APL, diameter, and average betweenness. Disconnected pairs are excluded;
/// a grid with no connected pair reports zero APL and diameter.
pub fn classical_metrics(g: &Grid) -> ClassicalMetrics {
    let n = g.node_count();
    let adj = g.adjacency_list();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    let mut diameter = 0.0f64;
    for s in 0..n {
        let dist = dijkstra(&adj, s);
        for &d in dist.iter().skip(s + 1) {
            if d.is_finite() {
                sum += d;
                pairs += 1;
                diameter = diameter.max(d);
            }
        }
    }
    let bc = betweenness(g);
    let avg_bc = if n == 0 { 0.0 } else { bc.iter().sum::<f64>() / n as f64 };
    ClassicalMetrics {
        apl: if pairs == 0 { 0.0 } else { sum / pairs as f64 },
        diameter,
        avg_betweenness: avg_bc,
    }
}

/// Node feature matrix: one U-score column per substation (canonical id
/// order), then degree, then betweenness. Rows follow the grid's node order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub x_v: Tensor,
    pub x_e: Tensor,
    /// Substation ids naming the U-score columns, in column order.
    pub substation_ids: Vec<String>,
}

pub fn node_feature_matrix(g: &Grid, caps: &PathCaps) -> (Tensor, Vec<String>) {
    let n = g.node_count();
    let substations = g.substations();
    let cols = substations.len() + 2;
    let mut x = Tensor::zeros(n, cols);
    let adj = g.adjacency_list();
    let bc = betweenness(g);
    for v in 0..n {
        for (j, &s) in substations.iter().enumerate() {
            x.set(v, j, u_score(g, v, s, caps));
        }
        x.set(v, substations.len(), adj[v].len() as f64);
        x.set(v, substations.len() + 1, bc[v]);
    }
    let ids = substations.iter().map(|&s| g.nodes()[s].id.clone()).collect();
    (x, ids)
}

/// Edge feature matrix: cosine similarity of the endpoint rows of `x_v`.
/// A zero endpoint row makes the similarity 0 rather than NaN.
pub fn edge_feature_matrix(g: &Grid, x_v: &Tensor) -> Tensor {
    let mut x_e = Tensor::zeros(g.edge_count(), 1);
    for (i, e) in g.edges().iter().enumerate() {
        x_e.set(i, 0, cosine(x_v.row(e.u), x_v.row(e.v)));
    }
    x_e
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn feature_set(g: &Grid, caps: &PathCaps) -> FeatureSet {
    let (x_v, substation_ids) = node_feature_matrix(g, caps);
    let x_e = edge_feature_matrix(g, &x_v);
    FeatureSet { x_v, x_e, substation_ids }
}

/// Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    if xs.len() != ys.len() {
        return Err(MetricError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(MetricError::TooFewSamples(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(MetricError::DegenerateVariance("first input"));
    }
    if syy == 0.0 {
        return Err(MetricError::DegenerateVariance("second input"));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Pearson correlation of a metric against 1/CVaR. All CVaR values must be
/// strictly positive.
pub fn metric_cvar_correlation(metrics: &[f64], cvars: &[f64]) -> Result<f64, MetricError> {
    if metrics.len() != cvars.len() {
        return Err(MetricError::LengthMismatch(metrics.len(), cvars.len()));
    }
    let inv: Vec<f64> = cvars
        .iter()
        .map(|&c| if c > 0.0 { Ok(1.0 / c) } else { Err(MetricError::NonPositiveCvar(c)) })
        .collect::<Result<_, _>>()?;
    pearson(metrics, &inv)
}
