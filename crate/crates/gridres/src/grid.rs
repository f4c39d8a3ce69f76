//! Distribution-grid data model: typed nodes, weighted lines, expansion
//! plans, and the combined grids they produce.
//!
//! Grids are immutable after construction. Nodes and edges are stored in
//! lexicographic id order and every matrix produced elsewhere in the crate
//! (features, incidence, adjacency) indexes rows by that order, so ids are
//! the stable identity and positions are derived.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Substation,
    Load,
    NonLoad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeStatus {
    Existing,
    Candidate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    /// Hourly demand in kWh/h; meaningful for `Load` nodes, zero otherwise.
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    /// Endpoint indices into the grid's sorted node list.
    pub u: usize,
    pub v: usize,
    pub weight: f64,
    pub status: EdgeStatus,
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("failed to read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("edge `{edge}` references unknown node `{node}`")]
    UnknownNode { edge: String, node: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("plan `{plan}` selects `{edge}`, which is not a candidate edge")]
    UnknownCandidateId { plan: String, edge: String },
    #[error("plan `{plan}` selects `{edge}` more than once")]
    DuplicateSelection { plan: String, edge: String },
}

/// Immutable node/edge graph of a distribution system.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    node_index: HashMap<String, usize>,
    edge_index: HashMap<String, usize>,
}

impl Grid {
    /// Builds a grid from raw parts. Sorts nodes and edges by id and resolves
    /// endpoint ids to indices. Rejects duplicate ids and unknown endpoints;
    /// softer invariant violations (negative weights, self-loops, missing
    /// substations) are reported by [`validate_grid`] instead.
    pub fn new(
        nodes: Vec<(String, NodeKind, f64)>,
        edges: Vec<(String, String, String, f64, EdgeStatus)>,
    ) -> Result<Self, GridError> {
        let mut nodes: Vec<Node> =
            nodes.into_iter().map(|(id, kind, demand)| Node { id, kind, demand }).collect();
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.id.clone(), i).is_some() {
                return Err(GridError::DuplicateId(n.id.clone()));
            }
        }
        let mut raw_edges = edges;
        raw_edges.sort_by(|a, b| a.0.cmp(&b.0));
        let mut edges = Vec::with_capacity(raw_edges.len());
        let mut edge_index = HashMap::with_capacity(raw_edges.len());
        for (id, u_id, v_id, weight, status) in raw_edges {
            let u = *node_index
                .get(&u_id)
                .ok_or_else(|| GridError::UnknownNode { edge: id.clone(), node: u_id.clone() })?;
            let v = *node_index
                .get(&v_id)
                .ok_or_else(|| GridError::UnknownNode { edge: id.clone(), node: v_id.clone() })?;
            if edge_index.insert(id.clone(), edges.len()).is_some() {
                return Err(GridError::DuplicateId(id));
            }
            edges.push(Edge { id, u, v, weight, status });
        }
        Ok(Grid { nodes, edges, node_index, edge_index })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_idx(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn edge_idx(&self, id: &str) -> Option<usize> {
        self.edge_index.get(id).copied()
    }

    /// Substation node indices, in canonical (id) order.
    pub fn substations(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].kind == NodeKind::Substation).collect()
    }

    /// Per-node list of (neighbor index, edge index, weight), sorted for
    /// deterministic traversal.
    pub fn adjacency_list(&self) -> Vec<Vec<(usize, usize, f64)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (ei, e) in self.edges.iter().enumerate() {
            adj[e.u].push((e.v, ei, e.weight));
            adj[e.v].push((e.u, ei, e.weight));
        }
        for list in &mut adj {
            list.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        }
        adj
    }
}

/// A named subset of a base grid's candidate edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionPlan {
    pub plan_id: String,
    pub edges: Vec<String>,
}

/// A base grid with one plan's candidate lines merged in; every stored edge
/// is in service.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedGrid {
    pub grid: Grid,
    pub plan_id: String,
}

impl std::ops::Deref for CombinedGrid {
    type Target = Grid;
    fn deref(&self) -> &Grid {
        &self.grid
    }
}

/// Merges a plan into its base grid: existing edges plus the selected
/// candidates. The base is untouched.
pub fn combine_plan(base: &Grid, plan: &ExpansionPlan) -> Result<CombinedGrid, PlanError> {
    let mut seen = HashSet::new();
    for id in &plan.edges {
        let idx = base.edge_idx(id).filter(|&i| base.edges[i].status == EdgeStatus::Candidate);
        if idx.is_none() {
            return Err(PlanError::UnknownCandidateId { plan: plan.plan_id.clone(), edge: id.clone() });
        }
        if !seen.insert(id.as_str()) {
            return Err(PlanError::DuplicateSelection { plan: plan.plan_id.clone(), edge: id.clone() });
        }
    }
    let nodes =
        base.nodes.iter().map(|n| (n.id.clone(), n.kind, n.demand)).collect::<Vec<_>>();
    let edges = base
        .edges
        .iter()
        .filter(|e| e.status == EdgeStatus::Existing || seen.contains(e.id.as_str()))
        .map(|e| {
            (e.id.clone(), base.nodes[e.u].id.clone(), base.nodes[e.v].id.clone(), e.weight, e.status)
        })
        .collect::<Vec<_>>();
    let grid = Grid::new(nodes, edges).expect("combined grid inherits validity from base");
    Ok(CombinedGrid { grid, plan_id: plan.plan_id.clone() })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoSubstation,
    NegativeWeight { edge: String },
    NegativeDemand { node: String },
    SelfLoop { edge: String },
    DuplicateEdge { first: String, second: String },
    IsolatedSubstation { node: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoSubstation => write!(f, "no substation"),
            Violation::NegativeWeight { edge } => write!(f, "negative weight on edge `{edge}`"),
            Violation::NegativeDemand { node } => write!(f, "negative demand on node `{node}`"),
            Violation::SelfLoop { edge } => write!(f, "self-loop on edge `{edge}`"),
            Violation::DuplicateEdge { first, second } => {
                write!(f, "edges `{first}` and `{second}` connect the same node pair")
            }
            Violation::IsolatedSubstation { node } => {
                write!(f, "substation `{node}` has no incident lines")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks structural invariants and returns every violation found. An empty
/// report means the grid honors all of them.
pub fn validate_grid(g: &Grid) -> ValidationReport {
    let mut violations = Vec::new();
    if !g.nodes.iter().any(|n| n.kind == NodeKind::Substation) {
        violations.push(Violation::NoSubstation);
    }
    for n in &g.nodes {
        if n.demand < 0.0 {
            violations.push(Violation::NegativeDemand { node: n.id.clone() });
        }
    }
    let mut pair_owner: HashMap<(usize, usize), &str> = HashMap::new();
    let mut touched = vec![false; g.nodes.len()];
    for e in &g.edges {
        if e.weight < 0.0 {
            violations.push(Violation::NegativeWeight { edge: e.id.clone() });
        }
        if e.u == e.v {
            violations.push(Violation::SelfLoop { edge: e.id.clone() });
            continue;
        }
        touched[e.u] = true;
        touched[e.v] = true;
        let key = (e.u.min(e.v), e.u.max(e.v));
        if let Some(first) = pair_owner.get(&key) {
            violations.push(Violation::DuplicateEdge {
                first: (*first).to_string(),
                second: e.id.clone(),
            });
        } else {
            pair_owner.insert(key, &e.id);
        }
    }
    for (i, n) in g.nodes.iter().enumerate() {
        if n.kind == NodeKind::Substation && !touched[i] && g.nodes.len() > 1 {
            violations.push(Violation::IsolatedSubstation { node: n.id.clone() });
        }
    }
    ValidationReport { violations }
}

// --- JSON file schema -------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: String,
    kind: NodeKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    demand: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    id: String,
    u: String,
    v: String,
    weight: f64,
    status: EdgeStatus,
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
}

/// Default hourly demand for a load node when the file omits it.
pub const DEFAULT_LOAD_DEMAND: f64 = 1.0;

pub fn load_grid(path: impl AsRef<Path>) -> Result<Grid, GridError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| GridError::Io { path: path.display().to_string(), source })?;
    parse_grid(&text, &path.display().to_string())
}

pub fn parse_grid(text: &str, origin: &str) -> Result<Grid, GridError> {
    let file: GridFile = serde_json::from_str(text)
        .map_err(|e| GridError::Parse { path: origin.to_string(), message: e.to_string() })?;
    let nodes = file
        .nodes
        .into_iter()
        .map(|n| {
            let demand = n.demand.unwrap_or(match n.kind {
                NodeKind::Load => DEFAULT_LOAD_DEMAND,
                _ => 0.0,
            });
            (n.id, n.kind, demand)
        })
        .collect();
    let edges =
        file.edges.into_iter().map(|e| (e.id, e.u, e.v, e.weight, e.status)).collect();
    Grid::new(nodes, edges)
}

pub fn save_grid(g: &Grid, path: impl AsRef<Path>) -> Result<(), GridError> {
    let path = path.as_ref();
    let file = GridFile {
        nodes: g
            .nodes
            .iter()
            .map(|n| NodeRecord { id: n.id.clone(), kind: n.kind, demand: Some(n.demand) })
            .collect(),
        edges: g
            .edges
            .iter()
            .map(|e| EdgeRecord {
                id: e.id.clone(),
                u: g.nodes[e.u].id.clone(),
                v: g.nodes[e.v].id.clone(),
                weight: e.weight,
                status: e.status,
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file).expect("grid serializes");
    std::fs::write(path, text)
        .map_err(|source| GridError::Io { path: path.display().to_string(), source })
}

pub fn load_plans(path: impl AsRef<Path>) -> Result<Vec<ExpansionPlan>, GridError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| GridError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text)
        .map_err(|e| GridError::Parse { path: path.display().to_string(), message: e.to_string() })
}

pub fn save_plans(plans: &[ExpansionPlan], path: impl AsRef<Path>) -> Result<(), GridError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(plans).expect("plans serialize");
    std::fs::write(path, text)
        .map_err(|source| GridError::Io { path: path.display().to_string(), source })
}
