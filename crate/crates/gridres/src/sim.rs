//! Outage simulation and CVaR labeling of expansion plans.
//!
//! Each scenario walks one year of hourly operation. Line failures come from
//! two processes: routine single-line failures and multi-line HILP events.
//! A load sheds its full hourly demand whenever no in-service path connects
//! it to any substation; the scenario's loss of load is the sum of shed
//! energy over the year. CVaR of the per-scenario losses is the plan's
//! resilience label source.
//!
//! Routine draws are counter-based per (line id, hour): a line's failure
//! stream depends only on the base seed and its own id, never on which other
//! lines exist. Plans sharing a line therefore see identical draws on it
//! (with per-system rates, a superset plan sees a subset of failures via
//! threshold coupling), which makes "adding lines never increases loss"
//! exactly testable instead of just true in expectation.

use crate::grid::{combine_plan, CombinedGrid, ExpansionPlan, Grid, NodeKind, PlanError};
use crate::seeds::{fnv1a, mix, splitmix64, unit_f64};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("grid has no candidate edges to select from")]
    NoCandidates,
    #[error("requested {requested} plans but only {space} distinct subsets exist")]
    CountExceedsSubsetSpace { requested: usize, space: u128 },
    #[error("loss list is empty")]
    EmptyLossList,
    #[error("alpha must lie in (0,1), got {0}")]
    InvalidAlpha(f64),
    #[error("breakpoints must be strictly increasing and positive: {0:?}")]
    InvalidBreakpoints(Vec<f64>),
    #[error("binning must produce 3 to 5 classes, got {0}")]
    InvalidClassCount(usize),
    #[error("quantile binning degenerated: breakpoints {0:?} are not strictly increasing")]
    DegenerateBinning(Vec<f64>),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// Failure-process configuration. Rates are annual event rates; repairs are
/// in hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FailureConfig {
    /// Routine single-line failures per year (per system unless
    /// `per_line_rates`).
    pub routine_rate: f64,
    /// Multi-line HILP events per year.
    pub hilp_rate: f64,
    pub routine_repair_hours: u32,
    pub hilp_repair_hours: u32,
    pub hilp_size_min: usize,
    pub hilp_size_max: usize,
    pub hours_per_year: u32,
    pub scenarios: usize,
    /// When set, `routine_rate` applies to every line independently instead
    /// of to the system as a whole.
    pub per_line_rates: bool,
}

impl Default for FailureConfig {
    fn default() -> Self {
        FailureConfig {
            routine_rate: 0.4,
            hilp_rate: 0.01,
            routine_repair_hours: 4,
            hilp_repair_hours: 48,
            hilp_size_min: 2,
            hilp_size_max: 5,
            hours_per_year: 8760,
            scenarios: 2000,
            per_line_rates: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventCause {
    Routine,
    Hilp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageEvent {
    pub edge_id: String,
    pub start_hour: u32,
    pub end_hour: u32,
    pub cause: EventCause,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub loss_kwh: f64,
    pub events: Vec<OutageEvent>,
}

struct Window {
    start: u32,
    end: u32,
    edge: usize,
    cause: EventCause,
}

/// Simulates one annual scenario. Deterministic in (grid, config, seed).
pub fn simulate_scenario(g: &CombinedGrid, cfg: &FailureConfig, seed: u64) -> ScenarioResult {
    let grid: &Grid = g;
    let m = grid.edge_count();
    let hours = cfg.hours_per_year;
    let mut windows: Vec<Window> = Vec::new();

    // routine process: independent per-(line, hour) threshold draws
    if cfg.routine_rate > 0.0 && m > 0 {
        let per_line = if cfg.per_line_rates {
            cfg.routine_rate / f64::from(hours)
        } else {
            cfg.routine_rate / f64::from(hours) / m as f64
        };
        for (ei, edge) in grid.edges().iter().enumerate() {
            let stream = mix(&[seed, fnv1a(&edge.id)]);
            for h in 0..hours {
                if unit_f64(splitmix64(stream ^ u64::from(h))) < per_line {
                    windows.push(Window {
                        start: h,
                        end: (h + cfg.routine_repair_hours).min(hours),
                        edge: ei,
                        cause: EventCause::Routine,
                    });
                }
            }
        }
    }

    // HILP process: system-level occurrence, connected multi-line footprint
    if cfg.hilp_rate > 0.0 && m > 0 {
        let p = cfg.hilp_rate / f64::from(hours);
        let stream = mix(&[seed, 0x4849_4C50]); // "HILP"
        let edge_adj = edge_adjacency(grid);
        for h in 0..hours {
            if unit_f64(splitmix64(stream ^ u64::from(h))) >= p {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, 0x4849_4C50, u64::from(h), 1]));
            let lo = cfg.hilp_size_min.max(1).min(m);
            let hi = cfg.hilp_size_max.max(lo).min(m);
            let size = rng.gen_range(lo..=hi);
            for edge in grow_connected_subset(&edge_adj, size, &mut rng) {
                windows.push(Window {
                    start: h,
                    end: (h + cfg.hilp_repair_hours).min(hours),
                    edge,
                    cause: EventCause::Hilp,
                });
            }
        }
    }

    let loss_kwh = loss_from_windows(grid, &windows, hours);
    let mut events: Vec<OutageEvent> = windows
        .iter()
        .map(|w| OutageEvent {
            edge_id: grid.edges()[w.edge].id.clone(),
            start_hour: w.start,
            end_hour: w.end,
            cause: w.cause,
        })
        .collect();
    events.sort_by(|a, b| (a.start_hour, &a.edge_id).cmp(&(b.start_hour, &b.edge_id)));
    ScenarioResult { loss_kwh, events }
}

/// Edges adjacent to each edge (sharing an endpoint).
fn edge_adjacency(g: &Grid) -> Vec<Vec<usize>> {
    let mut by_node: Vec<Vec<usize>> = vec![Vec::new(); g.node_count()];
    for (ei, e) in g.edges().iter().enumerate() {
        by_node[e.u].push(ei);
        by_node[e.v].push(ei);
    }
    let mut adj = vec![Vec::new(); g.edge_count()];
    for (ei, e) in g.edges().iter().enumerate() {
        let mut nbrs: Vec<usize> = by_node[e.u]
            .iter()
            .chain(&by_node[e.v])
            .copied()
            .filter(|&other| other != ei)
            .collect();
        nbrs.sort_unstable();
        nbrs.dedup();
        adj[ei] = nbrs;
    }
    adj
}

/// Randomly grows a connected edge subset of the requested size (smaller if
/// the component runs out).
fn grow_connected_subset(edge_adj: &[Vec<usize>], size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let m = edge_adj.len();
    let start = rng.gen_range(0..m);
    let mut chosen = vec![start];
    let mut in_set = vec![false; m];
    in_set[start] = true;
    let mut frontier: Vec<usize> = edge_adj[start].clone();
    while chosen.len() < size && !frontier.is_empty() {
        let pick = rng.gen_range(0..frontier.len());
        let edge = frontier.swap_remove(pick);
        if in_set[edge] {
            continue;
        }
        in_set[edge] = true;
        chosen.push(edge);
        frontier.extend(edge_adj[edge].iter().filter(|&&e| !in_set[e]));
    }
    chosen.sort_unstable();
    chosen
}

/// Total shed energy given outage windows: between state changes, every load
/// with no in-service path to a substation sheds demand for the whole
/// segment.
fn loss_from_windows(g: &Grid, windows: &[Window], hours: u32) -> f64 {
    if windows.is_empty() {
        return 0.0;
    }
    let mut boundaries: Vec<u32> = windows.iter().flat_map(|w| [w.start, w.end]).collect();
    boundaries.push(hours);
    boundaries.retain(|&b| b <= hours);
    boundaries.sort_unstable();
    boundaries.dedup();

    let mut loss = 0.0;
    for pair in boundaries.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let mut down = vec![false; g.edge_count()];
        let mut any = false;
        for w in windows {
            if w.start <= a && a < w.end {
                down[w.edge] = true;
                any = true;
            }
        }
        if !any {
            continue;
        }
        loss += disconnected_demand(g, &down) * f64::from(b - a);
    }
    loss
}

/// Sum of demand at load nodes with no path to any substation over
/// in-service edges.
fn disconnected_demand(g: &Grid, down: &[bool]) -> f64 {
    let n = g.node_count();
    let mut reached = vec![false; n];
    let mut queue: std::collections::VecDeque<usize> = g.substations().into();
    for &s in &queue {
        reached[s] = true;
    }
    let adj = g.adjacency_list();
    while let Some(u) = queue.pop_front() {
        for &(v, e, _) in &adj[u] {
            if !down[e] && !reached[v] {
                reached[v] = true;
                queue.push_back(v);
            }
        }
    }
    g.nodes()
        .iter()
        .enumerate()
        .filter(|(i, node)| node.kind == NodeKind::Load && !reached[*i])
        .map(|(_, node)| node.demand)
        .sum()
}

/// Uniformly samples `count` distinct candidate subsets.
pub fn generate_plans(base: &Grid, count: usize, seed: u64) -> Result<Vec<ExpansionPlan>, SimError> {
    let candidates: Vec<&str> = base
        .edges()
        .iter()
        .filter(|e| e.status == crate::grid::EdgeStatus::Candidate)
        .map(|e| e.id.as_str())
        .collect();
    if candidates.is_empty() {
        return Err(SimError::NoCandidates);
    }
    if candidates.len() < 128 {
        let space = 1u128 << candidates.len();
        if count as u128 > space {
            return Err(SimError::CountExceedsSubsetSpace { requested: count, space });
        }
    }
    let width = count.saturating_sub(1).to_string().len().max(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut plans = Vec::with_capacity(count);
    while plans.len() < count {
        let mask: Vec<bool> = candidates.iter().map(|_| rng.gen_bool(0.5)).collect();
        if !seen.insert(mask.clone()) {
            continue;
        }
        let edges = candidates
            .iter()
            .zip(&mask)
            .filter(|(_, &keep)| keep)
            .map(|(id, _)| id.to_string())
            .collect();
        plans.push(ExpansionPlan { plan_id: format!("plan_{:0width$}", plans.len()), edges });
    }
    Ok(plans)
}

/// Mean of the worst ceil((1-alpha) * n) losses.
pub fn compute_cvar(losses: &[f64], alpha: f64) -> Result<f64, SimError> {
    if losses.is_empty() {
        return Err(SimError::EmptyLossList);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SimError::InvalidAlpha(alpha));
    }
    let mut sorted = losses.to_vec();
    sorted.sort_by(f64::total_cmp);
    // guard the ceil against float noise like 0.05*20 = 1.0000000000000009
    let tail = ((1.0 - alpha) * sorted.len() as f64 - 1e-9).ceil().max(1.0) as usize;
    let tail = tail.min(sorted.len());
    Ok(sorted[sorted.len() - tail..].iter().sum::<f64>() / tail as f64)
}

/// Ordered CVaR ranges: first bin closed ([0, b1]), middle bins left-open
/// right-closed, last bin unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningScheme {
    breakpoints: Vec<f64>,
}

impl BinningScheme {
    pub fn new(breakpoints: Vec<f64>) -> Result<Self, SimError> {
        let classes = breakpoints.len() + 1;
        if !(3..=5).contains(&classes) {
            return Err(SimError::InvalidClassCount(classes));
        }
        let increasing =
            breakpoints.windows(2).all(|w| w[0] < w[1]) && breakpoints.first().copied().unwrap_or(1.0) > 0.0;
        if !increasing {
            return Err(SimError::InvalidBreakpoints(breakpoints));
        }
        Ok(BinningScheme { breakpoints })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn label_count(&self) -> usize {
        self.breakpoints.len() + 1
    }

    pub fn assign(&self, cvar: f64) -> usize {
        self.breakpoints.iter().filter(|&&b| cvar > b).count()
    }

    /// Named preset: the 54-bus "system I" kWh ranges.
    pub fn system_i(classes: usize) -> Result<Self, SimError> {
        match classes {
            3 => Self::new(vec![1.0e4, 2.0e4]),
            4 => Self::new(vec![1.0e4, 2.0e4, 3.0e4]),
            5 => Self::new(vec![1.0e4, 1.5e4, 2.0e4, 2.5e4]),
            c => Err(SimError::InvalidClassCount(c)),
        }
    }

    /// Named preset: the 54-bus "system II" kWh ranges.
    pub fn system_ii(classes: usize) -> Result<Self, SimError> {
        match classes {
            3 => Self::new(vec![3.0e4, 4.0e4]),
            4 => Self::new(vec![3.0e4, 3.5e4, 4.0e4]),
            5 => Self::new(vec![3.0e4, 3.5e4, 4.0e4, 4.5e4]),
            c => Err(SimError::InvalidClassCount(c)),
        }
    }

    /// Breakpoints at the i/classes quantiles of the observed CVaR values,
    /// for synthetic grids whose loss scale doesn't match the presets.
    pub fn from_quantiles(cvars: &[f64], classes: usize) -> Result<Self, SimError> {
        if !(3..=5).contains(&classes) {
            return Err(SimError::InvalidClassCount(classes));
        }
        if cvars.is_empty() {
            return Err(SimError::EmptyLossList);
        }
        let mut sorted = cvars.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut breakpoints = Vec::with_capacity(classes - 1);
        for i in 1..classes {
            let q = i as f64 / classes as f64;
            let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
            breakpoints.push(sorted[idx]);
        }
        if !breakpoints.windows(2).all(|w| w[0] < w[1]) || breakpoints[0] <= 0.0 {
            return Err(SimError::DegenerateBinning(breakpoints));
        }
        Self::new(breakpoints)
    }
}

/// How to bin a freshly simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SchemeSpec {
    Fixed(BinningScheme),
    Quantile { classes: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPlan {
    pub plan: ExpansionPlan,
    pub losses: Vec<f64>,
    pub cvar_kwh: f64,
    pub mean_loss: f64,
    pub label: usize,
    pub scenario_count: usize,
}

/// Simulates and labels every plan. Scenario seeds derive from
/// (seed, plan id, scenario index), so the whole dataset is a pure function
/// of its inputs regardless of execution order.
pub fn label_dataset(
    base: &Grid,
    plans: &[ExpansionPlan],
    cfg: &FailureConfig,
    scheme: &SchemeSpec,
    alpha: f64,
    seed: u64,
) -> Result<(Vec<LabeledPlan>, BinningScheme), SimError> {
    let combined: Vec<CombinedGrid> =
        plans.iter().map(|p| combine_plan(base, p)).collect::<Result<_, _>>()?;
    let simulated: Vec<(Vec<f64>, f64, f64)> = combined
        .par_iter()
        .map(|cg| {
            let plan_seed = mix(&[seed, fnv1a(&cg.plan_id)]);
            let losses: Vec<f64> = (0..cfg.scenarios)
                .into_par_iter()
                .map(|i| simulate_scenario(cg, cfg, mix(&[plan_seed, i as u64])).loss_kwh)
                .collect();
            let cvar = compute_cvar(&losses, alpha).expect("scenarios is nonzero");
            let mean = losses.iter().sum::<f64>() / losses.len() as f64;
            (losses, cvar, mean)
        })
        .collect();

    let scheme = match scheme {
        SchemeSpec::Fixed(s) => s.clone(),
        SchemeSpec::Quantile { classes } => {
            let cvars: Vec<f64> = simulated.iter().map(|(_, c, _)| *c).collect();
            BinningScheme::from_quantiles(&cvars, *classes)?
        }
    };

    let labeled = plans
        .iter()
        .zip(simulated)
        .map(|(plan, (losses, cvar_kwh, mean_loss))| LabeledPlan {
            plan: plan.clone(),
            label: scheme.assign(cvar_kwh),
            cvar_kwh,
            mean_loss,
            scenario_count: cfg.scenarios,
            losses,
        })
        .collect();
    Ok((labeled, scheme))
}
