//! Project network model: activities, precedence DAG, CPM bounds and NPV.
//!
//! Activities are indexed densely `0..=n+1` where nodes `0` and `n+1` are
//! zero-duration dummies marking project start and completion. Times are
//! integers throughout; currency arithmetic is `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ActivityId = usize;

/// Absolute tolerance for currency comparisons.
pub const CURRENCY_TOL: f64 = 1e-9;

/// One project activity with its cost/revenue parameters and integer
/// duration support `[d_min, d_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activity {
    pub id: ActivityId,
    /// Fixed cost incurred at start (non-positive for generated data).
    pub fixed_cost: f64,
    /// Cost per time unit of the realized duration.
    pub var_cost: f64,
    /// Revenue credited at start (cash is realized at activity start).
    pub revenue: f64,
    pub d_min: u32,
    pub d_max: u32,
}

impl Activity {
    pub fn new(id: ActivityId, fixed_cost: f64, var_cost: f64, revenue: f64, d_min: u32, d_max: u32) -> Self {
        Self { id, fixed_cost, var_cost, revenue, d_min, d_max }
    }

    /// Zero-duration, zero-cash dummy node.
    pub fn dummy(id: ActivityId) -> Self {
        Self::new(id, 0.0, 0.0, 0.0, 0, 0)
    }

    /// Cash flow realized when the activity starts with the given duration:
    /// `c = c^F + d * c^V + g`.
    pub fn cash_flow(&self, duration: u32) -> f64 {
        self.fixed_cost + duration as f64 * self.var_cost + self.revenue
    }
}

/// Activity-on-node precedence network with discount factor and deadline.
///
/// Arcs are deduplicated and kept sorted; transitive arcs are accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectNetwork {
    pub activities: Vec<Activity>,
    pub arcs: Vec<(ActivityId, ActivityId)>,
    /// Discount factor per time unit, in (0, 1).
    pub beta: f64,
    /// Latest allowed start of the end dummy.
    pub deadline: u32,
}

impl ProjectNetwork {
    pub fn new(
        activities: Vec<Activity>,
        mut arcs: Vec<(ActivityId, ActivityId)>,
        beta: f64,
        deadline: u32,
    ) -> Self {
        arcs.sort_unstable();
        arcs.dedup();
        Self { activities, arcs, beta, deadline }
    }

    /// Total node count `n + 2` (dummies included).
    pub fn node_count(&self) -> usize {
        self.activities.len()
    }

    /// Index of the end dummy `n + 1`.
    pub fn end_node(&self) -> usize {
        self.activities.len() - 1
    }

    /// Number of non-dummy activities.
    pub fn non_dummy_count(&self) -> usize {
        self.activities.len().saturating_sub(2)
    }

    /// Per-activity maximum durations from the duration supports.
    pub fn max_durations(&self) -> Vec<u32> {
        self.activities.iter().map(|a| a.d_max).collect()
    }

    /// Per-activity minimum durations from the duration supports.
    pub fn min_durations(&self) -> Vec<u32> {
        self.activities.iter().map(|a| a.d_min).collect()
    }
}

/// Predecessor/successor adjacency plus a topological order, precomputed
/// once per network for the hot paths.
#[derive(Debug, Clone)]
pub struct Precedence {
    pub preds: Vec<Vec<ActivityId>>,
    pub succs: Vec<Vec<ActivityId>>,
    /// Topological order of all nodes; valid only if the arc set is acyclic.
    pub topo: Vec<ActivityId>,
}

impl Precedence {
    pub fn new(net: &ProjectNetwork) -> Result<Self> {
        Self::from_arcs(net.node_count(), &net.arcs)
    }

    pub fn from_arcs(n_nodes: usize, arcs: &[(ActivityId, ActivityId)]) -> Result<Self> {
        let mut preds = vec![Vec::new(); n_nodes];
        let mut succs = vec![Vec::new(); n_nodes];
        for &(i, j) in arcs {
            if i >= n_nodes || j >= n_nodes {
                return Err(Error::InvalidNetwork(format!("arc ({i}, {j}) references a missing node")));
            }
            preds[j].push(i);
            succs[i].push(j);
        }
        let topo = topological_order(n_nodes, &succs, &preds)
            .ok_or_else(|| Error::InvalidNetwork("precedence arcs contain a cycle".into()))?;
        Ok(Self { preds, succs, topo })
    }
}

fn topological_order(
    n_nodes: usize,
    succs: &[Vec<ActivityId>],
    preds: &[Vec<ActivityId>],
) -> Option<Vec<ActivityId>> {
    let mut indegree: Vec<usize> = preds.iter().map(Vec::len).collect();
    let mut queue: Vec<ActivityId> = (0..n_nodes).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n_nodes);
    while let Some(v) = queue.pop() {
        order.push(v);
        for &w in &succs[v] {
            indegree[w] -= 1;
            if indegree[w] == 0 {
                queue.push(w);
            }
        }
    }
    (order.len() == n_nodes).then_some(order)
}

/// One joint realization of all activity durations and cash flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub prob: f64,
    pub durations: Vec<u32>,
    pub cash_flows: Vec<f64>,
}

impl Scenario {
    /// Builds the scenario implied by activity parameters and a duration draw.
    pub fn from_durations(activities: &[Activity], durations: Vec<u32>, prob: f64) -> Self {
        let cash_flows = activities
            .iter()
            .zip(&durations)
            .map(|(a, &d)| a.cash_flow(d))
            .collect();
        Self { prob, durations, cash_flows }
    }
}

/// Integer start times indexed by activity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub start_times: Vec<u32>,
}

impl Schedule {
    pub fn new(start_times: Vec<u32>) -> Self {
        Self { start_times }
    }
}

/// A single structural violation found by [`validate_network`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Cycle,
    NonDenseIds { position: usize, found: ActivityId },
    DanglingActivity { id: ActivityId },
    StartHasPredecessor { arc: (ActivityId, ActivityId) },
    EndHasSuccessor { arc: (ActivityId, ActivityId) },
    BadDummyDuration { id: ActivityId },
    BadDurationSupport { id: ActivityId },
    ArcOutOfRange { arc: (ActivityId, ActivityId) },
    SelfLoop { id: ActivityId },
    BadBeta { beta: f64 },
    DeadlineUnreachable { deadline: u32, min_makespan: u32 },
    TooFewNodes { count: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Cycle => write!(f, "cycle in precedence arcs"),
            Violation::NonDenseIds { position, found } => {
                write!(f, "activity at position {position} has id {found}, ids must be dense 0..n+1")
            }
            Violation::DanglingActivity { id } => {
                write!(f, "dangling activity {id}: not on any path from 0 to the end node")
            }
            Violation::StartHasPredecessor { arc } => write!(f, "start dummy has predecessor via arc {arc:?}"),
            Violation::EndHasSuccessor { arc } => write!(f, "end dummy has successor via arc {arc:?}"),
            Violation::BadDummyDuration { id } => write!(f, "dummy {id} must have duration support [0, 0]"),
            Violation::BadDurationSupport { id } => write!(f, "activity {id} has d_min > d_max"),
            Violation::ArcOutOfRange { arc } => write!(f, "arc {arc:?} references a missing node"),
            Violation::SelfLoop { id } => write!(f, "self-loop on node {id}"),
            Violation::BadBeta { beta } => write!(f, "discount factor {beta} outside (0, 1)"),
            Violation::DeadlineUnreachable { deadline, min_makespan } => {
                write!(f, "deadline {deadline} below minimum achievable makespan {min_makespan}")
            }
            Violation::TooFewNodes { count } => write!(f, "network has {count} nodes, needs at least 2 dummies"),
        }
    }
}

/// Validation outcome: violations are data, not failures.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every structural invariant of a [`ProjectNetwork`] and reports all
/// violations found.
///
/// The deadline check uses the minimum duration support: an instance whose
/// luckiest realization cannot finish by the deadline is degenerate. Tighter
/// per-realization feasibility is checked by [`cpm_bounds`] at use time.
pub fn validate_network(net: &ProjectNetwork) -> ValidationReport {
    let mut v = Vec::new();
    let n_nodes = net.node_count();
    if n_nodes < 2 {
        v.push(Violation::TooFewNodes { count: n_nodes });
        return ValidationReport { violations: v };
    }
    let end = net.end_node();

    for (pos, a) in net.activities.iter().enumerate() {
        if a.id != pos {
            v.push(Violation::NonDenseIds { position: pos, found: a.id });
        }
        if a.d_min > a.d_max {
            v.push(Violation::BadDurationSupport { id: pos });
        }
    }
    for &id in &[0, end] {
        let a = &net.activities[id];
        if a.d_min != 0 || a.d_max != 0 {
            v.push(Violation::BadDummyDuration { id });
        }
    }
    if !(net.beta > 0.0 && net.beta < 1.0) {
        v.push(Violation::BadBeta { beta: net.beta });
    }

    let mut arcs_ok = true;
    for &(i, j) in &net.arcs {
        if i >= n_nodes || j >= n_nodes {
            v.push(Violation::ArcOutOfRange { arc: (i, j) });
            arcs_ok = false;
            continue;
        }
        if i == j {
            v.push(Violation::SelfLoop { id: i });
            arcs_ok = false;
        }
        if j == 0 {
            v.push(Violation::StartHasPredecessor { arc: (i, j) });
        }
        if i == end {
            v.push(Violation::EndHasSuccessor { arc: (i, j) });
        }
    }
    if !arcs_ok {
        return ValidationReport { violations: v };
    }

    let prec = match Precedence::from_arcs(n_nodes, &net.arcs) {
        Ok(p) => p,
        Err(_) => {
            v.push(Violation::Cycle);
            return ValidationReport { violations: v };
        }
    };

    // Every non-dummy must be reachable from 0 and co-reachable to n+1.
    let fwd = reachable(n_nodes, &prec.succs, 0);
    let bwd = reachable(n_nodes, &prec.preds, end);
    for id in 1..end {
        if !(fwd[id] && bwd[id]) {
            v.push(Violation::DanglingActivity { id });
        }
    }

    if v.is_empty() {
        let min_durations = net.min_durations();
        if let Err(Error::InfeasibleDeadline { makespan, deadline }) =
            cpm_bounds(net, &min_durations, net.deadline)
        {
            v.push(Violation::DeadlineUnreachable { deadline, min_makespan: makespan });
        }
    }

    ValidationReport { violations: v }
}

fn reachable(n_nodes: usize, adj: &[Vec<ActivityId>], from: ActivityId) -> Vec<bool> {
    let mut seen = vec![false; n_nodes];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(u) = stack.pop() {
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

/// Earliest/latest start times from forward and backward CPM passes.
///
/// The forward pass anchors `t_0 = 0`; the backward pass anchors the end
/// node at `deadline`. Fails with [`Error::InfeasibleDeadline`] when even the
/// earliest schedule overshoots the deadline.
pub fn cpm_bounds(net: &ProjectNetwork, durations: &[u32], deadline: u32) -> Result<(Vec<u32>, Vec<u32>)> {
    let prec = Precedence::new(net)?;
    let n = net.node_count();
    let lb = vec![0u32; n];
    let ub = vec![u32::MAX; n];
    cpm_bounds_constrained(&prec, durations, deadline, &lb, &ub)
}

/// CPM bounds with extra per-activity lower/upper start bounds folded in.
///
/// `ub[j] == u32::MAX` means unbounded. Used by the deterministic solvers to
/// carry conditioning constraints (fixed starts become `lb == ub`).
pub fn cpm_bounds_constrained(
    prec: &Precedence,
    durations: &[u32],
    deadline: u32,
    lb: &[u32],
    ub: &[u32],
) -> Result<(Vec<u32>, Vec<u32>)> {
    let n = prec.preds.len();
    assert_eq!(durations.len(), n, "duration vector length mismatch");
    let end = n - 1;

    let mut es = lb.to_vec();
    for &j in &prec.topo {
        for &i in &prec.preds[j] {
            es[j] = es[j].max(es[i].saturating_add(durations[i]));
        }
    }
    if es[end] > deadline {
        return Err(Error::InfeasibleDeadline { makespan: es[end], deadline });
    }

    let mut ls = vec![u32::MAX; n];
    for (j, l) in ls.iter_mut().enumerate() {
        *l = ub[j].min(if j == end { deadline } else { u32::MAX });
    }
    ls[end] = ls[end].min(deadline);
    for &j in prec.topo.iter().rev() {
        for &i in &prec.preds[j] {
            let latest = ls[j].saturating_sub(durations[i]);
            if ls[j] < durations[i] {
                return Err(Error::InfeasibleConstraints(format!(
                    "activity {i} cannot finish before the latest start of {j}"
                )));
            }
            ls[i] = ls[i].min(latest);
        }
    }
    for j in 0..n {
        if es[j] > ls[j] {
            return Err(Error::InfeasibleConstraints(format!(
                "activity {j}: earliest start {} exceeds latest start {}",
                es[j], ls[j]
            )));
        }
    }
    Ok((es, ls))
}

/// Net present value of a schedule: `sum_j cash[j] * beta^{t_j}`.
///
/// Pure evaluation; precedence feasibility is the caller's duty.
pub fn schedule_npv(sched: &Schedule, cash_flows: &[f64], beta: f64) -> f64 {
    sched
        .start_times
        .iter()
        .zip(cash_flows)
        .map(|(&t, &c)| c * beta.powi(t as i32))
        .sum()
}

#[cfg(test)]
pub(crate) mod test_fixtures {
    use super::*;

    /// Five-node fan network: 0 -> 1 -> {2, 3} -> 4, cash
    /// (0, -90, -5500, -90, +10000), durations d3 in {1, 10}.
    pub fn example1_network() -> ProjectNetwork {
        let activities = vec![
            Activity::dummy(0),
            Activity::new(1, -90.0, 0.0, 0.0, 1, 1),
            Activity::new(2, -5500.0, 0.0, 0.0, 5, 5),
            Activity::new(3, -90.0, 0.0, 0.0, 1, 10),
            Activity::new(4, 0.0, 0.0, 10000.0, 0, 0),
        ];
        let arcs = vec![(0, 1), (1, 2), (1, 3), (2, 4), (3, 4)];
        ProjectNetwork::new(activities, arcs, 0.9, 40)
    }

    pub fn example1_cash() -> Vec<f64> {
        vec![0.0, -90.0, -5500.0, -90.0, 10000.0]
    }
}
