//! Exact deterministic max-NPV scheduling.
//!
//! `max sum_j c_j beta^{t_j}` subject to precedence, a deadline on the end
//! node, integrality, and optional fixed/lower-bound start constraints.
//!
//! Under `y_j = beta^{t_j}` the problem is a linear program over a dual
//! network polytope, so the ascent below is exact: every feasible improving
//! direction at a schedule is a joint +-1 shift of a set closed under the
//! tight arcs, the objective is monotone along each such ray, and the best
//! such set is a minimum-weight closure, found by a max-flow cut. The
//! brute-force enumerator provides an independent agreement oracle.

use crate::error::{Error, Result};
use crate::project::{cpm_bounds_constrained, Precedence, ProjectNetwork, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Fixed(u32),
    LowerBound(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StartConstraint {
    pub activity: usize,
    pub kind: ConstraintKind,
}

impl StartConstraint {
    pub fn fixed(activity: usize, t: u32) -> Self {
        Self { activity, kind: ConstraintKind::Fixed(t) }
    }

    pub fn lower_bound(activity: usize, t: u32) -> Self {
        Self { activity, kind: ConstraintKind::LowerBound(t) }
    }
}

/// One deterministic scheduling problem: realized durations and cash flows
/// over a network, plus conditioning constraints on start times.
#[derive(Debug, Clone)]
pub struct DetProblem<'a> {
    pub network: &'a ProjectNetwork,
    pub prec: &'a Precedence,
    pub durations: &'a [u32],
    pub cash: &'a [f64],
    pub constraints: &'a [StartConstraint],
}

impl<'a> DetProblem<'a> {
    pub fn new(
        network: &'a ProjectNetwork,
        prec: &'a Precedence,
        durations: &'a [u32],
        cash: &'a [f64],
        constraints: &'a [StartConstraint],
    ) -> Self {
        Self { network, prec, durations, cash, constraints }
    }
}

/// Effective per-node start bounds from the problem constraints.
/// `t_0 = 0` is always enforced.
fn start_bounds(p: &DetProblem<'_>) -> Result<(Vec<u32>, Vec<u32>)> {
    let n = p.network.node_count();
    let mut lb = vec![0u32; n];
    let mut ub = vec![u32::MAX; n];
    ub[0] = 0;
    for c in p.constraints {
        if c.activity >= n {
            return Err(Error::InfeasibleConstraints(format!(
                "constraint references missing activity {}",
                c.activity
            )));
        }
        match c.kind {
            ConstraintKind::Fixed(t) => {
                lb[c.activity] = lb[c.activity].max(t);
                ub[c.activity] = ub[c.activity].min(t);
            }
            ConstraintKind::LowerBound(t) => {
                lb[c.activity] = lb[c.activity].max(t);
            }
        }
    }
    for j in 0..n {
        if lb[j] > ub[j] {
            return Err(Error::InfeasibleConstraints(format!(
                "activity {j}: lower bound {} above upper bound {}",
                lb[j], ub[j]
            )));
        }
    }
    Ok((lb, ub))
}

fn objective(t: &[u32], cash: &[f64], beta: f64) -> f64 {
    t.iter().zip(cash).map(|(&tj, &c)| c * beta.powi(tj as i32)).sum()
}

/// Exact solver. Starts from the cash-signed heuristic schedule and applies
/// improving closed-set shifts until none exists.
pub fn solve_det_npv(p: &DetProblem<'_>) -> Result<(Schedule, f64)> {
    let n = p.network.node_count();
    let end = n - 1;
    let beta = p.network.beta;
    let deadline = p.network.deadline;
    let (lb, ub) = start_bounds(p)?;
    let (es, ls) = cpm_bounds_constrained(p.prec, p.durations, deadline, &lb, &ub)?;

    // Heuristic start: revenue early, cost late, repaired to feasibility.
    let mut t = vec![0u32; n];
    for &j in &p.prec.topo {
        let candidate = if p.cash[j] >= 0.0 { es[j] } else { ls[j] };
        let mut lo = es[j];
        for &i in &p.prec.preds[j] {
            lo = lo.max(t[i] + p.durations[i]);
        }
        t[j] = candidate.max(lo);
        debug_assert!(t[j] <= ls[j]);
    }

    // Upper bound actually binding per node: only explicit constraints and
    // the deadline on the end node; interior latest starts are implied.
    let mut hard_ub = ub.clone();
    hard_ub[end] = hard_ub[end].min(deadline);

    const IMPROVE_EPS: f64 = 1e-11;
    let mut tight_succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut tight_pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    loop {
        for v in tight_succ.iter_mut().chain(tight_pred.iter_mut()) {
            v.clear();
        }
        for &(i, j) in &p.network.arcs {
            if t[j] == t[i] + p.durations[i] {
                tight_succ[i].push(j);
                tight_pred[j].push(i);
            }
        }
        let w: Vec<f64> = (0..n).map(|j| p.cash[j] * beta.powi(t[j] as i32)).collect();

        // Delay direction: a tight-successor-closed set of nodes below their
        // upper bounds with negative total discounted weight.
        let delay_allowed: Vec<bool> = allowed_nodes(n, &tight_succ, |j| t[j] < hard_ub[j]);
        let delay_set = min_weight_closure(n, &tight_succ, &w, &delay_allowed);
        let delay_gain = delay_set
            .as_ref()
            .map(|s| {
                let a: f64 = s.iter().map(|&j| w[j]).sum();
                a * (beta - 1.0)
            })
            .unwrap_or(0.0);

        // Advance direction: tight-predecessor-closed, above lower bounds,
        // positive total weight.
        let neg_w: Vec<f64> = w.iter().map(|v| -v).collect();
        let adv_allowed: Vec<bool> = allowed_nodes(n, &tight_pred, |j| t[j] > lb[j]);
        let adv_set = min_weight_closure(n, &tight_pred, &neg_w, &adv_allowed);
        let adv_gain = adv_set
            .as_ref()
            .map(|s| {
                let a: f64 = s.iter().map(|&j| w[j]).sum();
                a * (1.0 / beta - 1.0)
            })
            .unwrap_or(0.0);

        if delay_gain <= IMPROVE_EPS && adv_gain <= IMPROVE_EPS {
            break;
        }

        if delay_gain >= adv_gain {
            let set = delay_set.unwrap();
            let mut in_set = vec![false; n];
            set.iter().for_each(|&j| in_set[j] = true);
            let mut shift = u32::MAX;
            for &j in &set {
                shift = shift.min(hard_ub[j] - t[j]);
            }
            for &(i, j) in &p.network.arcs {
                if in_set[i] && !in_set[j] {
                    shift = shift.min(t[j] - t[i] - p.durations[i]);
                }
            }
            debug_assert!(shift >= 1);
            for &j in &set {
                t[j] += shift;
            }
        } else {
            let set = adv_set.unwrap();
            let mut in_set = vec![false; n];
            set.iter().for_each(|&j| in_set[j] = true);
            let mut shift = u32::MAX;
            for &j in &set {
                shift = shift.min(t[j] - lb[j]);
            }
            for &(i, j) in &p.network.arcs {
                if in_set[j] && !in_set[i] {
                    shift = shift.min(t[j] - t[i] - p.durations[i]);
                }
            }
            debug_assert!(shift >= 1);
            for &j in &set {
                t[j] -= shift;
            }
        }
    }

    let value = objective(&t, p.cash, beta);
    Ok((Schedule::new(t), value))
}

/// Nodes whose closure under `deps` stays mobile: a node is excluded if any
/// node reachable through `deps` fails the mobility predicate.
fn allowed_nodes(n: usize, deps: &[Vec<usize>], mobile: impl Fn(usize) -> bool) -> Vec<bool> {
    // allowed[j] = mobile(j) and all dep-reachable nodes mobile. Iterate to
    // fixpoint (dependency graph is acyclic, a few sweeps suffice).
    let mut allowed: Vec<bool> = (0..n).map(&mobile).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for j in 0..n {
            if allowed[j] && deps[j].iter().any(|&k| !allowed[k]) {
                allowed[j] = false;
                changed = true;
            }
        }
    }
    allowed
}

/// Minimum-weight nonempty closed set under `deps` restricted to `allowed`
/// nodes, by the max-flow project-selection construction. Returns `None`
/// when no closed set has negative weight.
fn min_weight_closure(n: usize, deps: &[Vec<usize>], w: &[f64], allowed: &[bool]) -> Option<Vec<usize>> {
    // Maximize sum of (-w_j) over closed S. Source->j with cap -w_j for
    // w_j < 0, j->sink with cap w_j for w_j > 0, dependency arcs infinite.
    let source = n;
    let sink = n + 1;
    let mut flow = MaxFlow::new(n + 2);
    let mut gain = 0.0;
    for j in 0..n {
        if !allowed[j] {
            continue;
        }
        if w[j] < 0.0 {
            flow.add_edge(source, j, -w[j]);
            gain += -w[j];
        } else if w[j] > 0.0 {
            flow.add_edge(j, sink, w[j]);
        }
        for &k in &deps[j] {
            debug_assert!(allowed[k]);
            flow.add_edge(j, k, f64::INFINITY);
        }
    }
    if gain == 0.0 {
        return None;
    }
    let cut = flow.max_flow(source, sink);
    // Accumulated rounding in the flow sums can leave a sliver above zero
    // even when the cut saturates every source edge; require a closure
    // value clearly above the noise floor.
    if gain - cut <= 1e-9 * gain.max(1.0) {
        return None;
    }
    let side = flow.source_side(source);
    let set: Vec<usize> = (0..n).filter(|&j| side[j]).collect();
    if set.is_empty() {
        return None;
    }
    Some(set)
}

/// Edmonds-Karp max-flow on a tiny graph; augmentation count is bounded by
/// V*E regardless of the real-valued capacities.
struct MaxFlow {
    n: usize,
    // edge list: (to, cap); reverse edge at idx^1.
    edges: Vec<(usize, f64)>,
    adj: Vec<Vec<usize>>,
}

impl MaxFlow {
    fn new(n: usize) -> Self {
        Self { n, edges: Vec::new(), adj: vec![Vec::new(); n] }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: f64) {
        let idx = self.edges.len();
        self.edges.push((to, cap));
        self.edges.push((from, 0.0));
        self.adj[from].push(idx);
        self.adj[to].push(idx + 1);
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        loop {
            let mut parent_edge = vec![usize::MAX; self.n];
            let mut visited = vec![false; self.n];
            visited[s] = true;
            let mut queue = std::collections::VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &e in &self.adj[u] {
                    let (to, cap) = self.edges[e];
                    if cap > 1e-14 && !visited[to] {
                        visited[to] = true;
                        parent_edge[to] = e;
                        queue.push_back(to);
                    }
                }
            }
            if !visited[t] {
                return total;
            }
            let mut bottleneck = f64::INFINITY;
            let mut v = t;
            while v != s {
                let e = parent_edge[v];
                bottleneck = bottleneck.min(self.edges[e].1);
                v = self.edges[e ^ 1].0;
            }
            let mut v = t;
            while v != s {
                let e = parent_edge[v];
                self.edges[e].1 -= bottleneck;
                self.edges[e ^ 1].1 += bottleneck;
                v = self.edges[e ^ 1].0;
            }
            total += bottleneck;
        }
    }

    /// Nodes reachable from the source in the residual graph.
    fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &e in &self.adj[u] {
                let (to, cap) = self.edges[e];
                if cap > 1e-14 && !seen[to] {
                    seen[to] = true;
                    stack.push(to);
                }
            }
        }
        seen
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BruteLimits {
    pub max_nondummy: usize,
    pub max_deadline: u32,
}

impl Default for BruteLimits {
    fn default() -> Self {
        Self { max_nondummy: 5, max_deadline: 20 }
    }
}

/// Exhaustive enumeration of integer start times within the CPM windows, in
/// topological order, with an admissible per-activity bound for pruning.
/// Exact on guarded sizes; the independent oracle for [`solve_det_npv`].
pub fn brute_force_det_npv(p: &DetProblem<'_>, limits: BruteLimits) -> Result<(Schedule, f64)> {
    let n = p.network.node_count();
    if p.network.non_dummy_count() > limits.max_nondummy {
        return Err(Error::LimitExceeded(format!(
            "{} non-dummy activities exceed the brute-force guard {}",
            p.network.non_dummy_count(),
            limits.max_nondummy
        )));
    }
    if p.network.deadline > limits.max_deadline {
        return Err(Error::LimitExceeded(format!(
            "deadline {} exceeds the brute-force guard {}",
            p.network.deadline, limits.max_deadline
        )));
    }
    let beta = p.network.beta;
    let (lb, ub) = start_bounds(p)?;
    let (es, ls) = cpm_bounds_constrained(p.prec, p.durations, p.network.deadline, &lb, &ub)?;

    // Best single-term value each activity can contribute anywhere in its
    // window; used as an admissible completion bound.
    let best_term: Vec<f64> = (0..n)
        .map(|j| {
            if p.cash[j] >= 0.0 {
                p.cash[j] * beta.powi(es[j] as i32)
            } else {
                p.cash[j] * beta.powi(ls[j] as i32)
            }
        })
        .collect();
    let order = &p.prec.topo;
    let mut suffix_bound = vec![0.0; n + 1];
    for pos in (0..n).rev() {
        suffix_bound[pos] = suffix_bound[pos + 1] + best_term[order[pos]];
    }

    let mut t = vec![0u32; n];
    let mut best_value = f64::NEG_INFINITY;
    let mut best_schedule = vec![0u32; n];

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        pos: usize,
        partial: f64,
        p: &DetProblem<'_>,
        order: &[usize],
        es: &[u32],
        ls: &[u32],
        suffix_bound: &[f64],
        t: &mut Vec<u32>,
        best_value: &mut f64,
        best_schedule: &mut Vec<u32>,
    ) {
        if pos == order.len() {
            if partial > *best_value {
                *best_value = partial;
                best_schedule.copy_from_slice(t);
            }
            return;
        }
        if partial + suffix_bound[pos] <= *best_value + 1e-12 {
            return;
        }
        let j = order[pos];
        let mut lo = es[j];
        for &i in &p.prec.preds[j] {
            lo = lo.max(t[i] + p.durations[i]);
        }
        let beta = p.network.beta;
        for tj in lo..=ls[j] {
            t[j] = tj;
            let term = p.cash[j] * beta.powi(tj as i32);
            dfs(pos + 1, partial + term, p, order, es, ls, suffix_bound, t, best_value, best_schedule);
        }
    }

    dfs(0, 0.0, p, order, &es, &ls, &suffix_bound, &mut t, &mut best_value, &mut best_schedule);
    if best_value == f64::NEG_INFINITY {
        return Err(Error::InfeasibleConstraints("no feasible schedule in the enumeration windows".into()));
    }
    Ok((Schedule::new(best_schedule), best_value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_instance, GenConfig, Instance};
    use crate::project::{cpm_bounds, Activity, Precedence, ProjectNetwork};

    fn example1() -> (ProjectNetwork, Precedence, Vec<f64>) {
        let inst = Instance::example1();
        let prec = Precedence::new(&inst.network).unwrap();
        let cash = inst.scenarios.as_ref().unwrap()[0].cash_flows.clone();
        (inst.network, prec, cash)
    }

    #[test]
    fn brute_force_example1_scenario1() {
        let (net, prec, cash) = example1();
        let durations = [0, 1, 5, 1, 0];
        let p = DetProblem::new(&net, &prec, &durations, &cash, &[]);
        let limits = BruteLimits { max_nondummy: 5, max_deadline: 40 };
        let (sched, value) = brute_force_det_npv(&p, limits).unwrap();
        assert_eq!(sched.start_times, vec![0, 0, 1, 5, 6]);
        assert!((value - 221.27).abs() < 0.01, "value = {value}");
    }

    #[test]
    fn solver_matches_brute_force_on_example1() {
        let (net, prec, cash) = example1();
        let limits = BruteLimits { max_nondummy: 5, max_deadline: 40 };
        for durations in [[0u32, 1, 5, 1, 0], [0, 1, 5, 10, 0]] {
            let p = DetProblem::new(&net, &prec, &durations, &cash, &[]);
            let (_, exact) = solve_det_npv(&p).unwrap();
            let (_, brute) = brute_force_det_npv(&p, limits).unwrap();
            assert!((exact - brute).abs() < 1e-9, "exact {exact} vs brute {brute}");
        }
        let durations = [0, 1, 5, 10, 0];
        let p = DetProblem::new(&net, &prec, &durations, &cash, &[]);
        let (sched, value) = solve_det_npv(&p).unwrap();
        assert_eq!(sched.start_times, vec![0, 0, 6, 1, 11]);
        assert!((value - 44.18).abs() < 0.01, "value = {value}");
    }

    #[test]
    fn all_positive_cash_schedules_earliest() {
        let (net, prec, _) = example1();
        let cash = vec![0.0, 10.0, 20.0, 30.0, 40.0];
        let durations = [0, 1, 5, 1, 0];
        let p = DetProblem::new(&net, &prec, &durations, &cash, &[]);
        let (sched, _) = solve_det_npv(&p).unwrap();
        let (es, _) = cpm_bounds(&net, &durations, net.deadline).unwrap();
        assert_eq!(sched.start_times, es);
    }

    #[test]
    fn single_negative_activity_delays_to_latest() {
        let activities = vec![
            Activity::dummy(0),
            Activity::new(1, -50.0, 0.0, 0.0, 2, 2),
            Activity::dummy(2),
        ];
        let net = ProjectNetwork::new(activities, vec![(0, 1), (1, 2)], 0.9, 10);
        let prec = Precedence::new(&net).unwrap();
        let durations = [0, 2, 0];
        let cash = [0.0, -50.0, 0.0];
        let p = DetProblem::new(&net, &prec, &durations, &cash, &[]);
        let (sched, value) = solve_det_npv(&p).unwrap();
        assert_eq!(sched.start_times[1], 8);
        assert!((value - (-50.0 * 0.9f64.powi(8))).abs() < 1e-9);
        let (bsched, bvalue) = brute_force_det_npv(&p, BruteLimits::default()).unwrap();
        assert_eq!(bsched.start_times[1], 8);
        assert!((value - bvalue).abs() < 1e-12);
    }

    #[test]
    fn dummies_only_is_zero() {
        let net = ProjectNetwork::new(vec![Activity::dummy(0), Activity::dummy(1)], vec![(0, 1)], 0.9, 5);
        let prec = Precedence::new(&net).unwrap();
        let p = DetProblem::new(&net, &prec, &[0, 0], &[0.0, 0.0], &[]);
        let (sched, value) = brute_force_det_npv(&p, BruteLimits::default()).unwrap();
        assert_eq!(value, 0.0);
        assert_eq!(sched.start_times[0], 0);
        let (_, solver_value) = solve_det_npv(&p).unwrap();
        assert_eq!(solver_value, 0.0);
    }

    #[test]
    fn fixed_constraints_are_respected() {
        let (net, prec, cash) = example1();
        let durations = [0, 1, 5, 1, 0];
        let constraints = [StartConstraint::fixed(2, 3), StartConstraint::lower_bound(3, 7)];
        let p = DetProblem::new(&net, &prec, &durations, &cash, &constraints);
        let (sched, value) = solve_det_npv(&p).unwrap();
        assert_eq!(sched.start_times[2], 3);
        assert!(sched.start_times[3] >= 7);
        let (bsched, bvalue) = brute_force_det_npv(
            &p,
            BruteLimits { max_nondummy: 5, max_deadline: 40 },
        )
        .unwrap();
        assert!((value - bvalue).abs() < 1e-9);
        assert_eq!(bsched.start_times[2], 3);
    }

    #[test]
    fn infeasible_constraints_error() {
        let (net, prec, cash) = example1();
        let durations = [0, 1, 5, 1, 0];
        let constraints = [StartConstraint::fixed(4, 2)]; // end before its work can finish
        let p = DetProblem::new(&net, &prec, &durations, &cash, &constraints);
        assert!(solve_det_npv(&p).is_err());
    }

    #[test]
    fn deadline_infeasibility_propagates() {
        let (mut net, _, cash) = example1();
        net.deadline = 5;
        let prec = Precedence::new(&net).unwrap();
        let durations = [0, 1, 5, 1, 0];
        let p = DetProblem::new(&net, &prec, &durations, &cash, &[]);
        assert!(matches!(solve_det_npv(&p), Err(Error::InfeasibleDeadline { .. })));
    }

    #[test]
    fn solver_agrees_with_brute_force_on_random_instances() {
        let mut checked = 0;
        for seed in 0..70u64 {
            let inst = generate_instance(&GenConfig::omega1(4, 2, seed)).unwrap();
            let mut net = inst.network.clone();
            // Anchor the deadline above the worst-case makespan with a
            // little slack so both solvers stay feasible and guarded.
            let (es, _) = crate::project::cpm_bounds(&net, &net.max_durations(), u32::MAX / 2).unwrap();
            net.deadline = es[net.end_node()] + 3;
            if net.deadline > BruteLimits::default().max_deadline {
                continue;
            }
            let prec = Precedence::new(&net).unwrap();
            for scenario in inst.scenarios.as_ref().unwrap() {
                let p = DetProblem::new(&net, &prec, &scenario.durations, &scenario.cash_flows, &[]);
                let (_, exact) = solve_det_npv(&p).unwrap();
                let (_, brute) = brute_force_det_npv(&p, BruteLimits::default()).unwrap();
                assert!(
                    (exact - brute).abs() < 1e-9,
                    "seed {seed}: exact {exact} vs brute {brute}"
                );
                checked += 1;
            }
        }
        assert!(checked > 30, "only {checked} comparisons ran");
    }

    #[test]
    fn brute_force_guards_trip() {
        let (net, prec, cash) = example1();
        let durations = [0, 1, 5, 1, 0];
        let p = DetProblem::new(&net, &prec, &durations, &cash, &[]);
        assert!(matches!(
            brute_force_det_npv(&p, BruteLimits { max_nondummy: 2, max_deadline: 40 }),
            Err(Error::LimitExceeded(_))
        ));
        assert!(matches!(
            brute_force_det_npv(&p, BruteLimits { max_nondummy: 5, max_deadline: 20 }),
            Err(Error::LimitExceeded(_))
        ));
    }
}
