//! Exact finite-horizon solution of the scheduling MDP by memoized backward
//! induction over observable states.
//!
//! The hidden scenario is marginalized through the posterior over scenarios
//! consistent with the observation: completed activities pin their realized
//! durations, in-progress activities lower-bound theirs. The observation
//! `(t, status, elapsed)` is a sufficient statistic; start times add nothing
//! beyond `t - elapsed`, so the memo key drops them.

use std::collections::HashMap;

use crate::env::Status;
use crate::error::{Error, Result};
use crate::instance::{Family, Instance};
use crate::project::Precedence;

pub const MDP_STATE_LIMIT: usize = 1_000_000;

/// Observable portion of the MDP state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObsState {
    pub t: u32,
    pub status: Vec<Status>,
    pub elapsed: Vec<u32>,
}

impl ObsState {
    pub fn initial(n_nodes: usize) -> Self {
        let mut status = vec![Status::NotStarted; n_nodes];
        status[0] = Status::Completed;
        Self { t: 0, status, elapsed: vec![0; n_nodes] }
    }

    fn key(&self) -> Vec<u8> {
        let mut key = Vec::with_capacity(2 + 2 * self.status.len());
        key.extend_from_slice(&(self.t as u16).to_le_bytes());
        for &s in &self.status {
            key.push(s as u8);
        }
        for &e in &self.elapsed {
            debug_assert!(e < 256);
            key.push(e as u8);
        }
        key
    }
}

#[derive(Debug, Clone)]
pub struct MdpSolution {
    /// Optimal expected NPV from the initial state.
    pub value: f64,
    /// Greedy action per visited observation key.
    pub policy: HashMap<Vec<u8>, usize>,
    pub states_visited: usize,
}

struct Solver<'a> {
    instance: &'a Instance,
    prec: Precedence,
    penalty: f64,
    allow_idle: bool,
    state_limit: usize,
    memo: HashMap<Vec<u8>, (f64, usize)>,
}

impl<'a> Solver<'a> {
    /// Posterior weights over scenarios consistent with the observation
    /// (uniform base measure; scenarios are equiprobable).
    fn consistent(&self, s: &ObsState) -> Vec<usize> {
        let scenarios = self.instance.scenarios.as_ref().unwrap();
        (0..scenarios.len())
            .filter(|&k| {
                let d = &scenarios[k].durations;
                s.status.iter().enumerate().all(|(j, &st)| match st {
                    Status::Completed => d[j] == s.elapsed[j],
                    Status::InProgress => d[j] > s.elapsed[j],
                    Status::NotStarted => true,
                })
            })
            .collect()
    }

    fn feasible_starts(&self, s: &ObsState) -> Vec<usize> {
        (1..s.status.len())
            .filter(|&j| {
                s.status[j] == Status::NotStarted
                    && self.prec.preds[j].iter().all(|&i| s.status[i] == Status::Completed)
            })
            .collect()
    }

    /// Completion-set distribution of the advance action: groups the
    /// consistent scenarios by which in-progress activities finish at `t+1`.
    /// This is the exact transition law of the time-advancing decision.
    fn advance_groups(&self, s: &ObsState, consistent: &[usize]) -> Vec<(Vec<usize>, f64)> {
        let scenarios = self.instance.scenarios.as_ref().unwrap();
        let mut groups: HashMap<Vec<usize>, usize> = HashMap::new();
        for &k in consistent {
            let d = &scenarios[k].durations;
            let completed: Vec<usize> = s
                .status
                .iter()
                .enumerate()
                .filter(|(j, &st)| st == Status::InProgress && d[*j] == s.elapsed[*j] + 1)
                .map(|(j, _)| j)
                .collect();
            *groups.entry(completed).or_insert(0) += 1;
        }
        let total = consistent.len() as f64;
        let mut out: Vec<(Vec<usize>, f64)> = groups
            .into_iter()
            .map(|(c, count)| (c, count as f64 / total))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    fn value(&mut self, s: &ObsState) -> Result<(f64, usize)> {
        let end = s.status.len() - 1;
        if s.status[end] == Status::Completed {
            return Ok((0.0, 0));
        }
        let key = s.key();
        if let Some(&v) = self.memo.get(&key) {
            return Ok(v);
        }
        if self.memo.len() >= self.state_limit {
            return Err(Error::StateSpaceExceeded { visited: self.memo.len(), limit: self.state_limit });
        }

        let beta = self.instance.network.beta;
        let deadline = self.instance.network.deadline;
        let scenarios = self.instance.scenarios.as_ref().unwrap();
        let consistent = self.consistent(s);
        debug_assert!(!consistent.is_empty(), "reachable state must admit a scenario");

        let mut best: Option<(f64, usize)> = None;

        // Start actions: cash (posterior mean) now, clock unchanged.
        for j in self.feasible_starts(s) {
            let mean_cash: f64 = consistent
                .iter()
                .map(|&k| scenarios[k].cash_flows[j])
                .sum::<f64>()
                / consistent.len() as f64;
            let zero_duration = consistent.iter().all(|&k| scenarios[k].durations[j] == 0);
            let q = if zero_duration && j == end {
                mean_cash
            } else {
                let mut next = s.clone();
                if zero_duration {
                    next.status[j] = Status::Completed;
                } else {
                    next.status[j] = Status::InProgress;
                }
                next.elapsed[j] = 0;
                mean_cash + self.value(&next)?.0
            };
            if best.is_none_or(|(bv, _)| q > bv) {
                best = Some((q, j));
            }
        }

        // Advance action: feasible while work is running, or always under
        // the idle-allowed relaxation.
        let any_active = s.status.contains(&Status::InProgress);
        let any_unstarted = s.status.contains(&Status::NotStarted);
        if any_active || (self.allow_idle && any_unstarted) {
            let q = if s.t + 1 > deadline {
                -self.penalty
            } else {
                let mut expect = 0.0;
                for (completed, prob) in self.advance_groups(s, &consistent) {
                    let mut next = s.clone();
                    next.t = s.t + 1;
                    for j in 0..next.status.len() {
                        if next.status[j] == Status::InProgress {
                            next.elapsed[j] += 1;
                        }
                    }
                    for j in completed {
                        next.status[j] = Status::Completed;
                    }
                    expect += prob * self.value(&next)?.0;
                }
                beta * expect
            };
            if best.is_none_or(|(bv, _)| q > bv) {
                best = Some((q, crate::env::NOOP_ACTION));
            }
        }

        let best = best.expect("live state offers at least one action");
        self.memo.insert(key, best);
        Ok(best)
    }
}

/// Optimal non-anticipative expected NPV by backward induction, with the
/// greedy policy table. Requires a finite-scenario instance; guarded against
/// state-space blowup.
///
/// `allow_idle` mirrors the environment flag: when set, time may pass with
/// nothing running. The idle-allowed value dominates every fixed schedule,
/// which is what makes the rigid-policy lower bound a theorem; the
/// restricted value matches the default environment dynamics.
pub fn exact_mdp_enpv(instance: &Instance, state_limit: usize, allow_idle: bool) -> Result<MdpSolution> {
    if instance.family != Family::Omega1 || instance.scenarios.is_none() {
        return Err(Error::InvalidConfig(
            "backward induction requires a finite-scenario instance".into(),
        ));
    }
    instance.validate()?;
    let prec = Precedence::new(&instance.network)?;
    let penalty = 2.0
        * instance
            .network
            .activities
            .iter()
            .map(|a| a.fixed_cost.abs() + 10.0 * a.var_cost.abs() + a.revenue)
            .sum::<f64>();
    let mut solver = Solver { instance, prec, penalty, allow_idle, state_limit, memo: HashMap::new() };
    let initial = ObsState::initial(instance.network.node_count());
    let (value, _) = solver.value(&initial)?;
    let policy: HashMap<Vec<u8>, usize> = solver.memo.iter().map(|(k, &(_, a))| (k.clone(), a)).collect();
    Ok(MdpSolution { value, policy, states_visited: solver.memo.len() })
}

/// Exact completion-set law of the advance action at an observation state,
/// exposed for distribution tests against simulated rollouts.
pub fn advance_distribution(instance: &Instance, s: &ObsState) -> Result<Vec<(Vec<usize>, f64)>> {
    if instance.scenarios.is_none() {
        return Err(Error::InvalidConfig("needs a finite-scenario instance".into()));
    }
    let prec = Precedence::new(&instance.network)?;
    let solver = Solver { instance, prec, penalty: 0.0, allow_idle: false, state_limit: usize::MAX, memo: HashMap::new() };
    let consistent = solver.consistent(s);
    if consistent.is_empty() {
        return Err(Error::NoConsistentScenario);
    }
    Ok(solver.advance_groups(s, &consistent))
}
