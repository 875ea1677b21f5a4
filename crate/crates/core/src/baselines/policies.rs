//! Baseline scheduling policies: expected value under perfect information,
//! the rigid (scenario-independent) schedule, and the event-driven dynamic
//! heuristic that weighs immediate starts against one-step delays.

use rand::Rng;

use crate::error::{Error, Result};
use crate::instance::{sample_duration, Family, Instance};
use crate::project::{Precedence, ProjectNetwork, Scenario, Schedule};

use super::det::{solve_det_npv, ConstraintKind, DetProblem, StartConstraint};

/// Observed execution history plus any extra start constraints, used to
/// condition perfect-information solves.
#[derive(Debug, Clone, Default)]
pub struct Conditioning {
    /// Current decision time; unstarted activities cannot start earlier.
    pub now: u32,
    /// Started activities with their realized start times (fixed).
    pub started: Vec<(usize, u32)>,
    /// Completed activities with their realized durations (scenario filter).
    pub completed_durations: Vec<(usize, u32)>,
    /// In-progress activities with observed elapsed time (scenario filter:
    /// the true duration strictly exceeds it).
    pub in_progress_elapsed: Vec<(usize, u32)>,
    /// Additional constraints, e.g. the start-now versus delay comparison.
    pub extra: Vec<StartConstraint>,
}

impl Conditioning {
    pub fn none() -> Self {
        Self::default()
    }

    fn scenario_consistent(&self, scenario: &Scenario) -> bool {
        self.completed_durations
            .iter()
            .all(|&(j, d)| scenario.durations[j] == d)
            && self
                .in_progress_elapsed
                .iter()
                .all(|&(j, e)| scenario.durations[j] > e)
    }

    #[allow(clippy::needless_range_loop)]
    fn constraints(&self, n_nodes: usize) -> Vec<StartConstraint> {
        let mut fixed = vec![false; n_nodes];
        let mut out = Vec::with_capacity(n_nodes + self.extra.len());
        for &(j, t) in &self.started {
            fixed[j] = true;
            out.push(StartConstraint { activity: j, kind: ConstraintKind::Fixed(t) });
        }
        for j in 1..n_nodes {
            if !fixed[j] && self.now > 0 {
                out.push(StartConstraint { activity: j, kind: ConstraintKind::LowerBound(self.now) });
            }
        }
        out.extend_from_slice(&self.extra);
        out
    }
}

/// Expected value under perfect information, conditioned on history.
///
/// Filters the scenario set to those consistent with the observation,
/// renormalizes, solves the deterministic optimum per surviving scenario
/// under the conditioning constraints, and returns the weighted sum.
pub fn ev_pi(
    network: &ProjectNetwork,
    prec: &Precedence,
    scenarios: &[Scenario],
    cond: &Conditioning,
) -> Result<f64> {
    let survivors: Vec<&Scenario> = scenarios.iter().filter(|s| cond.scenario_consistent(s)).collect();
    if survivors.is_empty() {
        return Err(Error::NoConsistentScenario);
    }
    let total_prob: f64 = survivors.iter().map(|s| s.prob).sum();
    let constraints = cond.constraints(network.node_count());
    let mut value = 0.0;
    for s in survivors {
        let p = DetProblem::new(network, prec, &s.durations, &s.cash_flows, &constraints);
        let (_, v) = solve_det_npv(&p)?;
        value += (s.prob / total_prob) * v;
    }
    Ok(value)
}

/// Rigid policy: one scenario-independent schedule feasible under worst-case
/// durations, maximizing the expected NPV (equivalently the NPV of the mean
/// cash flows). Returns the schedule and its exact expected value.
pub fn solve_rigid(instance: &Instance) -> Result<(Schedule, f64)> {
    let net = &instance.network;
    let n = net.node_count();
    let prec = Precedence::new(net)?;
    let (durations, mean_cash): (Vec<u32>, Vec<f64>) = match (&instance.family, &instance.scenarios) {
        (Family::Omega1, Some(scenarios)) => {
            let mut d_max = vec![0u32; n];
            let mut c_bar = vec![0.0; n];
            for s in scenarios {
                for j in 0..n {
                    d_max[j] = d_max[j].max(s.durations[j]);
                    c_bar[j] += s.prob * s.cash_flows[j];
                }
            }
            (d_max, c_bar)
        }
        _ => {
            let d_max = net.max_durations();
            let c_bar = net
                .activities
                .iter()
                .map(|a| {
                    let mean_d = (a.d_min + a.d_max) as f64 / 2.0;
                    a.fixed_cost + mean_d * a.var_cost + a.revenue
                })
                .collect();
            (d_max, c_bar)
        }
    };
    let p = DetProblem::new(net, &prec, &durations, &mean_cash, &[]);
    solve_det_npv(&p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynEpochMode {
    /// Re-examine eligible activities at every integer time.
    UnitStep,
    /// Jump between completion events.
    CompletionEvents,
}

#[derive(Debug, Clone, Copy)]
pub struct DynOptions {
    /// Sampled scenario bundles per decision for open-ended instances.
    pub k_samples: usize,
    pub epoch: DynEpochMode,
}

impl Default for DynOptions {
    fn default() -> Self {
        Self { k_samples: 30, epoch: DynEpochMode::UnitStep }
    }
}

#[derive(Debug, Clone)]
pub struct DynOutcome {
    pub start_times: Vec<i64>,
    pub npv: f64,
    pub failed: bool,
}

/// Event-driven dynamic policy on one driving scenario.
///
/// At each decision time, each eligible activity (ascending id) is started
/// if the perfect-information value of starting now is at least that of a
/// one-step delay, both conditioned on the observed history; a started
/// activity immediately joins the conditioning for later candidates. For
/// open-ended instances the scenario set is `k_samples` fresh duration
/// bundles consistent with the history, drawn per decision.
pub fn run_dyn<R: Rng>(
    instance: &Instance,
    driving: &Scenario,
    opts: DynOptions,
    rng: &mut R,
) -> Result<DynOutcome> {
    let net = &instance.network;
    let n = net.node_count();
    let end = n - 1;
    let prec = Precedence::new(net)?;
    let deadline = net.deadline;

    let mut start: Vec<i64> = vec![-1; n];
    start[0] = 0;
    let mut t: u32 = 0;

    let finish = |j: usize, start: &[i64]| -> Option<u32> {
        (start[j] >= 0).then(|| start[j] as u32 + driving.durations[j])
    };

    while start[end] < 0 {
        if t > deadline {
            break;
        }
        // History at time t under the driving scenario.
        let mut cond = Conditioning { now: t, ..Conditioning::none() };
        let mut completed = vec![false; n];
        for j in 0..n {
            if start[j] >= 0 {
                cond.started.push((j, start[j] as u32));
                let f = finish(j, &start).unwrap();
                if f <= t {
                    completed[j] = true;
                    cond.completed_durations.push((j, driving.durations[j]));
                } else {
                    cond.in_progress_elapsed.push((j, t - start[j] as u32));
                }
            }
        }

        let eligible: Vec<usize> = (1..n)
            .filter(|&j| start[j] < 0 && prec.preds[j].iter().all(|&i| completed[i]))
            .collect();

        for j in eligible {
            let scenario_set: Vec<Scenario> = match (&instance.family, &instance.scenarios) {
                (Family::Omega1, Some(s)) => s.clone(),
                _ => sample_consistent_bundles(instance, &cond, opts.k_samples, rng),
            };
            let mut now_cond = cond.clone();
            now_cond.extra.push(StartConstraint::fixed(j, t));
            let v_now = ev_pi_or_neg_inf(net, &prec, &scenario_set, &now_cond);

            let mut delay_cond = cond.clone();
            delay_cond.extra.push(StartConstraint::lower_bound(j, t + 1));
            let v_delay = ev_pi_or_neg_inf(net, &prec, &scenario_set, &delay_cond);

            if v_now >= v_delay && v_now > f64::NEG_INFINITY {
                start[j] = t as i64;
                cond.started.push((j, t));
                if driving.durations[j] == 0 {
                    completed[j] = true;
                    cond.completed_durations.push((j, 0));
                } else {
                    cond.in_progress_elapsed.push((j, 0));
                }
            }
        }
        if start[end] >= 0 {
            break;
        }

        t = match opts.epoch {
            DynEpochMode::UnitStep => t + 1,
            DynEpochMode::CompletionEvents => {
                let next_event = (0..n)
                    .filter_map(|j| finish(j, &start))
                    .filter(|&f| f > t)
                    .min();
                next_event.unwrap_or(t + 1).max(t + 1)
            }
        };
    }

    let failed = start[end] < 0 || start[end] as u32 > deadline;
    let beta = net.beta;
    let npv = (0..n)
        .filter(|&j| start[j] >= 0)
        .map(|j| driving.cash_flows[j] * beta.powi(start[j] as i32))
        .sum();
    Ok(DynOutcome { start_times: start, npv, failed })
}

fn ev_pi_or_neg_inf(
    net: &ProjectNetwork,
    prec: &Precedence,
    scenarios: &[Scenario],
    cond: &Conditioning,
) -> f64 {
    ev_pi(net, prec, scenarios, cond).unwrap_or(f64::NEG_INFINITY)
}

/// Duration bundles drawn from the supports, conditioned on the observed
/// history: completed durations are copied, in-progress ones are drawn above
/// the observed elapsed time.
fn sample_consistent_bundles<R: Rng>(
    instance: &Instance,
    cond: &Conditioning,
    k: usize,
    rng: &mut R,
) -> Vec<Scenario> {
    let net = &instance.network;
    let n = net.node_count();
    let prob = 1.0 / k as f64;
    let mut completed = vec![None; n];
    for &(j, d) in &cond.completed_durations {
        completed[j] = Some(d);
    }
    let mut running_floor = vec![None; n];
    for &(j, e) in &cond.in_progress_elapsed {
        running_floor[j] = Some(e);
    }
    (0..k)
        .map(|_| {
            let durations: Vec<u32> = (0..n)
                .map(|j| {
                    if let Some(d) = completed[j] {
                        d
                    } else if let Some(e) = running_floor[j] {
                        let a = &net.activities[j];
                        sample_duration(rng, (e + 1).min(a.d_max), a.d_max)
                    } else {
                        let a = &net.activities[j];
                        sample_duration(rng, a.d_min, a.d_max)
                    }
                })
                .collect();
            Scenario::from_durations(&net.activities, durations, prob)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::project::Activity;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn example1() -> Instance {
        Instance::example1()
    }

    #[test]
    fn ev_pi_example1_unconditioned() {
        let inst = example1();
        let prec = Precedence::new(&inst.network).unwrap();
        let v = ev_pi(&inst.network, &prec, inst.scenarios.as_ref().unwrap(), &Conditioning::none()).unwrap();
        assert!((v - 132.72).abs() < 0.02, "ev_pi = {v}");
    }

    #[test]
    fn ev_pi_single_scenario_equals_det_optimum() {
        let inst = example1();
        let prec = Precedence::new(&inst.network).unwrap();
        let one = &inst.scenarios.as_ref().unwrap()[..1];
        let mut only = one.to_vec();
        only[0].prob = 1.0;
        let v = ev_pi(&inst.network, &prec, &only, &Conditioning::none()).unwrap();
        let p = DetProblem::new(&inst.network, &prec, &only[0].durations, &only[0].cash_flows, &[]);
        let (_, det) = solve_det_npv(&p).unwrap();
        assert!((v - det).abs() < 1e-12);
    }

    #[test]
    fn ev_pi_fully_constrained_is_schedule_evaluation() {
        let inst = example1();
        let prec = Precedence::new(&inst.network).unwrap();
        // Fix the rigid schedule for every activity; the solve degenerates
        // to evaluating that schedule per scenario.
        let plan = [0u32, 0, 6, 1, 11];
        let cond = Conditioning {
            now: 0,
            started: plan.iter().enumerate().map(|(j, &t)| (j, t)).collect(),
            ..Conditioning::none()
        };
        let v = ev_pi(&inst.network, &prec, inst.scenarios.as_ref().unwrap(), &cond).unwrap();
        let scenarios = inst.scenarios.as_ref().unwrap();
        let expect: f64 = scenarios
            .iter()
            .map(|s| {
                s.prob
                    * crate::project::schedule_npv(
                        &Schedule::new(plan.to_vec()),
                        &s.cash_flows,
                        inst.network.beta,
                    )
            })
            .sum();
        assert!((v - expect).abs() < 1e-9);
    }

    #[test]
    fn ev_pi_conditioning_is_monotone() {
        let inst = example1();
        let prec = Precedence::new(&inst.network).unwrap();
        let scenarios = inst.scenarios.as_ref().unwrap();
        let free = ev_pi(&inst.network, &prec, scenarios, &Conditioning::none()).unwrap();
        let mut cond = Conditioning::none();
        cond.extra.push(StartConstraint::lower_bound(2, 3));
        let constrained = ev_pi(&inst.network, &prec, scenarios, &cond).unwrap();
        assert!(constrained <= free + 1e-12);
        cond.extra.push(StartConstraint::fixed(3, 2));
        let more = ev_pi(&inst.network, &prec, scenarios, &cond).unwrap();
        assert!(more <= constrained + 1e-12);
    }

    #[test]
    fn ev_pi_inconsistent_history_errors() {
        let inst = example1();
        let prec = Precedence::new(&inst.network).unwrap();
        let cond = Conditioning {
            completed_durations: vec![(3, 7)], // no scenario has duration 7
            ..Conditioning::none()
        };
        assert!(matches!(
            ev_pi(&inst.network, &prec, inst.scenarios.as_ref().unwrap(), &cond),
            Err(Error::NoConsistentScenario)
        ));
    }

    #[test]
    fn rigid_example1_schedule_and_value() {
        let inst = example1();
        let (sched, value) = solve_rigid(&inst).unwrap();
        assert_eq!(sched.start_times, vec![0, 0, 6, 1, 11]);
        assert!((value - 44.18).abs() < 0.01, "rigid value = {value}");
        // Gap versus perfect information.
        let prec = Precedence::new(&inst.network).unwrap();
        let n_star =
            ev_pi(&inst.network, &prec, inst.scenarios.as_ref().unwrap(), &Conditioning::none()).unwrap();
        let gap = 100.0 * (n_star - value) / n_star;
        assert!((gap - 66.71).abs() < 0.05, "gap = {gap}");
    }

    #[test]
    fn rigid_schedule_is_feasible_under_every_scenario() {
        let inst = example1();
        let (sched, _) = solve_rigid(&inst).unwrap();
        for s in inst.scenarios.as_ref().unwrap() {
            for &(i, j) in &inst.network.arcs {
                assert!(
                    sched.start_times[j] >= sched.start_times[i] + s.durations[i],
                    "arc ({i},{j}) violated"
                );
            }
            assert!(sched.start_times[inst.network.end_node()] <= inst.network.deadline);
        }
    }

    #[test]
    fn rigid_single_scenario_equals_det_optimum() {
        let activities = vec![
            Activity::dummy(0),
            Activity::new(1, -20.0, 0.0, 50.0, 3, 3),
            Activity::dummy(2),
        ];
        let network = ProjectNetwork::new(activities, vec![(0, 1), (1, 2)], 0.9, 8);
        let scenarios = vec![Scenario::from_durations(&network.activities, vec![0, 3, 0], 1.0)];
        let inst = Instance { network, scenarios: Some(scenarios), family: Family::Omega1, provenance: None };
        let (_, rigid) = solve_rigid(&inst).unwrap();
        let prec = Precedence::new(&inst.network).unwrap();
        let s = &inst.scenarios.as_ref().unwrap()[0];
        let p = DetProblem::new(&inst.network, &prec, &s.durations, &s.cash_flows, &[]);
        let (_, det) = solve_det_npv(&p).unwrap();
        assert!((rigid - det).abs() < 1e-12);
    }

    #[test]
    fn dyn_single_scenario_reaches_det_optimum() {
        let inst = {
            let mut i = example1();
            i.scenarios.as_mut().unwrap().truncate(1);
            i.scenarios.as_mut().unwrap()[0].prob = 1.0;
            i
        };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let driving = inst.scenarios.as_ref().unwrap()[0].clone();
        let out = run_dyn(&inst, &driving, DynOptions::default(), &mut rng).unwrap();
        assert!(!out.failed);
        assert!((out.npv - 221.27).abs() < 0.01, "dyn npv = {}", out.npv);
    }

    #[test]
    fn dyn_starts_positive_cash_immediately() {
        let activities = vec![
            Activity::dummy(0),
            Activity::new(1, 10.0, 0.0, 5.0, 2, 2),
            Activity::new(2, 3.0, 0.0, 7.0, 1, 1),
            Activity::dummy(3),
        ];
        let network = ProjectNetwork::new(activities, vec![(0, 1), (0, 2), (1, 3), (2, 3)], 0.9, 10);
        let scenarios = vec![Scenario::from_durations(&network.activities, vec![0, 2, 1, 0], 1.0)];
        let inst = Instance { network, scenarios: Some(scenarios), family: Family::Omega1, provenance: None };
        let driving = inst.scenarios.as_ref().unwrap()[0].clone();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let out = run_dyn(&inst, &driving, DynOptions::default(), &mut rng).unwrap();
        assert_eq!(out.start_times, vec![0, 0, 0, 2]);
    }

    #[test]
    fn dyn_defers_big_cost_on_example1() {
        let inst = example1();
        let driving = inst.scenarios.as_ref().unwrap()[0].clone();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let out = run_dyn(&inst, &driving, DynOptions::default(), &mut rng).unwrap();
        // Activity 2's start is deferred past t = 1: with both scenarios
        // alive, committing the -5500 outlay at t = 1 loses against waiting.
        assert!(out.start_times[2] > 1, "start times {:?}", out.start_times);
    }

    #[test]
    fn dyn_is_non_anticipative_across_scenarios() {
        let inst = example1();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let s0 = inst.scenarios.as_ref().unwrap()[0].clone();
        let s1 = inst.scenarios.as_ref().unwrap()[1].clone();
        let out0 = run_dyn(&inst, &s0, DynOptions::default(), &mut rng).unwrap();
        let out1 = run_dyn(&inst, &s1, DynOptions::default(), &mut rng).unwrap();
        // The scenarios are indistinguishable until activity 3 has run for
        // one time unit; decisions before that observation must coincide.
        let reveal = out0.start_times[3].max(out1.start_times[3]) + 1;
        for j in 0..5 {
            let a = out0.start_times[j];
            let b = out1.start_times[j];
            if a < reveal || b < reveal {
                assert_eq!(a, b, "activity {j} diverged before the revelation");
            }
        }
    }
}
