//! Discrete-time scheduling MDP environment.
//!
//! One decision per step: action `0` lets one time unit pass (feasible only
//! while work is running, unless idling is explicitly allowed), action `j`
//! starts activity `j` at the current time without advancing the clock.
//! Cash is realized at activity start. Realized durations stay hidden from
//! the observation encoding; only elapsed progress is observable.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{sample_duration, Family, Instance};
use crate::project::{Precedence, Schedule};

/// Action index of the no-op / advance-time decision.
pub const NOOP_ACTION: usize = 0;

/// Fixed normalizer for the elapsed-time feature block.
pub const ENCODE_D_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    NotStarted = 0,
    InProgress = 1,
    Completed = 2,
}

/// Discounting/reward convention for the semi-Markov decision structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardMode {
    /// Reward is the raw cash flow; the TD discount is `beta^{delta_t}`
    /// (1 for starts, `beta` for advances). The discounted episode return
    /// then equals the schedule NPV exactly.
    SemiMdp,
    /// Reward is pre-discounted cash `beta^t * c`; the TD discount is a
    /// flat `beta` per decision.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    pub reward_mode: RewardMode,
    /// Permit the no-op with an empty running set (off by default: idling
    /// with nothing running would interrupt execution).
    pub allow_idle: bool,
    /// Terminal penalty for a deadline breach; `None` derives
    /// `2 * sum_j (|c^F_j| + 10 |c^V_j| + g_j)` from the instance.
    pub penalty: Option<f64>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { reward_mode: RewardMode::SemiMdp, allow_idle: false, penalty: None }
    }
}

/// How an episode binds realized durations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioSelector {
    /// Fixed scenario index (finite-scenario instances only).
    Fixed(usize),
    /// Scenario drawn uniformly at reset (finite-scenario instances only).
    UniformRandom,
    /// Durations drawn lazily from the supports at each start (open-ended
    /// instances).
    Online,
}

/// MDP state: decision time, per-activity execution status, observable
/// progress, start times, and the hidden realized durations.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub t: u32,
    pub status: Vec<Status>,
    /// Time spent per activity; frozen at the realized duration once done.
    pub elapsed: Vec<u32>,
    /// Start time per activity, -1 until started.
    pub start_times: Vec<i32>,
    pub done: bool,
    pub failure: bool,
    /// Realized durations; never exposed to [`SchedEnv::encode_state`].
    pub(crate) hidden_durations: Vec<Option<u32>>,
    /// Scenario driving the episode, if one was fixed or drawn at reset.
    pub(crate) scenario_idx: Option<usize>,
}

impl EnvState {
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.status.iter().enumerate().filter(|(_, s)| **s == Status::InProgress).map(|(j, _)| j)
    }

    pub fn unstarted(&self) -> impl Iterator<Item = usize> + '_ {
        self.status.iter().enumerate().filter(|(_, s)| **s == Status::NotStarted).map(|(j, _)| j)
    }

    pub fn finished(&self) -> impl Iterator<Item = usize> + '_ {
        self.status.iter().enumerate().filter(|(_, s)| **s == Status::Completed).map(|(j, _)| j)
    }

    pub fn scenario_index(&self) -> Option<usize> {
        self.scenario_idx
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub reward: f64,
    /// Wall-clock time consumed by the decision: 0 for starts, 1 for advances.
    pub elapsed_time: u32,
    /// Activities completed during this step.
    pub completed: Vec<usize>,
    pub done: bool,
    pub failure: bool,
}

/// One line of the optional episode trace.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub t: u32,
    pub action: usize,
    pub reward: f64,
    pub delta_t: u32,
    pub completed: Vec<usize>,
}

pub fn write_trace<W: std::io::Write>(records: &[TraceRecord], mut w: W) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// The environment service: stateless with respect to episodes, so multiple
/// [`EnvState`] values can be advanced independently.
#[derive(Debug, Clone)]
pub struct SchedEnv {
    pub instance: Instance,
    pub cfg: EnvConfig,
    prec: Precedence,
    penalty: f64,
}

impl SchedEnv {
    pub fn new(instance: Instance, cfg: EnvConfig) -> Result<Self> {
        instance.validate()?;
        let prec = Precedence::new(&instance.network)?;
        let penalty = cfg.penalty.unwrap_or_else(|| default_penalty(&instance));
        Ok(Self { instance, cfg, prec, penalty })
    }

    pub fn node_count(&self) -> usize {
        self.instance.network.node_count()
    }

    /// Width of the encoded feature vector: `1 + 3 (n + 2)`.
    pub fn encoded_len(&self) -> usize {
        1 + 3 * self.node_count()
    }

    /// Number of action slots: no-op plus one start slot per activity
    /// `1..=n+1` (activity 0 is auto-executed, never an action).
    pub fn action_count(&self) -> usize {
        self.node_count()
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn precedence(&self) -> &Precedence {
        &self.prec
    }

    pub fn reset<R: Rng>(&self, selector: ScenarioSelector, rng: &mut R) -> Result<EnvState> {
        let n = self.node_count();
        let scenario_idx = match selector {
            ScenarioSelector::Fixed(k) => {
                let count = self.instance.scenario_count();
                if k >= count {
                    return Err(Error::ScenarioOutOfRange { index: k, count });
                }
                Some(k)
            }
            ScenarioSelector::UniformRandom => {
                let count = self.instance.scenario_count();
                if count == 0 {
                    return Err(Error::InvalidConfig(
                        "scenario selector requires a finite-scenario instance".into(),
                    ));
                }
                Some(rng.gen_range(0..count))
            }
            ScenarioSelector::Online => {
                if self.instance.family != Family::Omega2 {
                    return Err(Error::InvalidConfig(
                        "online duration sampling requires an open-ended instance".into(),
                    ));
                }
                None
            }
        };

        let mut hidden_durations: Vec<Option<u32>> = match scenario_idx {
            Some(k) => self.instance.scenarios.as_ref().unwrap()[k]
                .durations
                .iter()
                .map(|&d| Some(d))
                .collect(),
            None => vec![None; n],
        };
        hidden_durations[0] = Some(0);

        let mut state = EnvState {
            t: 0,
            status: vec![Status::NotStarted; n],
            elapsed: vec![0; n],
            start_times: vec![-1; n],
            done: false,
            failure: false,
            hidden_durations,
            scenario_idx,
        };
        // The start dummy runs for free at t = 0: zero duration, zero cash.
        state.status[0] = Status::Completed;
        state.start_times[0] = 0;
        Ok(state)
    }

    /// Boolean mask over action slots; index 0 is the no-op.
    #[allow(clippy::needless_range_loop)]
    pub fn feasible_mask(&self, state: &EnvState) -> Vec<bool> {
        let n = self.node_count();
        let mut mask = vec![false; n];
        if state.done {
            return mask;
        }
        let any_active = state.status.contains(&Status::InProgress);
        let any_unstarted = state.status.contains(&Status::NotStarted);
        mask[NOOP_ACTION] = any_active || (self.cfg.allow_idle && any_unstarted);
        for j in 1..n {
            mask[j] = state.status[j] == Status::NotStarted
                && self.prec.preds[j].iter().all(|&i| state.status[i] == Status::Completed);
        }
        mask
    }

    pub fn feasible_actions(&self, state: &EnvState) -> Vec<usize> {
        self.feasible_mask(state)
            .iter()
            .enumerate()
            .filter(|(_, &ok)| ok)
            .map(|(a, _)| a)
            .collect()
    }

    pub fn step<R: Rng>(&self, state: &EnvState, action: usize, rng: &mut R) -> Result<StepOutcome> {
        if action >= self.action_count() || !self.feasible_mask(state)[action] {
            return Err(Error::InfeasibleAction { action });
        }
        let mut next = state.clone();
        let end = self.instance.network.end_node();

        if action == NOOP_ACTION {
            let new_t = state.t + 1;
            if new_t > self.instance.network.deadline {
                next.t = new_t;
                next.done = true;
                next.failure = true;
                return Ok(StepOutcome {
                    reward: -self.penalty,
                    elapsed_time: 1,
                    completed: Vec::new(),
                    done: true,
                    failure: true,
                    next_state: next,
                });
            }
            next.t = new_t;
            let mut completed = Vec::new();
            for j in 0..self.node_count() {
                if next.status[j] == Status::InProgress {
                    next.elapsed[j] += 1;
                    let d = next.hidden_durations[j].expect("in-progress activity has a drawn duration");
                    if next.elapsed[j] == d {
                        next.status[j] = Status::Completed;
                        completed.push(j);
                    }
                }
            }
            return Ok(StepOutcome {
                reward: 0.0,
                elapsed_time: 1,
                completed,
                done: false,
                failure: false,
                next_state: next,
            });
        }

        // Start branch: the clock does not move.
        let j = action;
        let duration = match next.hidden_durations[j] {
            Some(d) => d,
            None => {
                let a = &self.instance.network.activities[j];
                let d = sample_duration(rng, a.d_min, a.d_max);
                next.hidden_durations[j] = Some(d);
                d
            }
        };
        next.status[j] = Status::InProgress;
        next.start_times[j] = state.t as i32;
        next.elapsed[j] = 0;

        let cash = self.realized_cash(&next, j);
        let reward = match self.cfg.reward_mode {
            RewardMode::SemiMdp => cash,
            RewardMode::Literal => cash * self.instance.network.beta.powi(state.t as i32),
        };

        let mut completed = Vec::new();
        if duration == 0 {
            next.status[j] = Status::Completed;
            completed.push(j);
            if j == end {
                next.done = true;
            }
        }
        Ok(StepOutcome {
            reward,
            elapsed_time: 0,
            completed,
            done: next.done,
            failure: false,
            next_state: next,
        })
    }

    /// Cash flow realized by a started activity under the episode's scenario.
    pub fn realized_cash(&self, state: &EnvState, j: usize) -> f64 {
        match state.scenario_idx {
            Some(k) => self.instance.scenarios.as_ref().unwrap()[k].cash_flows[j],
            None => {
                let d = state.hidden_durations[j].expect("cash is realized at start, after the draw");
                self.instance.network.activities[j].cash_flow(d)
            }
        }
    }

    /// Fixed-width observation: `[t/deadline]`, then per activity
    /// status/2, elapsed/10 and (start+1)/(deadline+1). Hidden durations are
    /// never encoded.
    pub fn encode_state(&self, state: &EnvState) -> Vec<f64> {
        let n = self.node_count();
        let delta = self.instance.network.deadline as f64;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(state.t as f64 / delta);
        for j in 0..n {
            out.push(state.status[j] as u8 as f64 / 2.0);
        }
        for j in 0..n {
            out.push(state.elapsed[j] as f64 / ENCODE_D_MAX);
        }
        for j in 0..n {
            out.push((state.start_times[j] + 1) as f64 / (delta + 1.0));
        }
        out
    }

    /// NPV of the work started so far, discounted to time zero. Equals the
    /// discounted sum of raw cash rewards over the episode.
    pub fn episode_npv(&self, state: &EnvState) -> f64 {
        let beta = self.instance.network.beta;
        (0..self.node_count())
            .filter(|&j| state.start_times[j] >= 0 && state.status[j] != Status::NotStarted)
            .map(|j| self.realized_cash(state, j) * beta.powi(state.start_times[j]))
            .sum()
    }

    /// Compact byte key of the observable state `(t, status, elapsed)`.
    ///
    /// Start times add nothing beyond `t - elapsed`, so this is a sufficient
    /// statistic for tabulating values over observation states.
    pub fn observation_key(&self, state: &EnvState) -> Vec<u8> {
        let n = self.node_count();
        let mut key = Vec::with_capacity(2 + 2 * n);
        key.extend_from_slice(&(state.t as u16).to_le_bytes());
        for j in 0..n {
            key.push(state.status[j] as u8);
        }
        for j in 0..n {
            debug_assert!(state.elapsed[j] < 256);
            key.push(state.elapsed[j] as u8);
        }
        key
    }

    /// Start times of started activities, for the return-identity check.
    pub fn induced_schedule(&self, state: &EnvState) -> Option<Schedule> {
        if state.start_times.iter().any(|&t| t < 0) {
            return None;
        }
        Some(Schedule::new(state.start_times.iter().map(|&t| t as u32).collect()))
    }
}

fn default_penalty(instance: &Instance) -> f64 {
    2.0 * instance
        .network
        .activities
        .iter()
        .map(|a| a.fixed_cost.abs() + 10.0 * a.var_cost.abs() + a.revenue)
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{GenConfig, Instance};
    use crate::project::schedule_npv;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn example1_env() -> SchedEnv {
        SchedEnv::new(Instance::example1(), EnvConfig::default()).unwrap()
    }

    #[test]
    fn reset_partitions_example1() {
        let env = example1_env();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let s = env.reset(ScenarioSelector::Fixed(0), &mut rng).unwrap();
        assert_eq!(s.t, 0);
        assert_eq!(s.finished().collect::<Vec<_>>(), vec![0]);
        assert_eq!(s.unstarted().collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert_eq!(s.active().count(), 0);
        assert_eq!(s.start_times, vec![0, -1, -1, -1, -1]);
    }

    #[test]
    fn feasible_after_reset_is_start_1_only() {
        let env = example1_env();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let s = env.reset(ScenarioSelector::Fixed(0), &mut rng).unwrap();
        assert_eq!(env.feasible_actions(&s), vec![1]);
    }

    #[test]
    fn feasible_after_activity_1_finishes() {
        let env = example1_env();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let s = env.reset(ScenarioSelector::Fixed(0), &mut rng).unwrap();
        let s = env.step(&s, 1, &mut rng).unwrap().next_state;
        let out = env.step(&s, NOOP_ACTION, &mut rng).unwrap();
        assert_eq!(out.completed, vec![1]);
        assert_eq!(out.reward, 0.0);
        assert_eq!(out.next_state.t, 1);
        // Both successors eligible, nothing running, so no-op is excluded.
        assert_eq!(env.feasible_actions(&out.next_state), vec![2, 3]);
    }

    #[test]
    fn noop_allowed_while_work_is_running() {
        let env = example1_env();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let s = env.reset(ScenarioSelector::Fixed(0), &mut rng).unwrap();
        let s = env.step(&s, 1, &mut rng).unwrap().next_state;
        let s = env.step(&s, NOOP_ACTION, &mut rng).unwrap().next_state;
        let s = env.step(&s, 2, &mut rng).unwrap().next_state; // activity 2 runs 5 units
        let actions = env.feasible_actions(&s);
        assert!(actions.contains(&NOOP_ACTION));
        assert!(actions.contains(&3));
    }

    #[test]
    fn start_reward_is_cash_and_zero_time() {
        let env = example1_env();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let s = env.reset(ScenarioSelector::Fixed(0), &mut rng).unwrap();
        let out = env.step(&s, 1, &mut rng).unwrap();
        assert_eq!(out.reward, -90.0);
        assert_eq!(out.elapsed_time, 0);
        assert_eq!(out.next_state.active().collect::<Vec<_>>(), vec![1]);
        assert_eq!(out.next_state.t, 0);
    }

    /// Drives the environment along a fixed start-time vector.
    fn rollout_schedule(env: &SchedEnv, scenario: usize, plan: &[u32]) -> (f64, EnvState) {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut state = env.reset(ScenarioSelector::Fixed(scenario), &mut rng).unwrap();
        let beta = env.instance.network.beta;
        let mut ret = 0.0;
        while !state.done {
            let mask = env.feasible_mask(&state);
            let due = (1..env.action_count()).find(|&j| mask[j] && plan[j] == state.t);
            let action = match due {
                Some(j) => j,
                None => NOOP_ACTION,
            };
            let out = env.step(&state, action, &mut rng).unwrap();
            ret += beta.powi(state.t as i32) * out.reward;
            state = out.next_state;
        }
        (ret, state)
    }

    #[test]
    fn rollout_matches_schedule_npv_scenario1() {
        let env = example1_env();
        let plan = [0u32, 0, 1, 5, 6];
        let (ret, state) = rollout_schedule(&env, 0, &plan);
        assert!(!state.failure);
        let sched = env.induced_schedule(&state).unwrap();
        assert_eq!(sched.start_times, plan.to_vec());
        let cash = &env.instance.scenarios.as_ref().unwrap()[0].cash_flows;
        let npv = schedule_npv(&sched, cash, 0.9);
        assert!((ret - npv).abs() < 1e-9);
        assert!((ret - 221.27).abs() < 0.01, "return = {ret}");
        assert!((env.episode_npv(&state) - ret).abs() < 1e-9);
    }

    #[test]
    fn uniform_selector_hits_each_scenario_evenly() {
        let env = example1_env();
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let mut counts = [0usize; 2];
        for _ in 0..10_000 {
            let s = env.reset(ScenarioSelector::UniformRandom, &mut rng).unwrap();
            counts[s.scenario_index().unwrap()] += 1;
        }
        for c in counts {
            let freq = c as f64 / 10_000.0;
            assert!((freq - 0.5).abs() < 0.02, "freq = {freq}");
        }
    }

    #[test]
    fn online_mode_leaves_durations_unset() {
        let inst = crate::instance::generate_instance(&GenConfig::omega2(4, 3)).unwrap();
        let env = SchedEnv::new(inst, EnvConfig::default()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let s = env.reset(ScenarioSelector::Online, &mut rng).unwrap();
        for j in 1..env.node_count() {
            assert_eq!(s.hidden_durations[j], None);
        }
    }

    #[test]
    fn selector_guards() {
        let env = example1_env();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(matches!(
            env.reset(ScenarioSelector::Fixed(2), &mut rng),
            Err(Error::ScenarioOutOfRange { index: 2, count: 2 })
        ));
        assert!(env.reset(ScenarioSelector::Online, &mut rng).is_err());
    }

    #[test]
    fn infeasible_action_is_an_error() {
        let env = example1_env();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let s = env.reset(ScenarioSelector::Fixed(0), &mut rng).unwrap();
        assert!(matches!(env.step(&s, 2, &mut rng), Err(Error::InfeasibleAction { action: 2 })));
        assert!(matches!(env.step(&s, NOOP_ACTION, &mut rng), Err(Error::InfeasibleAction { .. })));
    }

    #[test]
    fn encode_dimensions_and_initial_values() {
        let env = example1_env();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let s = env.reset(ScenarioSelector::Fixed(0), &mut rng).unwrap();
        let x = env.encode_state(&s);
        assert_eq!(x.len(), 16);
        assert_eq!(x[0], 0.0);
        assert_eq!(&x[1..6], &[1.0, 0.0, 0.0, 0.0, 0.0]);
        // Unstarted sentinel maps to exactly zero; activity 0 started at 0.
        assert_eq!(x[11], 1.0 / 41.0);
        assert_eq!(&x[12..16], &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn encode_time_normalization_endpoint() {
        let env = example1_env();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut s = env.reset(ScenarioSelector::Fixed(0), &mut rng).unwrap();
        s.t = env.instance.network.deadline;
        let x = env.encode_state(&s);
        assert_eq!(x[0], 1.0);
    }

    #[test]
    fn encoding_is_blind_to_hidden_durations() {
        let env = example1_env();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        // The scenarios differ only in activity 3's duration, which is
        // unobservable until it completes.
        let a = env.reset(ScenarioSelector::Fixed(0), &mut rng).unwrap();
        let b = env.reset(ScenarioSelector::Fixed(1), &mut rng).unwrap();
        assert_ne!(a.hidden_durations, b.hidden_durations);
        assert_eq!(env.encode_state(&a), env.encode_state(&b));
    }

    #[test]
    fn deadline_breach_fails_with_penalty() {
        let mut inst = Instance::example1();
        inst.network.deadline = 7;
        let env = SchedEnv::new(inst, EnvConfig::default()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        // Scenario 2 realizes duration 10 for activity 3: starting everything
        // as early as possible cannot finish by 7.
        let mut state = env.reset(ScenarioSelector::Fixed(1), &mut rng).unwrap();
        let mut last = None;
        while !state.done {
            let a = *env.feasible_actions(&state).first().unwrap();
            let out = env.step(&state, a, &mut rng).unwrap();
            state = out.next_state.clone();
            last = Some(out);
        }
        let out = last.unwrap();
        assert!(out.failure);
        assert_eq!(out.reward, -env.penalty());
        assert_eq!(state.t, 8);
    }

    #[test]
    fn trace_log_is_newline_delimited_json() {
        let env = example1_env();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut state = env.reset(ScenarioSelector::Fixed(0), &mut rng).unwrap();
        let mut records = Vec::new();
        while !state.done {
            let a = *env.feasible_actions(&state).first().unwrap();
            let out = env.step(&state, a, &mut rng).unwrap();
            records.push(TraceRecord {
                t: state.t,
                action: a,
                reward: out.reward,
                delta_t: out.elapsed_time,
                completed: out.completed.clone(),
            });
            state = out.next_state;
        }
        let mut buf = Vec::new();
        write_trace(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), records.len());
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["action"], 1);
        assert_eq!(first["reward"], -90.0);
    }

    #[test]
    fn random_play_keeps_invariants() {
        let inst = crate::instance::generate_instance(&GenConfig::omega1(5, 3, 11)).unwrap();
        let env = SchedEnv::new(inst, EnvConfig::default()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for _ in 0..200 {
            let mut state = env.reset(ScenarioSelector::UniformRandom, &mut rng).unwrap();
            let mut decisions = 0usize;
            while !state.done {
                let actions = env.feasible_actions(&state);
                assert!(!actions.is_empty(), "live state must offer an action");
                let a = actions[rng.gen_range(0..actions.len())];
                state = env.step(&state, a, &mut rng).unwrap().next_state;
                decisions += 1;

                let (mut n0, mut n1, mut n2) = (0, 0, 0);
                for (j, &st) in state.status.iter().enumerate() {
                    match st {
                        Status::NotStarted => {
                            n0 += 1;
                            assert_eq!(state.start_times[j], -1);
                        }
                        Status::InProgress => {
                            n1 += 1;
                            let d = state.hidden_durations[j].unwrap();
                            assert!(state.elapsed[j] < d);
                        }
                        Status::Completed => {
                            n2 += 1;
                            assert_eq!(state.elapsed[j], state.hidden_durations[j].unwrap());
                        }
                    }
                }
                assert_eq!(n0 + n1 + n2, env.node_count());
            }
            let bound = env.instance.network.deadline as usize + env.node_count();
            assert!(decisions <= bound, "episode used {decisions} decisions");
        }
    }
}
