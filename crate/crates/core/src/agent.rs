//! The DDQN learning loop: replay buffer, epsilon-greedy exploration,
//! masked double-Q targets, target-network synchronization, greedy
//! evaluation, plus a tabular Q-learning sanity learner for tiny instances.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, EnvState, RewardMode, SchedEnv, ScenarioSelector};
use crate::error::{Error, Result};
use crate::instance::{sample_duration, Family, Instance};
use crate::nn::{
    adam_step, mlp_forward_into, mlp_init, q_network_dims, AdamHyper, AdamState, BackpropScratch,
    Gradients, MlpParams, Scratch,
};

/// One replay record. Beyond the classic `(s, a, r, s')` tuple it stores the
/// wall-clock time consumed by the step and the next state's feasibility
/// mask: both are needed to recompute the masked bootstrap target without
/// re-simulating.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub delta_t: u32,
    pub next_state: Vec<f64>,
    pub next_feasible: Vec<bool>,
    pub done: bool,
}

/// Bounded FIFO experience store with strictly oldest-first eviction.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    records: std::collections::VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, records: std::collections::VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn push(&mut self, t: Transition) {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.records[idx]
    }

    /// Uniform sample of `count` distinct indices.
    pub fn sample<R: Rng>(&self, rng: &mut R, count: usize) -> Vec<usize> {
        sample_indices(rng, self.records.len(), count).into_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "ddqn")]
    Ddqn,
    #[serde(rename = "dqn")]
    Dqn,
    #[serde(rename = "no-target")]
    NoTarget,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Ddqn => write!(f, "ddqn"),
            Variant::Dqn => write!(f, "dqn"),
            Variant::NoTarget => write!(f, "no-target"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub variant: Variant,
    pub episodes: usize,
    pub batch: usize,
    /// Hard target sync period, counted in gradient steps.
    pub target_update_every: usize,
    pub lr: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the episode budget over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    pub reward_mode: RewardMode,
    pub buffer_capacity: usize,
    /// Environment steps per gradient step; 1 trains on every step.
    pub update_every: usize,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Ddqn,
            episodes: 20_000,
            batch: 256,
            target_update_every: 1000,
            lr: 1e-5,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_decay_fraction: 0.8,
            reward_mode: RewardMode::SemiMdp,
            buffer_capacity: 50_000,
            update_every: 1,
            seed: 0,
        }
    }
}

/// Linear decay from `epsilon_start` to `epsilon_end` over the first
/// `epsilon_decay_fraction * episodes` episodes, constant afterwards.
pub fn epsilon_at(episode: usize, cfg: &AgentConfig) -> f64 {
    let horizon = cfg.epsilon_decay_fraction * cfg.episodes as f64;
    if horizon <= 0.0 || episode as f64 >= horizon {
        return cfg.epsilon_end;
    }
    let frac = episode as f64 / horizon;
    cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac
}

/// Epsilon-greedy action over the feasible set; exploitation is the masked
/// argmax with ties broken by lowest index.
pub fn select_action<R: Rng>(q_values: &[f64], feasible: &[bool], epsilon: f64, rng: &mut R) -> Result<usize> {
    debug_assert_eq!(q_values.len(), feasible.len());
    let feasible_count = feasible.iter().filter(|&&b| b).count();
    if feasible_count == 0 {
        return Err(Error::EmptyFeasibleSet);
    }
    if epsilon > 0.0 && rng.gen_bool(epsilon.min(1.0)) {
        let pick = rng.gen_range(0..feasible_count);
        let a = feasible
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .nth(pick)
            .map(|(i, _)| i)
            .unwrap();
        return Ok(a);
    }
    let mut best = None;
    for (a, (&q, &ok)) in q_values.iter().zip(feasible).enumerate() {
        if !ok {
            continue;
        }
        match best {
            None => best = Some((a, q)),
            Some((_, bq)) if q > bq => best = Some((a, q)),
            _ => {}
        }
    }
    Ok(best.unwrap().0)
}

fn masked_argmax(q: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (a, (&v, &ok)) in q.iter().zip(mask).enumerate() {
        if ok && best.is_none_or(|(_, bq)| v > bq) {
            best = Some((a, v));
        }
    }
    best.map(|(a, _)| a)
}

/// Bootstrapped regression targets for a batch.
///
/// `done` transitions use the plain reward. Otherwise the discount is
/// `beta^{delta_t}` in semi-MDP mode (flat `beta` in literal mode) and the
/// bootstrap follows the variant: double-Q (online argmax, target value),
/// plain max over the target network, or online-only.
pub fn compute_targets(
    batch: &[&Transition],
    online: &MlpParams,
    target: &MlpParams,
    beta: f64,
    variant: Variant,
    reward_mode: RewardMode,
) -> Result<Vec<f64>> {
    let mut s_online = Scratch::default();
    let mut s_target = Scratch::default();
    compute_targets_with(batch, online, target, beta, variant, reward_mode, &mut s_online, &mut s_target)
}

#[allow(clippy::too_many_arguments)]
pub fn compute_targets_with(
    batch: &[&Transition],
    online: &MlpParams,
    target: &MlpParams,
    beta: f64,
    variant: Variant,
    reward_mode: RewardMode,
    s_online: &mut Scratch,
    s_target: &mut Scratch,
) -> Result<Vec<f64>> {
    let b = batch.len();
    let n_in = online.n_input();
    let n_out = online.n_output();
    let mut next_states = vec![0.0; b * n_in];
    for (row, tr) in batch.iter().enumerate() {
        next_states[row * n_in..(row + 1) * n_in].copy_from_slice(&tr.next_state);
    }
    mlp_forward_into(online, &next_states, b, s_online)?;
    // The no-target ablation evaluates with the online network itself.
    let evaluator = match variant {
        Variant::NoTarget => online,
        _ => target,
    };
    mlp_forward_into(evaluator, &next_states, b, s_target)?;

    let q_online = s_online.output();
    let q_eval = s_target.output();
    let mut y = Vec::with_capacity(b);
    for (row, tr) in batch.iter().enumerate() {
        if tr.done {
            y.push(tr.reward);
            continue;
        }
        let gamma = match reward_mode {
            RewardMode::SemiMdp => beta.powi(tr.delta_t as i32),
            RewardMode::Literal => beta,
        };
        let online_row = &q_online[row * n_out..(row + 1) * n_out];
        let eval_row = &q_eval[row * n_out..(row + 1) * n_out];
        let bootstrap = match variant {
            Variant::Ddqn | Variant::NoTarget => {
                let a_star = masked_argmax(online_row, &tr.next_feasible)
                    .ok_or(Error::EmptyFeasibleSet)?;
                eval_row[a_star]
            }
            Variant::Dqn => {
                let a_star = masked_argmax(eval_row, &tr.next_feasible)
                    .ok_or(Error::EmptyFeasibleSet)?;
                eval_row[a_star]
            }
        };
        y.push(tr.reward + gamma * bootstrap);
    }
    Ok(y)
}

/// Per-episode training log row.
#[derive(Debug, Clone, Serialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Discounted episode return; equals the realized NPV on clean episodes.
    pub ret: f64,
    pub epsilon: f64,
    pub mean_loss: f64,
    pub buffer_size: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: MlpParams,
    pub adam: AdamState,
    pub log: Vec<EpisodeLog>,
    pub completed_episodes: usize,
    pub env_steps: u64,
    pub gradient_steps: u64,
}

/// Runs the training loop: per decision an epsilon-greedy action, an
/// environment step and a replay push; once the buffer holds a full batch,
/// a uniformly sampled batch, double-Q targets, one Adam step on the masked
/// MSE loss every `update_every` environment steps, and a hard target sync
/// every `target_update_every` gradient steps. Deterministic given the seed.
pub fn train(instance: &Instance, cfg: &AgentConfig) -> Result<TrainResult> {
    train_budgeted(instance, cfg, None)
}

/// [`train`] with an optional wall-clock budget. When the budget runs out
/// the loop stops at an episode boundary; `completed_episodes` says how far
/// it got.
pub fn train_budgeted(instance: &Instance, cfg: &AgentConfig, budget: Option<Duration>) -> Result<TrainResult> {
    if cfg.update_every == 0 {
        return Err(Error::InvalidConfig("update_every must be at least 1".into()));
    }
    let env = SchedEnv::new(
        instance.clone(),
        EnvConfig { reward_mode: cfg.reward_mode, ..EnvConfig::default() },
    )?;
    let selector = match instance.family {
        Family::Omega1 => ScenarioSelector::UniformRandom,
        Family::Omega2 => ScenarioSelector::Online,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let dims = q_network_dims(env.encoded_len(), env.action_count());
    let mut online = mlp_init(&dims, &mut rng)?;
    let mut target = online.clone();
    let mut adam = AdamState::new(&online, AdamHyper { lr: cfg.lr, ..AdamHyper::default() });
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);

    let beta = env.instance.network.beta;
    let mut s_fwd = Scratch::default();
    let mut s_online = Scratch::default();
    let mut s_target = Scratch::default();
    let mut s_train = Scratch::default();
    let mut bscratch = BackpropScratch::default();
    let mut grads = Gradients::zeros_like(&online);
    let n_in = env.encoded_len();

    let started = Instant::now();
    let mut log = Vec::with_capacity(cfg.episodes);
    let mut env_steps: u64 = 0;
    let mut gradient_steps: u64 = 0;
    let mut completed_episodes = 0;
    let mut batch_inputs = vec![0.0; cfg.batch * n_in];

    for episode in 0..cfg.episodes {
        let epsilon = epsilon_at(episode, cfg);
        let mut state = env.reset(selector, &mut rng)?;
        let mut ret = 0.0;
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;

        while !state.done {
            let features = env.encode_state(&state);
            mlp_forward_into(&online, &features, 1, &mut s_fwd)?;
            let mask = env.feasible_mask(&state);
            let action = select_action(s_fwd.output(), &mask, epsilon, &mut rng)?;
            let out = env.step(&state, action, &mut rng)?;
            let next_features = env.encode_state(&out.next_state);
            let next_mask = env.feasible_mask(&out.next_state);
            ret += match cfg.reward_mode {
                RewardMode::SemiMdp => beta.powi(state.t as i32) * out.reward,
                RewardMode::Literal => out.reward,
            };
            buffer.push(Transition {
                state: features,
                action,
                reward: out.reward,
                delta_t: out.elapsed_time,
                next_state: next_features,
                next_feasible: next_mask,
                done: out.done,
            });
            state = out.next_state;
            env_steps += 1;

            if buffer.len() >= cfg.batch && env_steps.is_multiple_of(cfg.update_every as u64) {
                let idx = buffer.sample(&mut rng, cfg.batch);
                let batch: Vec<&Transition> = idx.iter().map(|&i| buffer.get(i)).collect();
                let targets = compute_targets_with(
                    &batch,
                    &online,
                    &target,
                    beta,
                    cfg.variant,
                    cfg.reward_mode,
                    &mut s_online,
                    &mut s_target,
                )?;
                let mut actions = Vec::with_capacity(cfg.batch);
                for (row, tr) in batch.iter().enumerate() {
                    batch_inputs[row * n_in..(row + 1) * n_in].copy_from_slice(&tr.state);
                    actions.push(tr.action);
                }
                let loss = crate::nn::mlp_backward(
                    &online,
                    &batch_inputs,
                    cfg.batch,
                    &actions,
                    &targets,
                    &mut s_train,
                    &mut bscratch,
                    &mut grads,
                )?;
                adam_step(&mut online, &grads, &mut adam);
                gradient_steps += 1;
                loss_sum += loss;
                loss_count += 1;
                if cfg.variant != Variant::NoTarget && gradient_steps.is_multiple_of(cfg.target_update_every as u64) {
                    target = online.clone();
                }
            }
        }

        log.push(EpisodeLog {
            episode,
            ret,
            epsilon,
            mean_loss: if loss_count > 0 { loss_sum / loss_count as f64 } else { 0.0 },
            buffer_size: buffer.len(),
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        completed_episodes = episode + 1;
        if let Some(b) = budget {
            if started.elapsed() > b {
                break;
            }
        }
    }

    Ok(TrainResult {
        params: online,
        adam,
        log,
        completed_episodes,
        env_steps,
        gradient_steps,
    })
}

/// One greedy episode; returns the realized NPV and the terminal state.
pub fn greedy_rollout<R: Rng>(
    env: &SchedEnv,
    params: &MlpParams,
    mut state: EnvState,
    rng: &mut R,
) -> Result<(f64, EnvState)> {
    let beta = env.instance.network.beta;
    let mut s = Scratch::default();
    let mut ret = 0.0;
    while !state.done {
        let x = env.encode_state(&state);
        mlp_forward_into(params, &x, 1, &mut s)?;
        let mask = env.feasible_mask(&state);
        let action = select_action(s.output(), &mask, 0.0, rng)?;
        let out = env.step(&state, action, rng)?;
        ret += beta.powi(state.t as i32) * out.reward;
        state = out.next_state;
    }
    Ok((ret, state))
}

#[derive(Debug, Clone)]
pub struct EvalEpisode {
    pub npv: f64,
    pub failed: bool,
    /// Realized durations of the driving scenario (complete vector, also for
    /// activities the policy never started).
    pub durations: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct EvalResult {
    pub mean: f64,
    /// Standard error of the mean for sampled evaluation; zero for the
    /// exact per-scenario evaluation.
    pub std_err: f64,
    pub per_scenario: Option<Vec<f64>>,
    pub episodes: Vec<EvalEpisode>,
}

/// Greedy-policy evaluation.
///
/// Finite-scenario instances get exactly one rollout per scenario (policy
/// and durations are deterministic) with the probability-weighted mean.
/// Open-ended instances get `n_episodes` sampled episodes with mean and
/// standard error.
pub fn evaluate(params: &MlpParams, instance: &Instance, n_episodes: usize, seed: u64) -> Result<EvalResult> {
    let env = SchedEnv::new(instance.clone(), EnvConfig::default())?;
    let expected = q_network_dims(env.encoded_len(), env.action_count());
    if params.layer_dims != expected {
        return Err(Error::DimensionMismatch(format!(
            "checkpoint dims {:?} do not fit instance dims {:?}",
            params.layer_dims, expected
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    match instance.family {
        Family::Omega1 => {
            let scenarios = instance.scenarios.as_ref().unwrap();
            let mut per_scenario = Vec::with_capacity(scenarios.len());
            let mut episodes = Vec::with_capacity(scenarios.len());
            let mut mean = 0.0;
            for (k, scenario) in scenarios.iter().enumerate() {
                let state = env.reset(ScenarioSelector::Fixed(k), &mut rng)?;
                let (npv, terminal) = greedy_rollout(&env, params, state, &mut rng)?;
                mean += scenario.prob * npv;
                per_scenario.push(npv);
                episodes.push(EvalEpisode {
                    npv,
                    failed: terminal.failure,
                    durations: scenario.durations.clone(),
                });
            }
            Ok(EvalResult { mean, std_err: 0.0, per_scenario: Some(per_scenario), episodes })
        }
        Family::Omega2 => {
            let mut episodes = Vec::with_capacity(n_episodes);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..n_episodes {
                // Pre-draw the full duration vector so the realized scenario
                // is known even for activities the policy never starts.
                let durations: Vec<u32> = env
                    .instance
                    .network
                    .activities
                    .iter()
                    .map(|a| sample_duration(&mut rng, a.d_min, a.d_max))
                    .collect();
                let mut state = env.reset(ScenarioSelector::Online, &mut rng)?;
                state.hidden_durations = durations.iter().map(|&d| Some(d)).collect();
                let (npv, terminal) = greedy_rollout(&env, params, state, &mut rng)?;
                sum += npv;
                sum_sq += npv * npv;
                episodes.push(EvalEpisode { npv, failed: terminal.failure, durations });
            }
            let n = n_episodes as f64;
            let mean = sum / n;
            let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
            Ok(EvalResult {
                mean,
                std_err: (var / n).sqrt(),
                per_scenario: None,
                episodes,
            })
        }
    }
}

// --- Tabular Q-learning sanity learner -------------------------------------

#[derive(Debug, Clone)]
pub struct TabularResult {
    pub greedy_value: f64,
    pub states_visited: usize,
    pub q: HashMap<Vec<u8>, Vec<f64>>,
}

/// Exact tabular Q-learning over hashed observation states with the
/// semi-MDP per-transition discount. Guarded against state-space blowup.
pub fn tabular_q<F>(
    instance: &Instance,
    schedule: F,
    n_episodes: usize,
    seed: u64,
    state_limit: usize,
) -> Result<TabularResult>
where
    F: Fn(usize) -> (f64, f64),
{
    let env = SchedEnv::new(instance.clone(), EnvConfig::default())?;
    let selector = match instance.family {
        Family::Omega1 => ScenarioSelector::UniformRandom,
        Family::Omega2 => ScenarioSelector::Online,
    };
    let beta = env.instance.network.beta;
    let n_actions = env.action_count();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut q: HashMap<Vec<u8>, Vec<f64>> = HashMap::new();

    for episode in 0..n_episodes {
        let (alpha, epsilon) = schedule(episode);
        let mut state = env.reset(selector, &mut rng)?;
        let mut key = env.observation_key(&state);
        while !state.done {
            if q.len() > state_limit {
                return Err(Error::StateSpaceExceeded { visited: q.len(), limit: state_limit });
            }
            let mask = env.feasible_mask(&state);
            let q_row = q.entry(key.clone()).or_insert_with(|| vec![0.0; n_actions]);
            let action = select_action(q_row, &mask, epsilon, &mut rng)?;
            let out = env.step(&state, action, &mut rng)?;
            let next_key = env.observation_key(&out.next_state);
            let bootstrap = if out.done {
                0.0
            } else {
                let next_mask = env.feasible_mask(&out.next_state);
                let next_row = q.get(&next_key);
                next_mask
                    .iter()
                    .enumerate()
                    .filter(|(_, &ok)| ok)
                    .map(|(a, _)| next_row.map_or(0.0, |r| r[a]))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            let gamma = beta.powi(out.elapsed_time as i32);
            let target = out.reward + gamma * bootstrap;
            let row = q.get_mut(&key).unwrap();
            row[action] += alpha * (target - row[action]);
            state = out.next_state;
            key = next_key;
        }
    }

    // Greedy evaluation under the learned table.
    let greedy_value = match instance.family {
        Family::Omega1 => {
            let scenarios = instance.scenarios.as_ref().unwrap();
            let mut value = 0.0;
            for (k, scenario) in scenarios.iter().enumerate() {
                let mut state = env.reset(ScenarioSelector::Fixed(k), &mut rng)?;
                let mut ret = 0.0;
                while !state.done {
                    let mask = env.feasible_mask(&state);
                    let key = env.observation_key(&state);
                    let zeros = vec![0.0; n_actions];
                    let row = q.get(&key).unwrap_or(&zeros);
                    let action = select_action(row, &mask, 0.0, &mut rng)?;
                    let out = env.step(&state, action, &mut rng)?;
                    ret += beta.powi(state.t as i32) * out.reward;
                    state = out.next_state;
                }
                value += scenario.prob * ret;
            }
            value
        }
        Family::Omega2 => {
            let mut sum = 0.0;
            let runs = 200;
            for _ in 0..runs {
                let mut state = env.reset(ScenarioSelector::Online, &mut rng)?;
                let mut ret = 0.0;
                while !state.done {
                    let mask = env.feasible_mask(&state);
                    let key = env.observation_key(&state);
                    let zeros = vec![0.0; n_actions];
                    let row = q.get(&key).unwrap_or(&zeros);
                    let action = select_action(row, &mask, 0.0, &mut rng)?;
                    let out = env.step(&state, action, &mut rng)?;
                    ret += beta.powi(state.t as i32) * out.reward;
                    state = out.next_state;
                }
                sum += ret;
            }
            sum / runs as f64
        }
    };

    Ok(TabularResult { greedy_value, states_visited: q.len(), q })
}
