//! DQN over the joint binary offloading space: one Q output per action
//! index in {0,1}^M, epsilon-greedy exploration, uniform replay, and a
//! periodically synced target network.

use crate::env::{Action, MecEnv};
use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp, MlpGrads};
use crate::real::{derive_seed, Real};
use crate::replay::ReplayBuffer;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Joint-action enumeration bound: 2^12 = 4096 Q outputs.
pub const MAX_JOINT_STATIONS: usize = 12;

/// Bit i (LSB = compute STA 1, index 0) carries that station's decision.
pub fn action_index_to_action(index: usize, n_compute: usize) -> Action {
    Action((0..n_compute).map(|m| (index >> m) & 1 == 1).collect())
}

pub fn action_to_index(action: &Action) -> usize {
    action
        .0
        .iter()
        .enumerate()
        .map(|(m, &bit)| (bit as usize) << m)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnHyperparams<T> {
    pub gamma: T,
    pub lr: T,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub epsilon_start: T,
    pub epsilon_end: T,
    /// Fraction of training over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    /// Hard-sync the target network every this many updates.
    pub target_sync_interval: u64,
    pub episodes: usize,
    pub hidden: Vec<usize>,
    pub warmup_steps: usize,
}

impl<T: Real> Default for DqnHyperparams<T> {
    fn default() -> Self {
        DqnHyperparams {
            gamma: T::of(0.95),
            lr: T::of(3e-4),
            batch_size: 128,
            buffer_capacity: 100_000,
            epsilon_start: T::one(),
            epsilon_end: T::of(0.05),
            epsilon_decay_fraction: 0.5,
            target_sync_interval: 200,
            episodes: 800,
            hidden: vec![256, 256],
            warmup_steps: 1000,
        }
    }
}

impl<T: Real> DqnHyperparams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.gamma < T::zero() || self.gamma >= T::one() {
            return Err(Error::Config("gamma must be in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(Error::Config("bad batch/buffer sizes".into()));
        }
        if self.hidden.is_empty() {
            return Err(Error::Config("need at least one hidden layer".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay_fraction) {
            return Err(Error::Config("epsilon_decay_fraction must be in [0,1]".into()));
        }
        if self.target_sync_interval == 0 {
            return Err(Error::Config("target_sync_interval must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DqnTransition<T> {
    state: Vec<T>,
    action: usize,
    reward: T,
    next_state: Vec<T>,
    done: bool,
}

pub struct DqnAgent<T> {
    pub hp: DqnHyperparams<T>,
    pub q: Mlp<T>,
    pub target_q: Mlp<T>,
    pub rng: ChaCha8Rng,
    opt: Adam<T>,
    buffer: ReplayBuffer<DqnTransition<T>>,
    update_count: u64,
    state_dim: usize,
    n_compute: usize,
}

impl<T: Real> DqnAgent<T> {
    pub fn new(state_dim: usize, n_compute: usize, hp: DqnHyperparams<T>, seed: u64) -> Result<Self> {
        hp.validate()?;
        if n_compute > MAX_JOINT_STATIONS {
            return Err(Error::Config(format!(
                "joint action space too large: {n_compute} compute STAs exceed the \
                 {MAX_JOINT_STATIONS}-station enumeration bound"
            )));
        }
        if n_compute == 0 {
            return Err(Error::Config("DQN needs at least one compute STA".into()));
        }
        let mut dims = vec![state_dim];
        dims.extend_from_slice(&hp.hidden);
        dims.push(1 << n_compute);
        let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
        let q = Mlp::init(&dims, &mut init_rng);
        let opt = Adam::new(&q, hp.lr);
        Ok(DqnAgent {
            target_q: q.clone(),
            buffer: ReplayBuffer::new(hp.buffer_capacity),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, 1)),
            opt,
            update_count: 0,
            state_dim,
            n_compute,
            q,
            hp,
        })
    }

    pub fn n_actions(&self) -> usize {
        1 << self.n_compute
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn n_compute(&self) -> usize {
        self.n_compute
    }

    pub(crate) fn restore_parts(
        hp: DqnHyperparams<T>,
        q: Mlp<T>,
        target_q: Mlp<T>,
        rng: ChaCha8Rng,
        state_dim: usize,
        n_compute: usize,
    ) -> Self {
        let opt = Adam::new(&q, hp.lr);
        let buffer = ReplayBuffer::new(hp.buffer_capacity);
        DqnAgent {
            q,
            target_q,
            rng,
            opt,
            buffer,
            update_count: 0,
            state_dim,
            n_compute,
            hp,
        }
    }

    /// Greedy action index (lowest index wins ties, so evaluation is
    /// deterministic).
    pub fn act_greedy(&self, state: &[T]) -> usize {
        let x = Array2::from_shape_vec((1, state.len()), state.to_vec()).expect("state row");
        let q = self.q.forward(&x);
        let mut best = 0;
        for a in 1..self.n_actions() {
            if q[(0, a)] > q[(0, best)] {
                best = a;
            }
        }
        best
    }

    fn epsilon(&self, episode: usize) -> T {
        let hp = &self.hp;
        let decay_eps = (hp.episodes as f64 * hp.epsilon_decay_fraction).max(1.0);
        let frac = (episode as f64 / decay_eps).min(1.0);
        hp.epsilon_start + (hp.epsilon_end - hp.epsilon_start) * T::of(frac)
    }

    /// Standard DQN training loop; returns the per-episode mean reward.
    pub fn train(&mut self, env: &mut MecEnv<T>) -> Result<Vec<T>> {
        if env.state_dim() != self.state_dim || env.action_dim() != self.n_compute {
            return Err(Error::Config(format!(
                "agent built for dims {}/{} but env has {}/{}",
                self.state_dim,
                self.n_compute,
                env.state_dim(),
                env.action_dim()
            )));
        }
        let mut curve = Vec::with_capacity(self.hp.episodes);
        for episode in 0..self.hp.episodes {
            let eps = self.epsilon(episode);
            let mut state = env.reset().values;
            let mut reward_sum = T::zero();
            let mut slots = 0usize;
            loop {
                let action_idx = if T::uniform(&mut self.rng, T::zero(), T::one()) < eps {
                    self.rng.gen_range(0..self.n_actions())
                } else {
                    self.act_greedy(&state)
                };
                let step = env.step(&action_index_to_action(action_idx, self.n_compute))?;
                reward_sum += step.reward;
                slots += 1;
                self.buffer.push(DqnTransition {
                    state: state.clone(),
                    action: action_idx,
                    reward: step.reward,
                    next_state: step.state.values.clone(),
                    done: step.done,
                });
                state = step.state.values;
                if self.buffer.len() >= self.hp.batch_size.max(self.hp.warmup_steps) {
                    self.update()?;
                }
                if step.done {
                    break;
                }
            }
            curve.push(reward_sum / T::of_usize(slots));
        }
        Ok(curve)
    }

    fn update(&mut self) -> Result<()> {
        let batch = self.hp.batch_size;
        let idx = self.buffer.sample_indices(&mut self.rng, batch);
        let mut states = Array2::zeros((batch, self.state_dim));
        let mut next_states = Array2::zeros((batch, self.state_dim));
        let mut actions = Vec::with_capacity(batch);
        let mut rewards = Vec::with_capacity(batch);
        let mut dones = Vec::with_capacity(batch);
        for (row, &i) in idx.iter().enumerate() {
            let tr = self.buffer.get(i);
            for (c, &v) in tr.state.iter().enumerate() {
                states[(row, c)] = v;
            }
            for (c, &v) in tr.next_state.iter().enumerate() {
                next_states[(row, c)] = v;
            }
            actions.push(tr.action);
            rewards.push(tr.reward);
            dones.push(tr.done);
        }

        let next_q = self.target_q.forward(&next_states);
        let bt = T::of_usize(batch);
        let (q, cache) = self.q.forward_cached(&states);
        let mut grad_out = Array2::zeros(q.dim());
        let mut loss = T::zero();
        for row in 0..batch {
            let mut best = next_q[(row, 0)];
            for a in 1..self.n_actions() {
                best = best.max(next_q[(row, a)]);
            }
            let y = if dones[row] {
                rewards[row]
            } else {
                rewards[row] + self.hp.gamma * best
            };
            let err = q[(row, actions[row])] - y;
            loss += err * err / bt;
            grad_out[(row, actions[row])] = T::of(2.0) * err / bt;
        }
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("DQN loss {loss}")));
        }
        let mut grads = MlpGrads::zeros_like(&self.q);
        self.q.backward(&cache, &grad_out, &mut grads);
        self.opt.step(&mut self.q, &grads);

        self.update_count += 1;
        if self.update_count % self.hp.target_sync_interval == 0 {
            self.target_q = self.q.clone();
        }
        Ok(())
    }
}
