//! The DTD3 agent and its training loop.

use super::chain::{
    draw_chain, draw_diffusion, policy_loss_and_grads, reverse_chain, td_targets,
};
use super::{binarize, Critic, DiffusionSchedule, NoiseNet};
use crate::env::{MecEnv, Transition};
use crate::error::{Error, Result};
use crate::nn::{Adam, MlpGrads};
use crate::real::{derive_seed, Real};
use crate::replay::ReplayBuffer;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dtd3Hyperparams<T> {
    pub gamma: T,
    /// Soft-update interpolation weight for the target networks.
    pub soft_update_rate: T,
    /// Update the policy (and targets) every this many critic updates.
    pub policy_delay: usize,
    /// Scale of the Q-improvement term in the policy loss.
    pub eta: T,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub lr_policy: T,
    pub lr_critic: T,
    /// Gaussian exploration noise, decayed linearly start -> end over the
    /// configured episodes.
    pub exploration_noise_start: T,
    pub exploration_noise_end: T,
    pub episodes: usize,
    /// Diffusion steps K and the variance-preserving schedule endpoints.
    pub k_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub hidden: Vec<usize>,
    pub k_embed_dim: usize,
    /// Steps collected before updates begin (at least one batch).
    pub warmup_steps: usize,
    /// Regress the critics on fresh target-policy actions at s_t instead of
    /// the stored behavior actions (ablation switch; off = standard TD3).
    pub literal_critic_target: bool,
}

impl<T: Real> Default for Dtd3Hyperparams<T> {
    fn default() -> Self {
        Dtd3Hyperparams {
            gamma: T::of(0.95),
            soft_update_rate: T::of(0.005),
            policy_delay: 2,
            eta: T::one(),
            batch_size: 128,
            buffer_capacity: 100_000,
            lr_policy: T::of(3e-4),
            lr_critic: T::of(3e-4),
            exploration_noise_start: T::of(0.1),
            exploration_noise_end: T::of(0.01),
            episodes: 800,
            k_steps: 5,
            beta_min: 0.1,
            beta_max: 10.0,
            hidden: vec![256, 256],
            k_embed_dim: 8,
            warmup_steps: 1000,
            literal_critic_target: false,
        }
    }
}

impl<T: Real> Dtd3Hyperparams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.gamma < T::zero() || self.gamma >= T::one() {
            return Err(Error::Config("gamma must be in [0, 1)".into()));
        }
        if self.soft_update_rate <= T::zero() || self.soft_update_rate > T::one() {
            return Err(Error::Config("soft_update_rate must be in (0, 1]".into()));
        }
        if self.policy_delay == 0 || self.batch_size == 0 || self.k_steps == 0 {
            return Err(Error::Config(
                "policy_delay, batch_size and k_steps must be positive".into(),
            ));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(Error::Config("buffer must hold at least one batch".into()));
        }
        if self.hidden.is_empty() {
            return Err(Error::Config("need at least one hidden layer".into()));
        }
        if self.k_embed_dim == 0 || self.k_embed_dim % 2 != 0 {
            return Err(Error::Config("k_embed_dim must be a positive even number".into()));
        }
        Ok(())
    }
}

pub struct Dtd3Agent<T> {
    pub hp: Dtd3Hyperparams<T>,
    pub schedule: DiffusionSchedule<T>,
    pub policy: NoiseNet<T>,
    pub target_policy: NoiseNet<T>,
    pub q1: Critic<T>,
    pub q2: Critic<T>,
    pub target_q1: Critic<T>,
    pub target_q2: Critic<T>,
    pub rng: ChaCha8Rng,
    opt_policy: Adam<T>,
    opt_q1: Adam<T>,
    opt_q2: Adam<T>,
    buffer: ReplayBuffer<Transition<T>>,
    update_count: u64,
    state_dim: usize,
    action_dim: usize,
}

impl<T: Real> Dtd3Agent<T> {
    pub fn new(state_dim: usize, action_dim: usize, hp: Dtd3Hyperparams<T>, seed: u64) -> Result<Self> {
        hp.validate()?;
        let schedule = DiffusionSchedule::vp(hp.k_steps, hp.beta_min, hp.beta_max)?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
        let policy = NoiseNet::new(action_dim, state_dim, &hp.hidden, hp.k_embed_dim, &mut init_rng);
        let q1 = Critic::new(state_dim, action_dim, &hp.hidden, &mut init_rng);
        let q2 = Critic::new(state_dim, action_dim, &hp.hidden, &mut init_rng);
        let opt_policy = Adam::new(policy.mlp(), hp.lr_policy);
        let opt_q1 = Adam::new(q1.mlp(), hp.lr_critic);
        let opt_q2 = Adam::new(q2.mlp(), hp.lr_critic);
        Ok(Dtd3Agent {
            target_policy: policy.clone(),
            target_q1: q1.clone(),
            target_q2: q2.clone(),
            policy,
            q1,
            q2,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, 1)),
            opt_policy,
            opt_q1,
            opt_q2,
            buffer: ReplayBuffer::new(hp.buffer_capacity),
            update_count: 0,
            state_dim,
            action_dim,
            hp,
            schedule,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub(crate) fn restore_parts(
        hp: Dtd3Hyperparams<T>,
        schedule: DiffusionSchedule<T>,
        nets: [NoiseNet<T>; 2],
        critics: [Critic<T>; 4],
        rng: ChaCha8Rng,
        state_dim: usize,
        action_dim: usize,
    ) -> Self {
        let [policy, target_policy] = nets;
        let [q1, q2, target_q1, target_q2] = critics;
        let opt_policy = Adam::new(policy.mlp(), hp.lr_policy);
        let opt_q1 = Adam::new(q1.mlp(), hp.lr_critic);
        let opt_q2 = Adam::new(q2.mlp(), hp.lr_critic);
        let buffer = ReplayBuffer::new(hp.buffer_capacity);
        Dtd3Agent {
            policy,
            target_policy,
            q1,
            q2,
            target_q1,
            target_q2,
            rng,
            opt_policy,
            opt_q1,
            opt_q2,
            buffer,
            update_count: 0,
            state_dim,
            action_dim,
            hp,
            schedule,
        }
    }

    /// Sample a continuous action for one state via the reverse chain, using
    /// the supplied RNG (evaluation passes its own stream; pass
    /// `noise_std = 0` for noiseless rollouts).
    pub fn act_with<R: Rng + ?Sized>(&self, state: &[T], rng: &mut R, noise_std: T) -> Vec<T> {
        sample_policy_action(&self.policy, &self.schedule, state, rng, noise_std)
    }

    fn exploration_noise(&self, episode: usize) -> T {
        let hp = &self.hp;
        if hp.episodes <= 1 {
            return hp.exploration_noise_start;
        }
        let frac = T::of_usize(episode) / T::of_usize(hp.episodes - 1);
        hp.exploration_noise_start + (hp.exploration_noise_end - hp.exploration_noise_start) * frac
    }

    /// Run the full training loop on `env` and return the per-episode mean
    /// reward curve.
    pub fn train(&mut self, env: &mut MecEnv<T>) -> Result<Vec<T>> {
        if env.state_dim() != self.state_dim || env.action_dim() != self.action_dim {
            return Err(Error::Config(format!(
                "agent built for state/action dims {}/{} but env has {}/{}",
                self.state_dim,
                self.action_dim,
                env.state_dim(),
                env.action_dim()
            )));
        }
        let episodes = self.hp.episodes;
        let mut curve = Vec::with_capacity(episodes);
        for episode in 0..episodes {
            let noise_std = self.exploration_noise(episode);
            let mut state = env.reset().values;
            let mut reward_sum = T::zero();
            let mut slots = 0usize;
            loop {
                let a_cont = sample_policy_action(
                    &self.policy,
                    &self.schedule,
                    &state,
                    &mut self.rng,
                    noise_std,
                );
                let step = env.step(&binarize(&a_cont))?;
                reward_sum += step.reward;
                slots += 1;
                self.buffer.push(Transition {
                    state: state.clone(),
                    action: a_cont,
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

    /// One critic update, plus a delayed policy/target update.
    pub fn update(&mut self) -> Result<()> {
        let batch = self.hp.batch_size;
        let idx = self.buffer.sample_indices(&mut self.rng, batch);
        let mut states = Array2::zeros((batch, self.state_dim));
        let mut actions = Array2::zeros((batch, self.action_dim));
        let mut next_states = Array2::zeros((batch, self.state_dim));
        let mut rewards = Vec::with_capacity(batch);
        let mut dones = Vec::with_capacity(batch);
        for (row, &i) in idx.iter().enumerate() {
            let tr = self.buffer.get(i);
            for (c, &v) in tr.state.iter().enumerate() {
                states[(row, c)] = v;
            }
            for (c, &v) in tr.action.iter().enumerate() {
                actions[(row, c)] = v;
            }
            for (c, &v) in tr.next_state.iter().enumerate() {
                next_states[(row, c)] = v;
            }
            rewards.push(tr.reward);
            dones.push(tr.done);
        }

        // bootstrap targets from the target policy and min of target critics
        let draws = draw_chain::<T, _>(&mut self.rng, batch, self.action_dim, self.hp.k_steps);
        let next_actions = reverse_chain(&self.target_policy, &next_states, &self.schedule, &draws);
        let q1n = self.target_q1.forward(&next_states, &next_actions);
        let q2n = self.target_q2.forward(&next_states, &next_actions);
        let targets = td_targets(
            &rewards,
            &dones,
            q1n.as_slice().unwrap(),
            q2n.as_slice().unwrap(),
            self.hp.gamma,
        );
        let targets = Array1::from_vec(targets);

        // Algorithm-literal variant regresses on fresh target-policy actions
        // at s_t; the standard path uses the stored behavior actions.
        let reg_actions = if self.hp.literal_critic_target {
            let d = draw_chain::<T, _>(&mut self.rng, batch, self.action_dim, self.hp.k_steps);
            reverse_chain(&self.target_policy, &states, &self.schedule, &d)
        } else {
            actions.clone()
        };

        let bt = T::of_usize(batch);
        for (critic, opt) in [
            (&mut self.q1, &mut self.opt_q1),
            (&mut self.q2, &mut self.opt_q2),
        ] {
            let (q, cache) = critic.forward_cached(&states, &reg_actions);
            let err = &q - &targets;
            let loss = err.mapv(|e| e * e).sum() / bt;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("critic loss {loss}")));
            }
            let grad_q = err.mapv(|e| T::of(2.0) * e / bt);
            let mut grads = MlpGrads::zeros_like(critic.mlp());
            critic.backward(&cache, &grad_q, &mut grads);
            opt.step(critic.mlp_mut(), &grads);
        }

        self.update_count += 1;
        if self.update_count % self.hp.policy_delay as u64 == 0 {
            let chain_draws =
                draw_chain::<T, _>(&mut self.rng, batch, self.action_dim, self.hp.k_steps);
            let diff_draws =
                draw_diffusion::<T, _>(&mut self.rng, batch, self.action_dim, self.hp.k_steps);
            let mut grads = MlpGrads::zeros_like(self.policy.mlp());
            let losses = policy_loss_and_grads(
                &self.policy,
                &self.q1,
                &states,
                &actions,
                &self.schedule,
                self.hp.eta,
                &chain_draws,
                &diff_draws,
                &mut grads,
            );
            if !losses.total().is_finite() || !grads.is_finite() {
                return Err(Error::Divergence(format!(
                    "policy loss {} (diffusion {}, q {})",
                    losses.total(),
                    losses.diffusion,
                    losses.q
                )));
            }
            self.opt_policy.step(self.policy.mlp_mut(), &grads);

            let rho = self.hp.soft_update_rate;
            self.target_policy.soft_update_from(&self.policy, rho);
            self.target_q1.soft_update_from(&self.q1, rho);
            self.target_q2.soft_update_from(&self.q2, rho);
        }
        Ok(())
    }
}

/// Chain-sample one action for one state, add exploration noise, clamp.
pub fn sample_policy_action<T: Real, R: Rng + ?Sized>(
    policy: &NoiseNet<T>,
    schedule: &DiffusionSchedule<T>,
    state: &[T],
    rng: &mut R,
    noise_std: T,
) -> Vec<T> {
    let states = Array2::from_shape_vec((1, state.len()), state.to_vec())
        .expect("state row");
    let draws = draw_chain::<T, _>(rng, 1, policy.action_dim(), schedule.k_steps);
    let a0 = reverse_chain(policy, &states, schedule, &draws);
    (0..policy.action_dim())
        .map(|j| {
            let mut v = a0[(0, j)];
            if noise_std > T::zero() {
                v += T::standard_normal(rng) * noise_std;
            }
            v.max(-T::one()).min(T::one())
        })
        .collect()
}
