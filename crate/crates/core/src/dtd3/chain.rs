//! Reverse diffusion sampling and the policy losses, written so that every
//! stochastic input is drawn up front into a plain struct. That keeps the
//! loss surfaces pure functions of the parameters, which the
//! finite-difference tests rely on.

use super::{Critic, DiffusionSchedule, NoiseNet};
use crate::nn::{MlpCache, MlpGrads};
use crate::real::Real;
use ndarray::{Array1, Array2};
use rand::Rng;

/// Gaussian draws for one reverse chain over a batch: the initial a^K and
/// the injected noise for steps k = K..2 (the final step k = 1 adds none).
#[derive(Debug, Clone)]
pub struct ChainDraws<T> {
    pub init: Array2<T>,
    pub noises: Vec<Array2<T>>,
}

/// Draw order: a^K row-major, then each step's noise row-major for
/// k = K down to 2.
pub fn draw_chain<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    batch: usize,
    action_dim: usize,
    k_steps: usize,
) -> ChainDraws<T> {
    let init = Array2::from_shape_fn((batch, action_dim), |_| T::standard_normal(rng));
    let noises = (1..k_steps)
        .map(|_| Array2::from_shape_fn((batch, action_dim), |_| T::standard_normal(rng)))
        .collect();
    ChainDraws { init, noises }
}

/// Per-step intermediates of a cached chain run.
pub struct ChainCache<T> {
    /// (net cache, coefficient of the noise prediction) for k = K..1.
    steps: Vec<(MlpCache<T>, T)>,
    /// a^0 before clamping, for the clamp subgradient.
    raw_a0: Array2<T>,
}

fn chain_step<T: Real>(
    a_k: &Array2<T>,
    eps_hat: &Array2<T>,
    noise: Option<&Array2<T>>,
    schedule: &DiffusionSchedule<T>,
    k: usize,
) -> (Array2<T>, T) {
    let alpha = schedule.alpha(k);
    let beta = schedule.beta(k);
    let coef = beta / (alpha * (T::one() - schedule.alpha_bar(k))).sqrt();
    let mut next = a_k.mapv(|v| v / alpha.sqrt()) - &eps_hat.mapv(|e| e * coef);
    if let Some(n) = noise {
        next = next + &n.mapv(|v| v * beta.sqrt());
    }
    (next, coef)
}

fn clamp_unit<T: Real>(a: &Array2<T>) -> Array2<T> {
    a.mapv(|v| v.max(-T::one()).min(T::one()))
}

/// Run the reverse chain for a batch of states and return the clamped a^0.
pub fn reverse_chain<T: Real>(
    net: &NoiseNet<T>,
    states: &Array2<T>,
    schedule: &DiffusionSchedule<T>,
    draws: &ChainDraws<T>,
) -> Array2<T> {
    let batch = states.nrows();
    let mut a = draws.init.clone();
    for (j, k) in (1..=schedule.k_steps).rev().enumerate() {
        let ks = vec![k; batch];
        let eps_hat = net.predict(&a, states, &ks);
        let noise = if k > 1 { Some(&draws.noises[j]) } else { None };
        let (next, _) = chain_step(&a, &eps_hat, noise, schedule, k);
        a = next;
    }
    clamp_unit(&a)
}

/// Cached variant for backprop through the whole chain.
pub fn reverse_chain_cached<T: Real>(
    net: &NoiseNet<T>,
    states: &Array2<T>,
    schedule: &DiffusionSchedule<T>,
    draws: &ChainDraws<T>,
) -> (Array2<T>, ChainCache<T>) {
    let batch = states.nrows();
    let mut a = draws.init.clone();
    let mut steps = Vec::with_capacity(schedule.k_steps);
    for (j, k) in (1..=schedule.k_steps).rev().enumerate() {
        let ks = vec![k; batch];
        let (eps_hat, cache) = net.predict_cached(&a, states, &ks);
        let noise = if k > 1 { Some(&draws.noises[j]) } else { None };
        let (next, coef) = chain_step(&a, &eps_hat, noise, schedule, k);
        steps.push((cache, coef));
        a = next;
    }
    let clamped = clamp_unit(&a);
    (
        clamped,
        ChainCache {
            steps,
            raw_a0: a,
        },
    )
}

/// Backpropagate dL/d(clamped a^0) through the chain into the network
/// parameter gradients. The clamp contributes a pass-through subgradient
/// inside [-1, 1] and zero outside.
pub fn chain_backward<T: Real>(
    net: &NoiseNet<T>,
    schedule: &DiffusionSchedule<T>,
    cache: &ChainCache<T>,
    grad_a0: &Array2<T>,
    grads: &mut MlpGrads<T>,
) {
    let mut g = Array2::from_shape_fn(grad_a0.dim(), |(i, j)| {
        let raw = cache.raw_a0[(i, j)];
        if raw.abs() > T::one() {
            T::zero()
        } else {
            grad_a0[(i, j)]
        }
    });
    // steps were recorded for k = K..1; walk them back in reverse
    for (j, k) in (1..=schedule.k_steps).enumerate() {
        let (step_cache, coef) = &cache.steps[schedule.k_steps - 1 - j];
        let grad_eps = g.mapv(|v| -*coef * v);
        let grad_a_through_net = net.backward_to_action(step_cache, &grad_eps, grads);
        let inv_sqrt_alpha = T::one() / schedule.alpha(k).sqrt();
        g = g.mapv(|v| v * inv_sqrt_alpha) + &grad_a_through_net;
    }
}

/// Draws for the denoising loss: a uniform timestep and a noise vector per
/// batch element (timesteps first, then the noise matrix row-major).
#[derive(Debug, Clone)]
pub struct DiffusionDraws<T> {
    pub ks: Vec<usize>,
    pub eps: Array2<T>,
}

pub fn draw_diffusion<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    batch: usize,
    action_dim: usize,
    k_steps: usize,
) -> DiffusionDraws<T> {
    let ks = (0..batch).map(|_| rng.gen_range(1..=k_steps)).collect();
    let eps = Array2::from_shape_fn((batch, action_dim), |_| T::standard_normal(rng));
    DiffusionDraws { ks, eps }
}

fn noised_actions<T: Real>(
    actions0: &Array2<T>,
    schedule: &DiffusionSchedule<T>,
    draws: &DiffusionDraws<T>,
) -> Array2<T> {
    Array2::from_shape_fn(actions0.dim(), |(i, j)| {
        let abar = schedule.alpha_bar(draws.ks[i]);
        abar.sqrt() * actions0[(i, j)] + (T::one() - abar).sqrt() * draws.eps[(i, j)]
    })
}

/// Denoising loss: mean over the batch of the squared norm of the noise
/// prediction error.
pub fn diffusion_loss<T: Real>(
    net: &NoiseNet<T>,
    states: &Array2<T>,
    actions0: &Array2<T>,
    schedule: &DiffusionSchedule<T>,
    draws: &DiffusionDraws<T>,
) -> T {
    let noised = noised_actions(actions0, schedule, draws);
    let eps_hat = net.predict(&noised, states, &draws.ks);
    let diff = &draws.eps - &eps_hat;
    diff.mapv(|d| d * d).sum() / T::of_usize(states.nrows())
}

/// Denoising loss plus its parameter gradients (accumulated into `grads`).
pub fn diffusion_loss_backward<T: Real>(
    net: &NoiseNet<T>,
    states: &Array2<T>,
    actions0: &Array2<T>,
    schedule: &DiffusionSchedule<T>,
    draws: &DiffusionDraws<T>,
    grads: &mut MlpGrads<T>,
) -> T {
    let batch = T::of_usize(states.nrows());
    let noised = noised_actions(actions0, schedule, draws);
    let (eps_hat, cache) = net.predict_cached(&noised, states, &draws.ks);
    let diff = &draws.eps - &eps_hat;
    let loss = diff.mapv(|d| d * d).sum() / batch;
    let grad_out = diff.mapv(|d| -T::of(2.0) * d / batch);
    net.backward_to_action(&cache, &grad_out, grads);
    loss
}

/// Normalizer of the Q-improvement term: the mean absolute critic value over
/// the behavior batch, treated as a constant (no gradient flows through it).
pub fn q_scale<T: Real>(critic: &Critic<T>, states: &Array2<T>, actions: &Array2<T>) -> T {
    let q = critic.forward(states, actions);
    let scale = q.mapv(|v| v.abs()).sum() / T::of_usize(q.len());
    if scale > T::zero() {
        scale
    } else {
        T::one()
    }
}

/// Value of the Q-improvement loss `-eta / scale * mean Q(s, a0)` for
/// already-sampled actions.
pub fn q_loss_value<T: Real>(
    critic: &Critic<T>,
    states: &Array2<T>,
    a0: &Array2<T>,
    eta: T,
    scale: T,
) -> T {
    let q = critic.forward(states, a0);
    let mean = q.sum() / T::of_usize(q.len());
    -eta / scale * mean
}

/// The two components of the policy objective; the training loss is their
/// sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyLosses<T> {
    pub diffusion: T,
    pub q: T,
}

impl<T: Real> PolicyLosses<T> {
    pub fn total(&self) -> T {
        self.diffusion + self.q
    }
}

/// Pure loss evaluation for a fixed draw set; the finite-difference oracle
/// perturbs parameters around this function.
pub fn policy_loss_value<T: Real>(
    policy: &NoiseNet<T>,
    critic: &Critic<T>,
    states: &Array2<T>,
    stored_actions: &Array2<T>,
    schedule: &DiffusionSchedule<T>,
    eta: T,
    chain_draws: &ChainDraws<T>,
    diff_draws: &DiffusionDraws<T>,
) -> PolicyLosses<T> {
    let diffusion = diffusion_loss(policy, states, stored_actions, schedule, diff_draws);
    let a0 = reverse_chain(policy, states, schedule, chain_draws);
    let scale = q_scale(critic, states, stored_actions);
    let q = q_loss_value(critic, states, &a0, eta, scale);
    PolicyLosses { diffusion, q }
}

/// Combined policy loss with parameter gradients accumulated into `grads`.
/// The critic participates only through its action gradient; its own
/// parameters receive nothing.
pub fn policy_loss_and_grads<T: Real>(
    policy: &NoiseNet<T>,
    critic: &Critic<T>,
    states: &Array2<T>,
    stored_actions: &Array2<T>,
    schedule: &DiffusionSchedule<T>,
    eta: T,
    chain_draws: &ChainDraws<T>,
    diff_draws: &DiffusionDraws<T>,
    grads: &mut MlpGrads<T>,
) -> PolicyLosses<T> {
    let diffusion =
        diffusion_loss_backward(policy, states, stored_actions, schedule, diff_draws, grads);

    let (a0, chain_cache) = reverse_chain_cached(policy, states, schedule, chain_draws);
    let scale = q_scale(critic, states, stored_actions);
    let (qvals, critic_cache) = critic.forward_cached(states, &a0);
    let batch = T::of_usize(states.nrows());
    let q = -eta / scale * (qvals.sum() / batch);
    let grad_q = Array1::from_elem(qvals.len(), -eta / (scale * batch));
    let grad_a0 = critic.action_gradient(&critic_cache, &grad_q);
    chain_backward(policy, schedule, &chain_cache, &grad_a0, grads);

    PolicyLosses { diffusion, q }
}

/// TD targets `y = r + gamma * min(q1', q2')`, dropping the bootstrap term
/// on terminal transitions.
pub fn td_targets<T: Real>(
    rewards: &[T],
    dones: &[bool],
    q1_next: &[T],
    q2_next: &[T],
    gamma: T,
) -> Vec<T> {
    rewards
        .iter()
        .zip(dones)
        .zip(q1_next.iter().zip(q2_next))
        .map(|((&r, &done), (&q1, &q2))| {
            if done {
                r
            } else {
                r + gamma * q1.min(q2)
            }
        })
        .collect()
}
