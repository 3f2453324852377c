//! Diffusion-policy TD3: a conditional denoising network as the actor, twin
//! critics with min-bootstrapped targets, delayed policy updates, and soft
//! target tracking.
//!
//! The actor draws an action by sampling Gaussian noise and running the
//! K-step reverse diffusion chain conditioned on the state; training
//! combines the denoising (behavior-cloning) loss with a normalized Q-value
//! term.

mod agent;
mod chain;

pub use agent::{Dtd3Agent, Dtd3Hyperparams};
pub use chain::{
    diffusion_loss, diffusion_loss_backward, draw_chain, draw_diffusion, policy_loss_and_grads,
    policy_loss_value, q_loss_value, q_scale, reverse_chain, reverse_chain_cached, td_targets,
    ChainDraws, DiffusionDraws, PolicyLosses,
};

use crate::env::Action;
use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpCache, MlpGrads};
use crate::real::Real;
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

/// Variance-preserving noise schedule: beta_k for k = 1..=K with
/// `beta_k = 1 - exp(-beta_min/K - (beta_max-beta_min)(2k-1)/(2K^2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule<T> {
    pub k_steps: usize,
    pub betas: Vec<T>,
    pub alphas: Vec<T>,
    pub alpha_bars: Vec<T>,
}

impl<T: Real> DiffusionSchedule<T> {
    pub fn vp(k_steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if k_steps == 0 {
            return Err(Error::Config("diffusion needs at least one step".into()));
        }
        if beta_min <= 0.0 || beta_max < beta_min {
            return Err(Error::Config("need 0 < beta_min <= beta_max".into()));
        }
        let kf = k_steps as f64;
        let mut betas = Vec::with_capacity(k_steps);
        for k in 1..=k_steps {
            let exponent =
                -beta_min / kf - (beta_max - beta_min) * (2 * k - 1) as f64 / (2.0 * kf * kf);
            betas.push(T::of(1.0 - exponent.exp()));
        }
        let alphas: Vec<T> = betas.iter().map(|&b| T::one() - b).collect();
        let mut alpha_bars = Vec::with_capacity(k_steps);
        let mut prod = T::one();
        for &a in &alphas {
            prod *= a;
            alpha_bars.push(prod);
        }
        let schedule = DiffusionSchedule {
            k_steps,
            betas,
            alphas,
            alpha_bars,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.betas.len() != self.k_steps
            || self.alphas.len() != self.k_steps
            || self.alpha_bars.len() != self.k_steps
        {
            return Err(Error::Config("schedule length mismatch".into()));
        }
        for &b in &self.betas {
            if b <= T::zero() || b >= T::one() {
                return Err(Error::Config("betas must lie in (0, 1)".into()));
            }
        }
        for w in self.alpha_bars.windows(2) {
            if w[1] >= w[0] {
                return Err(Error::Config("alpha_bar must strictly decrease".into()));
            }
        }
        Ok(())
    }

    /// beta for (1-based) step k.
    pub fn beta(&self, k: usize) -> T {
        self.betas[k - 1]
    }

    pub fn alpha(&self, k: usize) -> T {
        self.alphas[k - 1]
    }

    pub fn alpha_bar(&self, k: usize) -> T {
        self.alpha_bars[k - 1]
    }
}

/// Threshold the continuous diffusion output at zero: positive components
/// offload, everything else (including exactly zero) stays local.
pub fn binarize<T: Real>(a_cont: &[T]) -> Action {
    Action(a_cont.iter().map(|&a| a > T::zero()).collect())
}

/// The noise-prediction network eps_theta(a^k, s, k): an MLP over the
/// concatenated action, state, and a sinusoidal embedding of the timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseNet<T> {
    mlp: Mlp<T>,
    action_dim: usize,
    state_dim: usize,
    k_embed_dim: usize,
}

impl<T: Real> NoiseNet<T> {
    pub fn new<R: rand::Rng + ?Sized>(
        action_dim: usize,
        state_dim: usize,
        hidden: &[usize],
        k_embed_dim: usize,
        rng: &mut R,
    ) -> Self {
        assert!(k_embed_dim % 2 == 0, "sinusoidal embedding dim must be even");
        let mut dims = vec![action_dim + state_dim + k_embed_dim];
        dims.extend_from_slice(hidden);
        dims.push(action_dim);
        NoiseNet {
            mlp: Mlp::init(&dims, rng),
            action_dim,
            state_dim,
            k_embed_dim,
        }
    }

    /// Zero-weight network (predicts zero noise); test hook.
    pub fn zeros(action_dim: usize, state_dim: usize, hidden: &[usize], k_embed_dim: usize) -> Self {
        let mut dims = vec![action_dim + state_dim + k_embed_dim];
        dims.extend_from_slice(hidden);
        dims.push(action_dim);
        NoiseNet {
            mlp: Mlp::zeros(&dims),
            action_dim,
            state_dim,
            k_embed_dim,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn k_embed_dim(&self) -> usize {
        self.k_embed_dim
    }

    pub fn mlp(&self) -> &Mlp<T> {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp<T> {
        &mut self.mlp
    }

    fn embed_k(&self, k: usize) -> Vec<T> {
        let half = self.k_embed_dim / 2;
        let mut emb = Vec::with_capacity(self.k_embed_dim);
        for j in 0..half {
            let freq = T::of((10_000f64).powf(-(j as f64) / half as f64));
            let angle = T::of_usize(k) * freq;
            emb.push(angle.sin());
            emb.push(angle.cos());
        }
        emb
    }

    fn assemble(&self, actions: &Array2<T>, states: &Array2<T>, ks: &[usize]) -> Array2<T> {
        let batch = actions.nrows();
        assert_eq!(states.nrows(), batch);
        assert_eq!(ks.len(), batch);
        assert_eq!(actions.ncols(), self.action_dim);
        assert_eq!(states.ncols(), self.state_dim);
        let width = self.action_dim + self.state_dim + self.k_embed_dim;
        let mut input = Array2::zeros((batch, width));
        for i in 0..batch {
            for j in 0..self.action_dim {
                input[(i, j)] = actions[(i, j)];
            }
            for j in 0..self.state_dim {
                input[(i, self.action_dim + j)] = states[(i, j)];
            }
            for (j, &e) in self.embed_k(ks[i]).iter().enumerate() {
                input[(i, self.action_dim + self.state_dim + j)] = e;
            }
        }
        input
    }

    /// Predicted noise, one row per batch element (per-element timesteps).
    pub fn predict(&self, actions: &Array2<T>, states: &Array2<T>, ks: &[usize]) -> Array2<T> {
        self.mlp.forward(&self.assemble(actions, states, ks))
    }

    pub fn predict_cached(
        &self,
        actions: &Array2<T>,
        states: &Array2<T>,
        ks: &[usize],
    ) -> (Array2<T>, MlpCache<T>) {
        self.mlp.forward_cached(&self.assemble(actions, states, ks))
    }

    /// Backprop through a cached prediction; accumulates parameter gradients
    /// and returns dL/d(action input).
    pub fn backward_to_action(
        &self,
        cache: &MlpCache<T>,
        grad_out: &Array2<T>,
        grads: &mut MlpGrads<T>,
    ) -> Array2<T> {
        let grad_in = self.mlp.backward(cache, grad_out, grads);
        grad_in.slice(ndarray::s![.., 0..self.action_dim]).to_owned()
    }

    pub fn soft_update_from(&mut self, other: &NoiseNet<T>, rho: T) {
        self.mlp.soft_update_from(&other.mlp, rho);
    }
}

/// State-action value network Q(s, a) -> scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critic<T> {
    mlp: Mlp<T>,
    state_dim: usize,
    action_dim: usize,
}

impl<T: Real> Critic<T> {
    pub fn new<R: rand::Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        let mut dims = vec![state_dim + action_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        Critic {
            mlp: Mlp::init(&dims, rng),
            state_dim,
            action_dim,
        }
    }

    pub fn zeros(state_dim: usize, action_dim: usize, hidden: &[usize]) -> Self {
        let mut dims = vec![state_dim + action_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        Critic {
            mlp: Mlp::zeros(&dims),
            state_dim,
            action_dim,
        }
    }

    pub fn mlp(&self) -> &Mlp<T> {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp<T> {
        &mut self.mlp
    }

    fn assemble(&self, states: &Array2<T>, actions: &Array2<T>) -> Array2<T> {
        assert_eq!(states.ncols(), self.state_dim);
        assert_eq!(actions.ncols(), self.action_dim);
        ndarray::concatenate(Axis(1), &[states.view(), actions.view()])
            .expect("state/action batches share a row count")
    }

    pub fn forward(&self, states: &Array2<T>, actions: &Array2<T>) -> Array1<T> {
        self.mlp
            .forward(&self.assemble(states, actions))
            .index_axis(Axis(1), 0)
            .to_owned()
    }

    pub fn forward_cached(
        &self,
        states: &Array2<T>,
        actions: &Array2<T>,
    ) -> (Array1<T>, MlpCache<T>) {
        let (out, cache) = self.mlp.forward_cached(&self.assemble(states, actions));
        (out.index_axis(Axis(1), 0).to_owned(), cache)
    }

    /// Backprop per-row scalar gradients, accumulating parameter gradients.
    pub fn backward(
        &self,
        cache: &MlpCache<T>,
        grad_q: &Array1<T>,
        grads: &mut MlpGrads<T>,
    ) -> Array2<T> {
        let grad_out = grad_q.view().insert_axis(Axis(1)).to_owned();
        self.mlp.backward(cache, &grad_out, grads)
    }

    /// Gradient of a scalar loss w.r.t. the *action* inputs only; the
    /// critic's own parameters stay untouched (policy improvement path).
    pub fn action_gradient(&self, cache: &MlpCache<T>, grad_q: &Array1<T>) -> Array2<T> {
        let mut scratch = MlpGrads::zeros_like(&self.mlp);
        let grad_in = self.backward(cache, grad_q, &mut scratch);
        grad_in
            .slice(ndarray::s![.., self.state_dim..self.state_dim + self.action_dim])
            .to_owned()
    }

    pub fn soft_update_from(&mut self, other: &Critic<T>, rho: T) {
        self.mlp.soft_update_from(&other.mlp, rho);
    }
}
