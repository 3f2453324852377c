//! The per-slot MDP: state assembly, action application through the
//! allocator, the relative-cost reward, and episode bookkeeping.
//!
//! One environment owns one RNG stream, so a full trajectory is a pure
//! function of (scenario, seed, action sequence). Station positions are
//! redrawn at every reset; channel gains stay fixed within an episode.

use crate::allocator::{self, Allocation, StaRef};
use crate::channel::{self, ChannelParams, RateTable};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tasking::{
    self, comm_cost, generate_tasks, local_cost, offload_cost, total_cost, CommTask, ComputeTask,
    CostPair, ScenarioConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Everything needed to instantiate an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario<T> {
    pub cfg: ScenarioConfig<T>,
    pub channel: ChannelParams<T>,
    pub rate_table: RateTable<T>,
}

impl<T: Real> Default for Scenario<T> {
    fn default() -> Self {
        Scenario {
            cfg: ScenarioConfig::default(),
            channel: ChannelParams::default(),
            rate_table: RateTable::default(),
        }
    }
}

impl<T: Real> Scenario<T> {
    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        self.channel.validate()?;
        self.rate_table.validate()
    }
}

/// Scales applied to raw task quantities before they enter the state vector,
/// keeping network inputs near [0, 1.2].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateNorm<T> {
    pub compute_data_max: T,
    pub comm_data_max: T,
    pub cycles_max: T,
    pub f_mec_ref: T,
}

/// Normalized observation: the L task data sizes (compute stations first),
/// the M CPU demands, and the available MEC capacity — length L + M + 1.
#[derive(Debug, Clone, PartialEq)]
pub struct State<T> {
    pub values: Vec<T>,
    pub norm: StateNorm<T>,
}

/// Binary offloading decision vector (constraint C3).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action(pub Vec<bool>);

impl Action {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-slot outcome counters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotMetrics<T> {
    /// Weighted objective value of the slot.
    pub total_cost: T,
    /// Compute tasks that met their deadline (C1).
    pub qos_hits: usize,
    /// Communication tasks that met their deadline (C2).
    pub comm_hits: usize,
    pub reward: T,
}

/// Replay record. Actions are stored in their continuous pre-binarization
/// form so the diffusion policy can behavior-clone its own output space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition<T> {
    pub state: Vec<T>,
    pub action: Vec<T>,
    pub reward: T,
    pub next_state: Vec<T>,
    pub done: bool,
}

/// How step() maps decisions to RU assignments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AllocationStrategy {
    /// Partition search + Hungarian assignment.
    Hungarian,
    /// Uniform RU sizes (the naive baselines).
    EvenSplit,
}

#[derive(Debug, Clone)]
pub struct StepResult<T> {
    pub state: State<T>,
    pub reward: T,
    pub metrics: SlotMetrics<T>,
    pub done: bool,
    /// The allocation the slot ran under, for metric recomputation.
    pub allocation: Allocation<T>,
}

struct SlotOutcome<T> {
    weighted: T,
    qos_hits: usize,
    comm_hits: usize,
    allocation: Allocation<T>,
}

pub struct MecEnv<T> {
    scenario: Scenario<T>,
    strategy: AllocationStrategy,
    rng: ChaCha8Rng,
    comm_ref_rate: T,
    compute_gains: Vec<T>,
    comm_gains: Vec<T>,
    compute_tasks: Vec<ComputeTask<T>>,
    comm_tasks: Vec<CommTask<T>>,
    slot: usize,
    awaiting_reset: bool,
}

impl<T: Real> MecEnv<T> {
    pub fn new(scenario: Scenario<T>, strategy: AllocationStrategy, seed: u64) -> Result<Self> {
        scenario.validate()?;
        let comm_ref_rate = tasking::comm_reference_rate(&scenario.rate_table);
        Ok(MecEnv {
            scenario,
            strategy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            comm_ref_rate,
            compute_gains: Vec::new(),
            comm_gains: Vec::new(),
            compute_tasks: Vec::new(),
            comm_tasks: Vec::new(),
            slot: 0,
            awaiting_reset: true,
        })
    }

    pub fn scenario(&self) -> &Scenario<T> {
        &self.scenario
    }

    pub fn action_dim(&self) -> usize {
        self.scenario.cfg.n_compute
    }

    /// L + M + 1.
    pub fn state_dim(&self) -> usize {
        let cfg = &self.scenario.cfg;
        cfg.n_compute + cfg.n_comm + cfg.n_compute + 1
    }

    pub fn norm(&self) -> StateNorm<T> {
        let cfg = &self.scenario.cfg;
        StateNorm {
            compute_data_max: cfg.compute_data_range.1,
            comm_data_max: cfg.comm_data_range.1,
            cycles_max: cfg.compute_cycles_range.1,
            f_mec_ref: T::of(1e10),
        }
    }

    pub fn compute_tasks(&self) -> &[ComputeTask<T>] {
        &self.compute_tasks
    }

    pub fn comm_tasks(&self) -> &[CommTask<T>] {
        &self.comm_tasks
    }

    pub fn gains(&self) -> (&[T], &[T]) {
        (&self.compute_gains, &self.comm_gains)
    }

    /// Redraw station positions (uniform over the disc; only the radial
    /// coordinate matters to the channel) and the first slot's tasks.
    pub fn reset(&mut self) -> State<T> {
        let cfg = self.scenario.cfg.clone();
        self.compute_gains = (0..cfg.n_compute)
            .map(|_| self.draw_gain(cfg.cell_radius))
            .collect();
        self.comm_gains = (0..cfg.n_comm)
            .map(|_| self.draw_gain(cfg.cell_radius))
            .collect();
        let (compute, comm) = generate_tasks(&mut self.rng, &cfg, self.comm_ref_rate);
        self.compute_tasks = compute;
        self.comm_tasks = comm;
        self.slot = 0;
        self.awaiting_reset = false;
        self.state()
    }

    fn draw_gain(&mut self, radius: T) -> T {
        // 1 - u in (0, 1] keeps the distance strictly positive
        let u = T::one() - T::uniform(&mut self.rng, T::zero(), T::one());
        let distance = radius * u.sqrt();
        channel::channel_gain(distance, &self.scenario.channel).expect("distance > 0")
    }

    /// Current normalized observation.
    pub fn state(&self) -> State<T> {
        let norm = self.norm();
        let cfg = &self.scenario.cfg;
        let mut values = Vec::with_capacity(self.state_dim());
        for t in &self.compute_tasks {
            values.push(t.data_bits / norm.compute_data_max);
        }
        for t in &self.comm_tasks {
            values.push(t.data_bits / norm.comm_data_max);
        }
        for t in &self.compute_tasks {
            values.push(t.cpu_cycles / norm.cycles_max);
        }
        values.push(cfg.f_mec_total / norm.f_mec_ref);
        State { values, norm }
    }

    fn allocate(&self, decisions: &[bool]) -> Result<Allocation<T>> {
        let cfg = &self.scenario.cfg;
        match self.strategy {
            AllocationStrategy::Hungarian => allocator::allocate(
                &self.compute_tasks,
                &self.comm_tasks,
                decisions,
                &self.compute_gains,
                &self.comm_gains,
                cfg,
                &self.scenario.channel,
                &self.scenario.rate_table,
            ),
            AllocationStrategy::EvenSplit => allocator::allocate_even(
                &self.compute_tasks,
                &self.comm_tasks,
                decisions,
                &self.compute_gains,
                &self.comm_gains,
                cfg,
                &self.scenario.channel,
                &self.scenario.rate_table,
            ),
        }
    }

    /// Cost the current slot under the given decisions. Offloads that are
    /// demoted or whose uplink is unreachable fall back to local execution;
    /// an unreachable communication task counts as a deadline violation and
    /// contributes no finite cost.
    fn slot_outcome(&self, decisions: &[bool]) -> Result<SlotOutcome<T>> {
        let cfg = &self.scenario.cfg;
        let allocation = self.allocate(decisions)?;

        let m_count = self.compute_tasks.len();
        let mut effective = vec![false; m_count];
        let mut local_pairs = Vec::with_capacity(m_count);
        let mut offload_pairs = vec![CostPair::zero(); m_count];
        let mut qos_hits = 0;
        for (m, task) in self.compute_tasks.iter().enumerate() {
            let local = local_cost(task, cfg.f_local);
            let mut delay = local.delay;
            if decisions[m] && !allocation.demoted.contains(&m) {
                let rate = allocation.rates[&StaRef::Compute(m)];
                let share = allocation.cpu_shares[&m];
                if let Some(pair) = offload_cost(task, share, rate, cfg.tx_power) {
                    effective[m] = true;
                    delay = pair.delay;
                    offload_pairs[m] = pair;
                }
            }
            if delay <= task.deadline {
                qos_hits += 1;
            }
            local_pairs.push(local);
        }

        let mut comm_pairs = Vec::with_capacity(self.comm_tasks.len());
        let mut comm_hits = 0;
        for (n, task) in self.comm_tasks.iter().enumerate() {
            let rate = allocation.rates.get(&StaRef::Comm(n)).copied().unwrap_or(T::zero());
            match comm_cost(task, rate, cfg.tx_power) {
                Some(pair) => {
                    if pair.delay <= task.deadline {
                        comm_hits += 1;
                    }
                    comm_pairs.push(pair);
                }
                None => {} // unreachable uplink: violated, nothing to add
            }
        }

        let totals = total_cost(
            &effective,
            &local_pairs,
            &offload_pairs,
            &comm_pairs,
            cfg.lambda_weight,
        );
        Ok(SlotOutcome {
            weighted: totals.weighted,
            qos_hits,
            comm_hits,
            allocation,
        })
    }

    /// The relative-cost reward: `(c_local - c_total) / c_local` when every
    /// communication deadline holds, −1 otherwise.
    pub fn compute_reward(c_local: T, c_total: T, all_comm_met: bool) -> T {
        if all_comm_met {
            (c_local - c_total) / c_local
        } else {
            -T::one()
        }
    }

    /// Weighted cost of the current slot with every compute task local,
    /// communication stations allocated by the same pipeline.
    pub fn c_local_baseline(&self) -> Result<T> {
        let zeros = vec![false; self.compute_tasks.len()];
        Ok(self.slot_outcome(&zeros)?.weighted)
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult<T>> {
        if self.awaiting_reset {
            return Err(Error::InvalidInput(
                "episode finished or not started; call reset()".into(),
            ));
        }
        let cfg = self.scenario.cfg.clone();
        if action.len() != cfg.n_compute {
            return Err(Error::InvalidInput(format!(
                "action length {} does not match {} compute STAs",
                action.len(),
                cfg.n_compute
            )));
        }

        let outcome = self.slot_outcome(&action.0)?;
        let c_local = self.c_local_baseline()?;
        let all_comm_met = outcome.comm_hits == self.comm_tasks.len();
        let mut reward = Self::compute_reward(c_local, outcome.weighted, all_comm_met);
        if cfg.penalize_compute_violation && outcome.qos_hits < self.compute_tasks.len() {
            reward = -T::one();
        }

        self.slot += 1;
        let done = self.slot >= cfg.slots_per_episode;
        let (compute, comm) = generate_tasks(&mut self.rng, &cfg, self.comm_ref_rate);
        self.compute_tasks = compute;
        self.comm_tasks = comm;
        if done {
            self.awaiting_reset = true;
        }

        Ok(StepResult {
            state: self.state(),
            reward,
            metrics: SlotMetrics {
                total_cost: outcome.weighted,
                qos_hits: outcome.qos_hits,
                comm_hits: outcome.comm_hits,
                reward,
            },
            done,
            allocation: outcome.allocation,
        })
    }
}
