//! Simulator for a single-AP 802.11ax cell with an MEC server: binary task
//! offloading decided by a diffusion-policy TD3 agent (or baseline policies),
//! OFDMA resource-unit allocation via exhaustive partition search plus the
//! Hungarian algorithm, and MEC CPU shares assigned by task priority.
//!
//! The crate is generic over the scalar type through [`Real`]; the `*64`
//! aliases below are the instantiations the command-line tooling uses.

pub mod allocator;
pub mod baselines;
pub mod channel;
pub mod checkpoint;
pub mod dtd3;
pub mod env;
pub mod error;
pub mod nn;
pub mod real;
pub mod replay;
pub mod tasking;

pub use error::{Error, Result};
pub use real::Real;

pub type ChannelParams64 = channel::ChannelParams<f64>;
pub type RateTable64 = channel::RateTable<f64>;
pub type ScenarioConfig64 = tasking::ScenarioConfig<f64>;
pub type Scenario64 = env::Scenario<f64>;
pub type MecEnv64 = env::MecEnv<f64>;
pub type Allocation64 = allocator::Allocation<f64>;
pub type Dtd3Agent64 = dtd3::Dtd3Agent<f64>;
pub type DqnAgent64 = baselines::DqnAgent<f64>;
pub type Checkpoint64 = checkpoint::Checkpoint<f64>;
