//! Comparison policies: all-local, all-offload, random offloading (all
//! three with an even RU split), and a DQN over the joint binary action
//! space that shares the Hungarian allocator with DTD3.

mod dqn;

pub use dqn::{action_index_to_action, action_to_index, DqnAgent, DqnHyperparams};

pub use crate::allocator::even_ru_split;

use crate::env::Action;
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// The five policies the experiment harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Local,
    Full,
    Random,
    Dqn,
    Dtd3,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Local,
        PolicyKind::Full,
        PolicyKind::Random,
        PolicyKind::Dqn,
        PolicyKind::Dtd3,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Local => "local",
            PolicyKind::Full => "full",
            PolicyKind::Random => "random",
            PolicyKind::Dqn => "dqn",
            PolicyKind::Dtd3 => "dtd3",
        }
    }

    /// True for the policies that are trained and checkpointed.
    pub fn is_learned(&self) -> bool {
        matches!(self, PolicyKind::Dqn | PolicyKind::Dtd3)
    }

    /// The naive baselines allocate RUs evenly; the learned policies use the
    /// partition search + Hungarian assignment.
    pub fn uses_even_split(&self) -> bool {
        !self.is_learned()
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(PolicyKind::Local),
            "full" => Ok(PolicyKind::Full),
            "random" => Ok(PolicyKind::Random),
            "dqn" => Ok(PolicyKind::Dqn),
            "dtd3" => Ok(PolicyKind::Dtd3),
            other => Err(Error::Config(format!(
                "unknown policy '{other}' (expected local|full|random|dqn|dtd3)"
            ))),
        }
    }
}

/// Every compute task runs locally.
pub fn local_action(n_compute: usize) -> Action {
    Action(vec![false; n_compute])
}

/// Every compute task is offloaded.
pub fn full_action(n_compute: usize) -> Action {
    Action(vec![true; n_compute])
}

/// Independent fair coin per compute task.
pub fn random_action<R: Rng + ?Sized>(n_compute: usize, rng: &mut R) -> Action {
    Action((0..n_compute).map(|_| rng.gen_bool(0.5)).collect())
}
