//! Versioned, self-describing JSON checkpoints. DTD3 and DQN share one
//! container with a distinguishing `kind` tag; a save→load→save round trip
//! is byte-identical.

use crate::baselines::{DqnAgent, DqnHyperparams};
use crate::dtd3::{Critic, DiffusionSchedule, Dtd3Agent, Dtd3Hyperparams, NoiseNet};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::real::Real;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Serializable ChaCha RNG state (the 128-bit word position is split so the
/// record stays plain JSON).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos_hi: u64,
    pub word_pos_lo: u64,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        let pos = rng.get_word_pos();
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos_hi: (pos >> 64) as u64,
            word_pos_lo: pos as u64,
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(((self.word_pos_hi as u128) << 64) | self.word_pos_lo as u128);
        rng
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub version: u32,
    pub payload: Payload<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Payload<T> {
    Dtd3(Dtd3Checkpoint<T>),
    Dqn(DqnCheckpoint<T>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dtd3Checkpoint<T> {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hp: Dtd3Hyperparams<T>,
    pub schedule: DiffusionSchedule<T>,
    pub policy: NoiseNet<T>,
    pub target_policy: NoiseNet<T>,
    pub q1: Critic<T>,
    pub q2: Critic<T>,
    pub target_q1: Critic<T>,
    pub target_q2: Critic<T>,
    pub rng: RngState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DqnCheckpoint<T> {
    pub state_dim: usize,
    pub n_compute: usize,
    pub hp: DqnHyperparams<T>,
    pub q: Mlp<T>,
    pub target_q: Mlp<T>,
    pub rng: RngState,
}

impl<T: Real> Checkpoint<T> {
    pub fn from_dtd3(agent: &Dtd3Agent<T>) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            payload: Payload::Dtd3(Dtd3Checkpoint {
                state_dim: agent.state_dim(),
                action_dim: agent.action_dim(),
                hp: agent.hp.clone(),
                schedule: agent.schedule.clone(),
                policy: agent.policy.clone(),
                target_policy: agent.target_policy.clone(),
                q1: agent.q1.clone(),
                q2: agent.q2.clone(),
                target_q1: agent.target_q1.clone(),
                target_q2: agent.target_q2.clone(),
                rng: RngState::capture(&agent.rng),
            }),
        }
    }

    pub fn from_dqn(agent: &DqnAgent<T>) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            payload: Payload::Dqn(DqnCheckpoint {
                state_dim: agent.state_dim(),
                n_compute: agent.n_compute(),
                hp: agent.hp.clone(),
                q: agent.q.clone(),
                target_q: agent.target_q.clone(),
                rng: RngState::capture(&agent.rng),
            }),
        }
    }

    /// Rebuild a DTD3 agent. Optimizer moments and the replay buffer are not
    /// part of the record; resumed training restarts them fresh.
    pub fn into_dtd3(self) -> Result<Dtd3Agent<T>> {
        match self.payload {
            Payload::Dtd3(c) => Ok(Dtd3Agent::restore_parts(
                c.hp,
                c.schedule,
                [c.policy, c.target_policy],
                [c.q1, c.q2, c.target_q1, c.target_q2],
                c.rng.restore(),
                c.state_dim,
                c.action_dim,
            )),
            Payload::Dqn(_) => Err(Error::Config(
                "checkpoint holds a dqn policy, not dtd3".into(),
            )),
        }
    }

    pub fn into_dqn(self) -> Result<DqnAgent<T>> {
        match self.payload {
            Payload::Dqn(c) => Ok(DqnAgent::restore_parts(
                c.hp,
                c.q,
                c.target_q,
                c.rng.restore(),
                c.state_dim,
                c.n_compute,
            )),
            Payload::Dtd3(_) => Err(Error::Config(
                "checkpoint holds a dtd3 policy, not dqn".into(),
            )),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.payload {
            Payload::Dtd3(_) => "dtd3",
            Payload::Dqn(_) => "dqn",
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let ck: Checkpoint<T> = serde_json::from_str(json)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = fs::read_to_string(path)?;
        Self::from_json(&json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dtd3_round_trip_is_byte_identical() {
        let hp = Dtd3Hyperparams::<f64> {
            hidden: vec![16, 16],
            ..Default::default()
        };
        let agent = Dtd3Agent::new(8, 3, hp, 77).unwrap();
        let ck = Checkpoint::from_dtd3(&agent);
        let first = ck.to_json().unwrap();
        let reloaded = Checkpoint::<f64>::from_json(&first).unwrap();
        let second = reloaded.to_json().unwrap();
        assert_eq!(first, second);
        assert_eq!(reloaded.kind(), "dtd3");
    }

    #[test]
    fn dqn_round_trip_is_byte_identical() {
        let hp = DqnHyperparams::<f64> {
            hidden: vec![16],
            ..Default::default()
        };
        let agent = DqnAgent::new(8, 3, hp, 5).unwrap();
        let ck = Checkpoint::from_dqn(&agent);
        let first = ck.to_json().unwrap();
        let second = Checkpoint::<f64>::from_json(&first).unwrap().to_json().unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn restored_policy_produces_identical_actions() {
        use rand::SeedableRng;
        let hp = Dtd3Hyperparams::<f64> {
            hidden: vec![16, 16],
            ..Default::default()
        };
        let agent = Dtd3Agent::new(8, 3, hp, 12).unwrap();
        let ck = Checkpoint::from_dtd3(&agent);
        let restored = Checkpoint::<f64>::from_json(&ck.to_json().unwrap())
            .unwrap()
            .into_dtd3()
            .unwrap();
        let state = vec![0.4; 8];
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            agent.act_with(&state, &mut r1, 0.0),
            restored.act_with(&state, &mut r2, 0.0)
        );
    }

    #[test]
    fn kind_mismatch_is_an_error() {
        let agent = DqnAgent::<f64>::new(6, 2, DqnHyperparams { hidden: vec![8], ..Default::default() }, 3).unwrap();
        let ck = Checkpoint::from_dqn(&agent);
        assert!(ck.into_dtd3().is_err());
    }

    #[test]
    fn version_is_checked() {
        let agent = DqnAgent::<f64>::new(6, 2, DqnHyperparams { hidden: vec![8], ..Default::default() }, 3).unwrap();
        let json = Checkpoint::from_dqn(&agent).to_json().unwrap();
        let bumped = json.replacen("\"version\": 1", "\"version\": 9", 1);
        assert!(Checkpoint::<f64>::from_json(&bumped).is_err());
    }

    #[test]
    fn file_round_trip_through_disk() {
        let dir = std::env::temp_dir().join("mecax-checkpoint-test");
        let path = dir.join("agent.json");
        let agent = DqnAgent::<f64>::new(6, 2, DqnHyperparams { hidden: vec![8], ..Default::default() }, 3).unwrap();
        let ck = Checkpoint::from_dqn(&agent);
        ck.save(&path).unwrap();
        let loaded = Checkpoint::<f64>::load(&path).unwrap();
        assert_eq!(ck.to_json().unwrap(), loaded.to_json().unwrap());
        let _ = std::fs::remove_dir_all(&dir);
    }
}
