//! Experiment primitives: policy rollouts, metric aggregation, sweep and
//! convergence runs, canonical CSV emission.
//!
//! Sweep cells (policy x value x seed) are independent and run in parallel;
//! output ordering is canonical (sorted by the CSV key columns) so results
//! are byte-identical regardless of scheduling.

use crate::config::{Config, SweptParam};
use anyhow::{anyhow, bail, Context, Result};
use mecax_core::baselines::{self, DqnAgent, PolicyKind};
use mecax_core::checkpoint::Checkpoint;
use mecax_core::dtd3::{binarize, Dtd3Agent};
use mecax_core::env::{Action, AllocationStrategy, MecEnv, Scenario, State};
use mecax_core::real::derive_seed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// One row of the sweep CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub policy: String,
    pub swept_param: String,
    pub swept_value: f64,
    pub seed: u64,
    pub mean_total_cost: f64,
    pub qos: f64,
    pub comm_success: f64,
    pub mean_reward: f64,
}

pub const SWEEP_CSV_HEADER: &str =
    "policy,swept_param,swept_value,seed,mean_total_cost,qos,comm_success,mean_reward";

/// One row of the convergence CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub policy: String,
    pub seed: u64,
    pub episode: usize,
    pub reward: f64,
}

pub const CONVERGENCE_CSV_HEADER: &str = "policy,seed,episode,reward";

/// Raw per-slot log kept under `--verbose`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRow {
    pub slot: usize,
    pub total_cost: f64,
    pub qos_hits: usize,
    pub comm_hits: usize,
    pub reward: f64,
}

/// Aggregates plus the raw per-slot rows they were computed from.
#[derive(Debug, Clone)]
pub struct EvalStats {
    pub mean_total_cost: f64,
    pub qos: f64,
    pub comm_success: f64,
    pub mean_reward: f64,
    pub slots: Vec<SlotRow>,
}

/// A ready-to-run policy: the naive rules directly, or a trained agent.
pub enum RolloutPolicy {
    Local,
    Full,
    Random(ChaCha8Rng),
    Dtd3 { agent: Box<Dtd3Agent<f64>>, rng: ChaCha8Rng },
    Dqn { agent: Box<DqnAgent<f64>> },
}

impl RolloutPolicy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            RolloutPolicy::Local => PolicyKind::Local,
            RolloutPolicy::Full => PolicyKind::Full,
            RolloutPolicy::Random(_) => PolicyKind::Random,
            RolloutPolicy::Dtd3 { .. } => PolicyKind::Dtd3,
            RolloutPolicy::Dqn { .. } => PolicyKind::Dqn,
        }
    }

    fn act(&mut self, state: &State<f64>, n_compute: usize) -> Action {
        match self {
            RolloutPolicy::Local => baselines::local_action(n_compute),
            RolloutPolicy::Full => baselines::full_action(n_compute),
            RolloutPolicy::Random(rng) => baselines::random_action(n_compute, rng),
            RolloutPolicy::Dtd3 { agent, rng } => {
                binarize(&agent.act_with(&state.values, rng, 0.0))
            }
            RolloutPolicy::Dqn { agent } => {
                baselines::action_index_to_action(agent.act_greedy(&state.values), n_compute)
            }
        }
    }
}

/// Mix an arbitrary list of seed components into one stream seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x9e37_79b9_7f4a_7c15, |acc, &p| derive_seed(acc, p))
}

mod stream {
    pub const TRAIN_ENV: u64 = 1;
    pub const AGENT: u64 = 2;
    pub const EVAL_ENV: u64 = 3;
    pub const EVAL_POLICY: u64 = 4;
}

fn policy_stream_id(kind: PolicyKind) -> u64 {
    match kind {
        PolicyKind::Local => 11,
        PolicyKind::Full => 12,
        PolicyKind::Random => 13,
        PolicyKind::Dqn => 14,
        PolicyKind::Dtd3 => 15,
    }
}

fn strategy_for(kind: PolicyKind) -> AllocationStrategy {
    if kind.uses_even_split() {
        AllocationStrategy::EvenSplit
    } else {
        AllocationStrategy::Hungarian
    }
}

/// Roll a policy for `eval_slots` slots (episodes restart as configured) and
/// aggregate the metrics.
pub fn evaluate(
    scenario: &Scenario<f64>,
    policy: &mut RolloutPolicy,
    eval_slots: usize,
    env_seed: u64,
) -> Result<EvalStats> {
    let mut env = MecEnv::new(scenario.clone(), strategy_for(policy.kind()), env_seed)
        .map_err(|e| anyhow!("{e}"))?;
    let n_compute = scenario.cfg.n_compute;
    let n_comm = scenario.cfg.n_comm;
    let mut slots = Vec::with_capacity(eval_slots);
    let mut state = env.reset();
    for slot in 0..eval_slots {
        let action = policy.act(&state, n_compute);
        let step = env.step(&action).map_err(|e| anyhow!("{e}"))?;
        slots.push(SlotRow {
            slot,
            total_cost: step.metrics.total_cost,
            qos_hits: step.metrics.qos_hits,
            comm_hits: step.metrics.comm_hits,
            reward: step.reward,
        });
        state = if step.done { env.reset() } else { step.state };
    }
    Ok(aggregate(slots, n_compute, n_comm))
}

/// Recompute the aggregate metrics from raw slot rows (also used by tests to
/// confirm the aggregation).
pub fn aggregate(slots: Vec<SlotRow>, n_compute: usize, n_comm: usize) -> EvalStats {
    let n = slots.len().max(1) as f64;
    let mean_total_cost = slots.iter().map(|s| s.total_cost).sum::<f64>() / n;
    let mean_reward = slots.iter().map(|s| s.reward).sum::<f64>() / n;
    let qos = if n_compute == 0 {
        1.0
    } else {
        slots.iter().map(|s| s.qos_hits).sum::<usize>() as f64 / (n * n_compute as f64)
    };
    let comm_success = if n_comm == 0 {
        1.0
    } else {
        slots.iter().map(|s| s.comm_hits).sum::<usize>() as f64 / (n * n_comm as f64)
    };
    EvalStats {
        mean_total_cost,
        qos,
        comm_success,
        mean_reward,
        slots,
    }
}

/// Train a learned policy on the scenario and return (checkpoint, curve).
pub fn train_learned(
    kind: PolicyKind,
    config: &Config,
    scenario: &Scenario<f64>,
    episodes: usize,
    env_seed: u64,
    agent_seed: u64,
) -> Result<(Checkpoint<f64>, Vec<f64>)> {
    let mut env = MecEnv::new(scenario.clone(), AllocationStrategy::Hungarian, env_seed)
        .map_err(|e| anyhow!("{e}"))?;
    match kind {
        PolicyKind::Dtd3 => {
            let mut hp = config.dtd3.clone();
            hp.episodes = episodes;
            let mut agent = Dtd3Agent::new(env.state_dim(), env.action_dim(), hp, agent_seed)
                .map_err(|e| anyhow!("{e}"))?;
            let curve = agent.train(&mut env).map_err(|e| anyhow!("{e}"))?;
            Ok((Checkpoint::from_dtd3(&agent), curve))
        }
        PolicyKind::Dqn => {
            let mut hp = config.dqn.clone();
            hp.episodes = episodes;
            let mut agent = DqnAgent::new(env.state_dim(), env.action_dim(), hp, agent_seed)
                .map_err(|e| anyhow!("{e}"))?;
            let curve = agent.train(&mut env).map_err(|e| anyhow!("{e}"))?;
            Ok((Checkpoint::from_dqn(&agent), curve))
        }
        other => bail!("policy '{other}' is not trainable"),
    }
}

/// Build a rollout policy, loading the checkpoint for learned kinds.
pub fn rollout_policy(
    kind: PolicyKind,
    checkpoint: Option<&Path>,
    policy_seed: u64,
) -> Result<RolloutPolicy> {
    match kind {
        PolicyKind::Local => Ok(RolloutPolicy::Local),
        PolicyKind::Full => Ok(RolloutPolicy::Full),
        PolicyKind::Random => Ok(RolloutPolicy::Random(ChaCha8Rng::seed_from_u64(policy_seed))),
        PolicyKind::Dtd3 => {
            let path = checkpoint.ok_or_else(|| anyhow!("dtd3 evaluation needs a checkpoint"))?;
            let agent = Checkpoint::<f64>::load(path)
                .map_err(|e| anyhow!("{e}"))?
                .into_dtd3()
                .map_err(|e| anyhow!("{e}"))?;
            Ok(RolloutPolicy::Dtd3 {
                agent: Box::new(agent),
                rng: ChaCha8Rng::seed_from_u64(policy_seed),
            })
        }
        PolicyKind::Dqn => {
            let path = checkpoint.ok_or_else(|| anyhow!("dqn evaluation needs a checkpoint"))?;
            let agent = Checkpoint::<f64>::load(path)
                .map_err(|e| anyhow!("{e}"))?
                .into_dqn()
                .map_err(|e| anyhow!("{e}"))?;
            Ok(RolloutPolicy::Dqn { agent: Box::new(agent) })
        }
    }
}

/// Canonical checkpoint location for a sweep cell.
pub fn checkpoint_path(
    out: &Path,
    kind: PolicyKind,
    swept: SweptParam,
    value: f64,
    seed: u64,
) -> PathBuf {
    out.join("checkpoints")
        .join(format!("{kind}-{}-{value}-seed{seed}.json", swept.as_str()))
}

/// Run the full sweep grid. Learned policies load per-(value, seed)
/// checkpoints; with `train_missing` they are trained (budget:
/// `sweep.episodes`) and saved first, otherwise a missing file is an error
/// naming the gap.
pub fn run_sweep(
    config: &Config,
    out: &Path,
    cli_seed: u64,
    train_missing: bool,
    verbose: bool,
) -> Result<Vec<MetricsRecord>> {
    let sweep = &config.sweep;
    let mut cells = Vec::new();
    for &policy in &sweep.policies {
        for (value_idx, &value) in sweep.values.iter().enumerate() {
            for &seed in &sweep.seeds {
                cells.push((policy, value_idx, value, seed));
            }
        }
    }

    let mut records: Vec<(MetricsRecord, Vec<SlotRow>)> = cells
        .par_iter()
        .map(|&(policy, value_idx, value, seed)| -> Result<_> {
            let scenario = config.scenario_with(sweep.swept, value);
            let pid = policy_stream_id(policy);
            let ckpt = if policy.is_learned() {
                let path = checkpoint_path(out, policy, sweep.swept, value, seed);
                if !path.exists() {
                    if train_missing {
                        let (ck, _) = train_learned(
                            policy,
                            config,
                            &scenario,
                            sweep.episodes,
                            mix_seed(&[cli_seed, seed, value_idx as u64, pid, stream::TRAIN_ENV]),
                            mix_seed(&[cli_seed, seed, value_idx as u64, pid, stream::AGENT]),
                        )?;
                        ck.save(&path).map_err(|e| anyhow!("{e}"))?;
                    } else {
                        bail!(
                            "missing checkpoint for {policy} at {}={} seed {}: {} \
                             (run with --train-missing or train it explicitly)",
                            sweep.swept.as_str(),
                            value,
                            seed,
                            path.display()
                        );
                    }
                }
                Some(path)
            } else {
                None
            };
            let mut rollout = rollout_policy(
                policy,
                ckpt.as_deref(),
                mix_seed(&[cli_seed, seed, pid, stream::EVAL_POLICY]),
            )?;
            // Evaluation tasks are shared across policies and values (the
            // swept knob never enters task generation), so comparisons and
            // the local-policy stability check ride on common draws.
            let stats = evaluate(
                &scenario,
                &mut rollout,
                sweep.eval_slots,
                mix_seed(&[cli_seed, seed, stream::EVAL_ENV]),
            )?;
            let record = MetricsRecord {
                policy: policy.to_string(),
                swept_param: sweep.swept.as_str().to_string(),
                swept_value: value,
                seed,
                mean_total_cost: stats.mean_total_cost,
                qos: stats.qos,
                comm_success: stats.comm_success,
                mean_reward: stats.mean_reward,
            };
            Ok((record, stats.slots))
        })
        .collect::<Result<Vec<_>>>()?;

    records.sort_by(|(a, _), (b, _)| {
        a.policy
            .cmp(&b.policy)
            .then(a.swept_param.cmp(&b.swept_param))
            .then(a.swept_value.partial_cmp(&b.swept_value).expect("finite"))
            .then(a.seed.cmp(&b.seed))
    });

    if verbose {
        for (record, slots) in &records {
            let name = format!(
                "slots-{}-{}-{}-seed{}.csv",
                record.policy, record.swept_param, record.swept_value, record.seed
            );
            write_slot_log(&out.join(name), slots)?;
        }
    }

    Ok(records.into_iter().map(|(r, _)| r).collect())
}

/// Train each learned policy from scratch per seed and record per-episode
/// mean rewards. Checkpoints land in `out/checkpoints/` for later reuse.
pub fn run_convergence(config: &Config, out: &Path, cli_seed: u64) -> Result<Vec<CurveRow>> {
    let policies: Vec<PolicyKind> = config
        .sweep
        .policies
        .iter()
        .copied()
        .filter(|p| p.is_learned())
        .collect();
    if policies.is_empty() {
        bail!("convergence needs dtd3 and/or dqn in sweep.policies");
    }
    let mut cells = Vec::new();
    for &policy in &policies {
        for &seed in &config.sweep.seeds {
            cells.push((policy, seed));
        }
    }
    let episodes = |p: PolicyKind| match p {
        PolicyKind::Dtd3 => config.dtd3.episodes,
        _ => config.dqn.episodes,
    };
    let curves: Vec<(PolicyKind, u64, Vec<f64>)> = cells
        .par_iter()
        .map(|&(policy, seed)| -> Result<_> {
            let pid = policy_stream_id(policy);
            let (ck, curve) = train_learned(
                policy,
                config,
                &config.scenario,
                episodes(policy),
                mix_seed(&[cli_seed, seed, pid, stream::TRAIN_ENV]),
                mix_seed(&[cli_seed, seed, pid, stream::AGENT]),
            )?;
            let path = out
                .join("checkpoints")
                .join(format!("{policy}-convergence-seed{seed}.json"));
            ck.save(&path).map_err(|e| anyhow!("{e}"))?;
            Ok((policy, seed, curve))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (policy, seed, curve) in curves {
        for (episode, reward) in curve.iter().enumerate() {
            rows.push(CurveRow {
                policy: policy.to_string(),
                seed,
                episode,
                reward: *reward,
            });
        }
    }
    rows.sort_by(|a, b| {
        a.policy
            .cmp(&b.policy)
            .then(a.seed.cmp(&b.seed))
            .then(a.episode.cmp(&b.episode))
    });
    Ok(rows)
}

pub fn sweep_csv(records: &[MetricsRecord]) -> String {
    let mut text = String::from(SWEEP_CSV_HEADER);
    text.push('\n');
    for r in records {
        writeln!(
            text,
            "{},{},{},{},{},{},{},{}",
            r.policy,
            r.swept_param,
            r.swept_value,
            r.seed,
            r.mean_total_cost,
            r.qos,
            r.comm_success,
            r.mean_reward
        )
        .expect("string write");
    }
    text
}

pub fn convergence_csv(rows: &[CurveRow]) -> String {
    let mut text = String::from(CONVERGENCE_CSV_HEADER);
    text.push('\n');
    for r in rows {
        writeln!(text, "{},{},{},{}", r.policy, r.seed, r.episode, r.reward).expect("string write");
    }
    text
}

pub fn write_sweep_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    write_file(path, &sweep_csv(records))
}

pub fn write_convergence_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    write_file(path, &convergence_csv(rows))
}

pub fn write_slot_log(path: &Path, slots: &[SlotRow]) -> Result<()> {
    let mut text = String::from("slot,total_cost,qos_hits,comm_hits,reward\n");
    for s in slots {
        writeln!(
            text,
            "{},{},{},{},{}",
            s.slot, s.total_cost, s.qos_hits, s.comm_hits, s.reward
        )
        .expect("string write");
    }
    write_file(path, &text)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Parse a sweep CSV back into records (used by `plot` and tests).
pub fn parse_sweep_csv(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty CSV"))?;
    if header != SWEEP_CSV_HEADER {
        bail!("unexpected sweep CSV header: {header}");
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            bail!("row {} has {} columns, expected 8", i + 2, cols.len());
        }
        records.push(MetricsRecord {
            policy: cols[0].to_string(),
            swept_param: cols[1].to_string(),
            swept_value: cols[2].parse()?,
            seed: cols[3].parse()?,
            mean_total_cost: cols[4].parse()?,
            qos: cols[5].parse()?,
            comm_success: cols[6].parse()?,
            mean_reward: cols[7].parse()?,
        });
    }
    Ok(records)
}

pub fn parse_convergence_csv(text: &str) -> Result<Vec<CurveRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty CSV"))?;
    if header != CONVERGENCE_CSV_HEADER {
        bail!("unexpected convergence CSV header: {header}");
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            bail!("convergence row has {} columns, expected 4", cols.len());
        }
        rows.push(CurveRow {
            policy: cols[0].to_string(),
            seed: cols[1].parse()?,
            episode: cols[2].parse()?,
            reward: cols[3].parse()?,
        });
    }
    Ok(rows)
}
