//! TOML experiment configuration with unit-suffixed quantities.
//!
//! Sections: `[scenario]`, `[channel]`, `[rate_table]`, `[dtd3]`, `[dqn]`,
//! `[sweep]`. Every field is optional and falls back to the library
//! defaults; unknown keys are hard errors. Numeric fields accept either a
//! bare number (SI base units) or a suffixed string like `"10GHz"`,
//! `"500mW"`, `"4Mbit"`, `"900Megacycles"`, `"13.6us"`.

use anyhow::{anyhow, bail, Context, Result};
use mecax_core::baselines::{DqnHyperparams, PolicyKind};
use mecax_core::channel::{ChannelParams, RateTable};
use mecax_core::dtd3::Dtd3Hyperparams;
use mecax_core::env::Scenario;
use mecax_core::tasking::ScenarioConfig;
use serde::Deserialize;
use std::path::Path;
use std::str::FromStr;

/// Suffix table, longest match first. Values are multipliers to SI base
/// units (Hz, W, bit, cycles, s).
const UNITS: &[(&str, f64)] = &[
    ("Gigacycles", 1e9),
    ("Megacycles", 1e6),
    ("kilocycles", 1e3),
    ("cycles", 1.0),
    ("Gbits", 1e9),
    ("Mbits", 1e6),
    ("kbits", 1e3),
    ("Gbit", 1e9),
    ("Mbit", 1e6),
    ("kbit", 1e3),
    ("bits", 1.0),
    ("bit", 1.0),
    ("GHz", 1e9),
    ("MHz", 1e6),
    ("kHz", 1e3),
    ("Hz", 1.0),
    ("mW", 1e-3),
    ("uW", 1e-6),
    ("W", 1.0),
    ("ns", 1e-9),
    ("us", 1e-6),
    ("ms", 1e-3),
    ("s", 1.0),
    ("m", 1.0),
];

/// Parse `"10GHz"`-style text into an SI base-unit value.
pub fn parse_quantity(text: &str) -> Result<f64> {
    let trimmed = text.trim();
    for (suffix, mult) in UNITS {
        if let Some(number) = trimmed.strip_suffix(suffix) {
            let number = number.trim();
            if number.is_empty() {
                bail!("quantity '{text}' has no numeric part");
            }
            let value: f64 = number
                .parse()
                .map_err(|_| anyhow!("cannot parse number in quantity '{text}'"))?;
            return Ok(value * mult);
        }
    }
    trimmed
        .parse()
        .map_err(|_| anyhow!("cannot parse quantity '{text}' (unknown unit suffix)"))
}

/// A number or a unit-suffixed string.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Number(f64),
    Text(String),
}

impl Quantity {
    pub fn value(&self) -> Result<f64> {
        match self {
            Quantity::Number(v) => Ok(*v),
            Quantity::Text(s) => parse_quantity(s),
        }
    }
}

fn range(q: &Option<[Quantity; 2]>, fallback: (f64, f64)) -> Result<(f64, f64)> {
    match q {
        Some([lo, hi]) => Ok((lo.value()?, hi.value()?)),
        None => Ok(fallback),
    }
}

macro_rules! merge {
    ($raw:expr, $dst:expr) => {
        if let Some(v) = &$raw {
            $dst = v.clone();
        }
    };
}

macro_rules! merge_q {
    ($raw:expr, $dst:expr) => {
        if let Some(v) = &$raw {
            $dst = v.value()?;
        }
    };
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    n_compute: Option<usize>,
    n_comm: Option<usize>,
    f_local: Option<Quantity>,
    f_mec_total: Option<Quantity>,
    bandwidth_units: Option<u32>,
    tx_power: Option<Quantity>,
    lambda_weight: Option<f64>,
    cell_radius: Option<Quantity>,
    compute_data_range: Option<[Quantity; 2]>,
    compute_cycles_range: Option<[Quantity; 2]>,
    comm_data_range: Option<[Quantity; 2]>,
    deadline_factor_range: Option<[f64; 2]>,
    comm_deadline_factor_range: Option<[f64; 2]>,
    priority_weights: Option<[f64; 3]>,
    slots_per_episode: Option<usize>,
    penalize_compute_violation: Option<bool>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    noise_psd: Option<Quantity>,
    ru_unit_bandwidth: Option<Quantity>,
    carrier_frequency: Option<Quantity>,
    pathloss_exponent: Option<f64>,
    pathloss_ref_db: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRateTable {
    snr_thresholds_db: Option<[f64; 12]>,
    data_subcarriers: Option<[u32; 6]>,
    bits_per_symbol_coded: Option<[f64; 12]>,
    symbol_duration: Option<Quantity>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDtd3 {
    gamma: Option<f64>,
    soft_update_rate: Option<f64>,
    policy_delay: Option<usize>,
    eta: Option<f64>,
    batch_size: Option<usize>,
    buffer_capacity: Option<usize>,
    lr_policy: Option<f64>,
    lr_critic: Option<f64>,
    exploration_noise_start: Option<f64>,
    exploration_noise_end: Option<f64>,
    episodes: Option<usize>,
    k_steps: Option<usize>,
    beta_min: Option<f64>,
    beta_max: Option<f64>,
    hidden: Option<Vec<usize>>,
    k_embed_dim: Option<usize>,
    warmup_steps: Option<usize>,
    literal_critic_target: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDqn {
    gamma: Option<f64>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    buffer_capacity: Option<usize>,
    epsilon_start: Option<f64>,
    epsilon_end: Option<f64>,
    epsilon_decay_fraction: Option<f64>,
    target_sync_interval: Option<u64>,
    episodes: Option<usize>,
    hidden: Option<Vec<usize>>,
    warmup_steps: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    swept_parameter: Option<String>,
    values: Option<Vec<Quantity>>,
    policies: Option<Vec<String>>,
    seeds: Option<Vec<u64>>,
    eval_slots: Option<usize>,
    episodes: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<RawScenario>,
    channel: Option<RawChannel>,
    rate_table: Option<RawRateTable>,
    dtd3: Option<RawDtd3>,
    dqn: Option<RawDqn>,
    sweep: Option<RawSweep>,
}

/// Which scenario knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweptParam {
    NCompute,
    FMecTotal,
}

impl SweptParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweptParam::NCompute => "n_compute",
            SweptParam::FMecTotal => "f_mec_total",
        }
    }
}

impl FromStr for SweptParam {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_compute" => Ok(SweptParam::NCompute),
            "f_mec_total" => Ok(SweptParam::FMecTotal),
            other => bail!("unknown swept_parameter '{other}' (expected n_compute|f_mec_total)"),
        }
    }
}

/// The two default experiment grids.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub swept: SweptParam,
    pub values: Vec<f64>,
    pub policies: Vec<PolicyKind>,
    pub seeds: Vec<u64>,
    pub eval_slots: usize,
    /// Training budget for learned policies when the sweep trains missing
    /// checkpoints.
    pub episodes: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            swept: SweptParam::NCompute,
            values: vec![2.0, 4.0, 6.0, 8.0, 10.0],
            policies: PolicyKind::ALL.to_vec(),
            seeds: vec![1, 2, 3],
            eval_slots: 1000,
            episodes: 300,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.policies.is_empty() || self.seeds.is_empty() {
            bail!("sweep needs nonempty values, policies and seeds");
        }
        if self.eval_slots == 0 {
            bail!("eval_slots must be positive");
        }
        Ok(())
    }
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub scenario: Scenario<f64>,
    pub dtd3: Dtd3Hyperparams<f64>,
    pub dqn: DqnHyperparams<f64>,
    pub sweep: SweepSpec,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            scenario: Scenario::default(),
            dtd3: Dtd3Hyperparams::default(),
            dqn: DqnHyperparams::default(),
            sweep: SweepSpec::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Config::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn from_toml(text: &str) -> Result<Config> {
        let raw: RawConfig = toml::from_str(text)?;
        let mut config = Config::default();

        if let Some(s) = &raw.scenario {
            let cfg: &mut ScenarioConfig<f64> = &mut config.scenario.cfg;
            merge!(s.n_compute, cfg.n_compute);
            merge!(s.n_comm, cfg.n_comm);
            merge_q!(s.f_local, cfg.f_local);
            merge_q!(s.f_mec_total, cfg.f_mec_total);
            merge!(s.bandwidth_units, cfg.bandwidth_units);
            merge_q!(s.tx_power, cfg.tx_power);
            merge!(s.lambda_weight, cfg.lambda_weight);
            merge_q!(s.cell_radius, cfg.cell_radius);
            cfg.compute_data_range = range(&s.compute_data_range, cfg.compute_data_range)?;
            cfg.compute_cycles_range = range(&s.compute_cycles_range, cfg.compute_cycles_range)?;
            cfg.comm_data_range = range(&s.comm_data_range, cfg.comm_data_range)?;
            if let Some([lo, hi]) = s.deadline_factor_range {
                cfg.deadline_factor_range = (lo, hi);
            }
            if let Some([lo, hi]) = s.comm_deadline_factor_range {
                cfg.comm_deadline_factor_range = (lo, hi);
            }
            merge!(s.priority_weights, cfg.priority_weights);
            merge!(s.slots_per_episode, cfg.slots_per_episode);
            merge!(s.penalize_compute_violation, cfg.penalize_compute_violation);
            merge!(s.seed, cfg.seed);
        }

        if let Some(c) = &raw.channel {
            let ch: &mut ChannelParams<f64> = &mut config.scenario.channel;
            merge_q!(c.noise_psd, ch.noise_psd);
            merge_q!(c.ru_unit_bandwidth, ch.ru_unit_bandwidth);
            merge_q!(c.carrier_frequency, ch.carrier_frequency);
            merge!(c.pathloss_exponent, ch.pathloss_exponent);
            merge!(c.pathloss_ref_db, ch.pathloss_ref_db);
        }

        if let Some(rt) = &raw.rate_table {
            let d = RateTable::<f64>::default();
            let thresholds = rt.snr_thresholds_db.unwrap_or([
                2.0, 5.0, 9.0, 11.0, 15.0, 18.0, 20.0, 25.0, 29.0, 31.0, 34.0, 37.0,
            ]);
            let subcarriers = rt.data_subcarriers.unwrap_or(d.data_subcarriers);
            let mut bits = [0.0; 12];
            for (dst, &b) in bits.iter_mut().zip(d.bits_per_symbol_coded.iter()) {
                *dst = b;
            }
            if let Some(b) = rt.bits_per_symbol_coded {
                bits = b;
            }
            let symbol = match &rt.symbol_duration {
                Some(q) => q.value()?,
                None => 13.6e-6,
            };
            config.scenario.rate_table =
                RateTable::from_db_thresholds(thresholds, subcarriers, bits, symbol)
                    .map_err(|e| anyhow!("{e}"))?;
        }

        if let Some(d) = &raw.dtd3 {
            let hp = &mut config.dtd3;
            merge!(d.gamma, hp.gamma);
            merge!(d.soft_update_rate, hp.soft_update_rate);
            merge!(d.policy_delay, hp.policy_delay);
            merge!(d.eta, hp.eta);
            merge!(d.batch_size, hp.batch_size);
            merge!(d.buffer_capacity, hp.buffer_capacity);
            merge!(d.lr_policy, hp.lr_policy);
            merge!(d.lr_critic, hp.lr_critic);
            merge!(d.exploration_noise_start, hp.exploration_noise_start);
            merge!(d.exploration_noise_end, hp.exploration_noise_end);
            merge!(d.episodes, hp.episodes);
            merge!(d.k_steps, hp.k_steps);
            merge!(d.beta_min, hp.beta_min);
            merge!(d.beta_max, hp.beta_max);
            merge!(d.hidden, hp.hidden);
            merge!(d.k_embed_dim, hp.k_embed_dim);
            merge!(d.warmup_steps, hp.warmup_steps);
            merge!(d.literal_critic_target, hp.literal_critic_target);
        }

        if let Some(d) = &raw.dqn {
            let hp = &mut config.dqn;
            merge!(d.gamma, hp.gamma);
            merge!(d.lr, hp.lr);
            merge!(d.batch_size, hp.batch_size);
            merge!(d.buffer_capacity, hp.buffer_capacity);
            merge!(d.epsilon_start, hp.epsilon_start);
            merge!(d.epsilon_end, hp.epsilon_end);
            merge!(d.epsilon_decay_fraction, hp.epsilon_decay_fraction);
            merge!(d.target_sync_interval, hp.target_sync_interval);
            merge!(d.episodes, hp.episodes);
            merge!(d.hidden, hp.hidden);
            merge!(d.warmup_steps, hp.warmup_steps);
        }

        if let Some(s) = &raw.sweep {
            let sw = &mut config.sweep;
            if let Some(p) = &s.swept_parameter {
                sw.swept = p.parse()?;
            }
            if let Some(values) = &s.values {
                sw.values = values.iter().map(|q| q.value()).collect::<Result<_>>()?;
            }
            if let Some(policies) = &s.policies {
                sw.policies = policies
                    .iter()
                    .map(|p| p.parse::<PolicyKind>().map_err(|e| anyhow!("{e}")))
                    .collect::<Result<_>>()?;
            }
            merge!(s.seeds, sw.seeds);
            merge!(s.eval_slots, sw.eval_slots);
            merge!(s.episodes, sw.episodes);
        }

        config.scenario.validate().map_err(|e| anyhow!("{e}"))?;
        config.dtd3.validate().map_err(|e| anyhow!("{e}"))?;
        config.dqn.validate().map_err(|e| anyhow!("{e}"))?;
        config.sweep.validate()?;
        Ok(config)
    }

    /// Copy of the scenario with the swept parameter applied.
    pub fn scenario_with(&self, swept: SweptParam, value: f64) -> Scenario<f64> {
        let mut scenario = self.scenario.clone();
        match swept {
            SweptParam::NCompute => scenario.cfg.n_compute = value as usize,
            SweptParam::FMecTotal => scenario.cfg.f_mec_total = value,
        }
        scenario
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantities_parse_with_units() {
        assert_eq!(parse_quantity("10GHz").unwrap(), 1e10);
        assert_eq!(parse_quantity("500mW").unwrap(), 0.5);
        assert_eq!(parse_quantity("4Mbit").unwrap(), 4e6);
        assert_eq!(parse_quantity("2.4Mbits").unwrap(), 2.4e6);
        assert_eq!(parse_quantity("900Megacycles").unwrap(), 9e8);
        assert_eq!(parse_quantity("13.6us").unwrap(), 13.6e-6);
        assert_eq!(parse_quantity("2.03125MHz").unwrap(), 2.03125e6);
        assert_eq!(parse_quantity("3.98e-21").unwrap(), 3.98e-21);
        assert_eq!(parse_quantity(" 20 m ").unwrap(), 20.0);
        assert!(parse_quantity("10 parsecs").is_err());
        assert!(parse_quantity("GHz").is_err());
    }

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = Config::from_toml("").unwrap();
        assert_eq!(cfg.scenario.cfg.n_compute, 5);
        assert_eq!(cfg.scenario.cfg.f_mec_total, 1e10);
        assert_eq!(cfg.sweep.values, vec![2.0, 4.0, 6.0, 8.0, 10.0]);
    }

    #[test]
    fn sections_merge_over_defaults() {
        let cfg = Config::from_toml(
            r#"
[scenario]
n_compute = 7
f_mec_total = "4GHz"
tx_power = "500mW"
compute_data_range = ["2.4Mbit", "4Mbit"]

[dtd3]
episodes = 42
hidden = [32, 32]

[sweep]
swept_parameter = "f_mec_total"
values = ["2GHz", "4GHz"]
policies = ["local", "dtd3"]
seeds = [9]
"#,
        )
        .unwrap();
        assert_eq!(cfg.scenario.cfg.n_compute, 7);
        assert_eq!(cfg.scenario.cfg.f_mec_total, 4e9);
        assert_eq!(cfg.scenario.cfg.tx_power, 0.5);
        assert_eq!(cfg.dtd3.episodes, 42);
        assert_eq!(cfg.dtd3.hidden, vec![32, 32]);
        assert_eq!(cfg.sweep.swept, SweptParam::FMecTotal);
        assert_eq!(cfg.sweep.values, vec![2e9, 4e9]);
        assert_eq!(cfg.sweep.policies, vec![PolicyKind::Local, PolicyKind::Dtd3]);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = Config::from_toml("[scenario]\nn_compute = 3\nwarp_factor = 9\n");
        assert!(err.is_err());
        let msg = format!("{:#}", err.err().unwrap());
        assert!(msg.contains("warp_factor"), "{msg}");
        assert!(Config::from_toml("[typo_section]\n").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Config::from_toml("[scenario]\nlambda_weight = 1.7\n").is_err());
        assert!(Config::from_toml("[sweep]\npolicies = [\"sac\"]\n").is_err());
        assert!(Config::from_toml("[sweep]\nswept_parameter = \"n_comm\"\n").is_err());
    }

    #[test]
    fn swept_scenario_applies_the_value() {
        let cfg = Config::from_toml("").unwrap();
        let s = cfg.scenario_with(SweptParam::NCompute, 8.0);
        assert_eq!(s.cfg.n_compute, 8);
        let s = cfg.scenario_with(SweptParam::FMecTotal, 2e9);
        assert_eq!(s.cfg.f_mec_total, 2e9);
    }
}
