//! `mecax` — experiment harness for the 802.11ax MEC offloading simulator.
//!
//! Verbs: `train`, `eval`, `sweep`, `convergence`, `plot`. All take
//! `--config`, `--seed`, `--out`; outputs are CSV tables, SVG plots, and
//! JSON checkpoints under the output directory.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use mecax_cli::config::Config;
use mecax_cli::experiment::{
    self, evaluate, mix_seed, rollout_policy, run_convergence, run_sweep, train_learned, CurveRow,
    MetricsRecord,
};
use mecax_cli::plot;
use mecax_core::baselines::PolicyKind;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "mecax",
    about = "Single-AP 802.11ax MEC cell: offloading policies, RU allocation, experiment sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a learned policy (dtd3 or dqn) and save a checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        policy: String,
        /// Checkpoint destination (default: OUT/checkpoints/POLICY-seedSEED.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate one policy on the configured scenario.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Policy to run (local|full|random|dqn|dtd3).
        #[arg(long)]
        policy: String,
        /// Checkpoint to load for dqn/dtd3.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also write the raw per-slot log.
        #[arg(long)]
        verbose: bool,
    },
    /// Run the configured sweep grid and write sweep.csv plus plots.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Train any missing learned-policy checkpoints first.
        #[arg(long)]
        train_missing: bool,
        /// Keep raw per-slot logs next to the CSV.
        #[arg(long)]
        verbose: bool,
    },
    /// Train dtd3/dqn from scratch per seed and record reward curves.
    Convergence {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-render plots from the CSV files in the output directory.
    Plot {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            seed,
            out,
            policy,
            checkpoint,
        } => {
            let cfg = load_config(&config)?;
            let kind: PolicyKind = policy
                .parse()
                .map_err(|e| anyhow!("{e}"))?;
            if !kind.is_learned() {
                bail!("--policy must be dtd3 or dqn for training, got '{policy}'");
            }
            let episodes = match kind {
                PolicyKind::Dtd3 => cfg.dtd3.episodes,
                _ => cfg.dqn.episodes,
            };
            let (ck, curve) = train_learned(
                kind,
                &cfg,
                &cfg.scenario,
                episodes,
                mix_seed(&[seed, 101]),
                mix_seed(&[seed, 102]),
            )?;
            let path = checkpoint
                .unwrap_or_else(|| out.join("checkpoints").join(format!("{kind}-seed{seed}.json")));
            ck.save(&path).map_err(|e| anyhow!("{e}"))?;
            let rows: Vec<CurveRow> = curve
                .iter()
                .enumerate()
                .map(|(episode, &reward)| CurveRow {
                    policy: kind.to_string(),
                    seed,
                    episode,
                    reward,
                })
                .collect();
            experiment::write_convergence_csv(
                &out.join(format!("train-{kind}-seed{seed}.csv")),
                &rows,
            )?;
            println!(
                "trained {kind} for {} episodes; checkpoint at {}",
                curve.len(),
                path.display()
            );
            Ok(())
        }

        Command::Eval {
            config,
            seed,
            out,
            policy,
            checkpoint,
            verbose,
        } => {
            let cfg = load_config(&config)?;
            let kind: PolicyKind = policy.parse().map_err(|e| anyhow!("{e}"))?;
            let mut rollout =
                rollout_policy(kind, checkpoint.as_deref(), mix_seed(&[seed, 201]))?;
            let stats = evaluate(
                &cfg.scenario,
                &mut rollout,
                cfg.sweep.eval_slots,
                mix_seed(&[seed, 202]),
            )?;
            let record = MetricsRecord {
                policy: kind.to_string(),
                swept_param: "none".into(),
                swept_value: 0.0,
                seed,
                mean_total_cost: stats.mean_total_cost,
                qos: stats.qos,
                comm_success: stats.comm_success,
                mean_reward: stats.mean_reward,
            };
            experiment::write_sweep_csv(&out.join(format!("eval-{kind}-seed{seed}.csv")), &[record])?;
            if verbose {
                experiment::write_slot_log(
                    &out.join(format!("slots-eval-{kind}-seed{seed}.csv")),
                    &stats.slots,
                )?;
            }
            println!(
                "{kind}: mean_total_cost={} qos={} comm_success={} mean_reward={}",
                stats.mean_total_cost, stats.qos, stats.comm_success, stats.mean_reward
            );
            Ok(())
        }

        Command::Sweep {
            config,
            seed,
            out,
            train_missing,
            verbose,
        } => {
            let cfg = load_config(&config)?;
            let records = run_sweep(&cfg, &out, seed, train_missing, verbose)?;
            let csv_path = out.join("sweep.csv");
            experiment::write_sweep_csv(&csv_path, &records)?;
            emit_sweep_plots(&out, &records)?;
            println!("wrote {} records to {}", records.len(), csv_path.display());
            Ok(())
        }

        Command::Convergence { config, seed, out } => {
            let cfg = load_config(&config)?;
            let rows = run_convergence(&cfg, &out, seed)?;
            let csv_path = out.join("convergence.csv");
            experiment::write_convergence_csv(&csv_path, &rows)?;
            emit_convergence_plot(&out, &rows)?;
            println!("wrote {} curve points to {}", rows.len(), csv_path.display());
            Ok(())
        }

        Command::Plot { config: _, seed: _, out } => {
            let mut did_any = false;
            let sweep_path = out.join("sweep.csv");
            if sweep_path.exists() {
                let records =
                    experiment::parse_sweep_csv(&std::fs::read_to_string(&sweep_path)?)?;
                emit_sweep_plots(&out, &records)?;
                did_any = true;
            }
            let conv_path = out.join("convergence.csv");
            if conv_path.exists() {
                let rows =
                    experiment::parse_convergence_csv(&std::fs::read_to_string(&conv_path)?)?;
                emit_convergence_plot(&out, &rows)?;
                did_any = true;
            }
            if !did_any {
                bail!(
                    "nothing to plot: no sweep.csv or convergence.csv under {}",
                    out.display()
                );
            }
            println!("plots written under {}", out.display());
            Ok(())
        }
    }
}

/// One plot per metric: mean over seeds of each policy across the swept
/// values.
fn emit_sweep_plots(out: &Path, records: &[MetricsRecord]) -> Result<()> {
    if records.is_empty() {
        return Ok(());
    }
    let swept = records[0].swept_param.clone();
    let metrics: [(&str, fn(&MetricsRecord) -> f64, &str); 4] = [
        ("total_cost", |r| r.mean_total_cost, "mean weighted cost"),
        ("qos", |r| r.qos, "QoS ratio"),
        ("comm_success", |r| r.comm_success, "communication success rate"),
        ("mean_reward", |r| r.mean_reward, "mean reward"),
    ];
    let mut policies: Vec<String> = records.iter().map(|r| r.policy.clone()).collect();
    policies.sort();
    policies.dedup();
    let mut values: Vec<f64> = records.iter().map(|r| r.swept_value).collect();
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    values.dedup();

    for (name, get, y_label) in metrics {
        let mut series = Vec::new();
        for policy in &policies {
            let mut points = Vec::new();
            for &value in &values {
                let cell: Vec<f64> = records
                    .iter()
                    .filter(|r| &r.policy == policy && r.swept_value == value)
                    .map(get)
                    .collect();
                if !cell.is_empty() {
                    points.push((value, cell.iter().sum::<f64>() / cell.len() as f64));
                }
            }
            series.push(plot::Series {
                label: policy.clone(),
                points,
            });
        }
        plot::line_chart(
            &out.join(format!("sweep_{name}.svg")),
            &format!("{y_label} vs {swept}"),
            &swept,
            y_label,
            &series,
        )?;
    }
    Ok(())
}

fn emit_convergence_plot(out: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut keys: Vec<(String, u64)> = rows.iter().map(|r| (r.policy.clone(), r.seed)).collect();
    keys.sort();
    keys.dedup();
    let mut series = Vec::new();
    for (policy, seed) in keys {
        let points: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.policy == policy && r.seed == seed)
            .map(|r| (r.episode as f64, r.reward))
            .collect();
        series.push(plot::Series {
            label: format!("{policy} seed {seed}"),
            points,
        });
    }
    plot::line_chart(
        &out.join("convergence.svg"),
        "episode reward during training",
        "episode",
        "mean slot reward",
        &series,
    )
    .context("rendering convergence plot")
}
