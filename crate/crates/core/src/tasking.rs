//! Per-slot task generation and the closed-form latency/energy cost model.
//!
//! Units are strict SI throughout: bits, CPU cycles, seconds, joules, watts.
//! Config front-ends convert suffixed quantities ("4Mbit", "10GHz") before
//! anything reaches this module.

use crate::error::{Error, Result};
use crate::real::Real;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Effective switched-capacitance constant of the local-energy model,
/// E = 1e-27 * f^2 * c.
pub const LOCAL_ENERGY_COEFF: f64 = 1e-27;

/// One computing-intensive task: (d_m, c_m, tau_m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeTask<T> {
    pub data_bits: T,
    pub cpu_cycles: T,
    pub deadline: T,
}

/// One uplink communication task: (d_n, tau_n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommTask<T> {
    pub data_bits: T,
    pub deadline: T,
}

/// A (delay, energy) pair for one station's task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostPair<T> {
    pub delay: T,
    pub energy: T,
}

impl<T: Real> CostPair<T> {
    pub fn zero() -> Self {
        CostPair {
            delay: T::zero(),
            energy: T::zero(),
        }
    }

    /// lambda-weighted scalar cost of this pair.
    pub fn weighted(&self, lambda: T) -> T {
        lambda * self.delay + (T::one() - lambda) * self.energy
    }
}

/// Scenario-level knobs: station counts, resource budgets, task
/// distributions, and the objective weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig<T> {
    /// Number of computing stations (M).
    pub n_compute: usize,
    /// Number of communication stations (N).
    pub n_comm: usize,
    /// Station CPU speed, cycles/s.
    pub f_local: T,
    /// Total MEC CPU budget F^max, cycles/s.
    pub f_mec_total: T,
    /// Spectrum budget in 26-tone units (36 for an 80 MHz channel).
    pub bandwidth_units: u32,
    /// Uplink transmit power, watts.
    pub tx_power: T,
    /// Objective weight lambda in [0, 1]: cost = lambda*T + (1-lambda)*E.
    pub lambda_weight: T,
    /// Cell radius, meters; stations are placed uniformly in this disc.
    pub cell_radius: T,
    /// Compute-task data size range, bits.
    pub compute_data_range: (T, T),
    /// Compute-task CPU demand range, cycles.
    pub compute_cycles_range: (T, T),
    /// Communication-task data size range, bits.
    pub comm_data_range: (T, T),
    /// Compute deadline factor u: tau_m = u * c_m / f_local.
    pub deadline_factor_range: (T, T),
    /// Comm deadline factor psi: tau_n = psi * d_n / V_ref, where V_ref is
    /// the 106-tone MCS 7 rate. See [`comm_reference_rate`].
    pub comm_deadline_factor_range: (T, T),
    /// Weights (w1, w2, w3) of the three priority fractions; must sum to 1.
    pub priority_weights: [T; 3],
    /// Slots per episode.
    pub slots_per_episode: usize,
    /// Also return reward -1 when a compute deadline is missed (off by
    /// default; the reward penalizes only communication violations).
    pub penalize_compute_violation: bool,
    /// Base seed recorded with the scenario.
    pub seed: u64,
}

impl<T: Real> Default for ScenarioConfig<T> {
    fn default() -> Self {
        ScenarioConfig {
            n_compute: 5,
            n_comm: 3,
            f_local: T::of(1e9),
            f_mec_total: T::of(1e10),
            bandwidth_units: 36,
            tx_power: T::of(0.5),
            lambda_weight: T::of(0.8),
            cell_radius: T::of(20.0),
            compute_data_range: (T::of(2.4e6), T::of(4.0e6)),
            compute_cycles_range: (T::of(9.0e8), T::of(1.1e9)),
            comm_data_range: (T::of(1.0e7), T::of(2.0e7)),
            deadline_factor_range: (T::of(0.8), T::of(1.2)),
            comm_deadline_factor_range: (T::of(0.3), T::of(0.9)),
            priority_weights: [T::of(1.0 / 3.0); 3],
            slots_per_episode: 100,
            penalize_compute_violation: false,
            seed: 0,
        }
    }
}

impl<T: Real> ScenarioConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n_compute + self.n_comm == 0 {
            return Err(Error::Config("need at least one station".into()));
        }
        if self.n_comm as u32 > self.bandwidth_units {
            return Err(Error::Config(format!(
                "{} communication STAs cannot fit a {}-unit RU budget",
                self.n_comm, self.bandwidth_units
            )));
        }
        if self.lambda_weight < T::zero() || self.lambda_weight > T::one() {
            return Err(Error::Config("lambda_weight must be in [0, 1]".into()));
        }
        for (name, v) in [
            ("f_local", self.f_local),
            ("f_mec_total", self.f_mec_total),
            ("tx_power", self.tx_power),
            ("cell_radius", self.cell_radius),
        ] {
            if v <= T::zero() {
                return Err(Error::Config(format!("{name} must be > 0")));
            }
        }
        if self.bandwidth_units == 0 {
            return Err(Error::Config("bandwidth_units must be > 0".into()));
        }
        for (name, (lo, hi)) in [
            ("compute_data_range", self.compute_data_range),
            ("compute_cycles_range", self.compute_cycles_range),
            ("comm_data_range", self.comm_data_range),
            ("deadline_factor_range", self.deadline_factor_range),
            ("comm_deadline_factor_range", self.comm_deadline_factor_range),
        ] {
            if lo <= T::zero() || hi < lo {
                return Err(Error::Config(format!(
                    "{name} must satisfy 0 < lo <= hi"
                )));
            }
        }
        let wsum: T = self.priority_weights.iter().copied().sum();
        if (wsum - T::one()).abs() > T::of(1e-9) || self.priority_weights.iter().any(|w| *w < T::zero()) {
            return Err(Error::Config(
                "priority_weights must be nonnegative and sum to 1".into(),
            ));
        }
        if self.slots_per_episode == 0 {
            return Err(Error::Config("slots_per_episode must be > 0".into()));
        }
        Ok(())
    }
}

/// Reference rate used to scale communication deadlines: a 106-tone RU at
/// MCS 7 (37.5 Mbit/s under the default table).
pub fn comm_reference_rate<T: Real>(table: &crate::channel::RateTable<T>) -> T {
    crate::channel::rate(
        crate::channel::RuSize::new(4).expect("106-tone is legal"),
        Some(crate::channel::McsIndex::new(7).expect("MCS 7 is legal")),
        table,
    )
}

/// Draw one slot's tasks. Sampling order is part of the determinism
/// contract: per compute STA `d, c, u`, then per comm STA `d, psi`.
pub fn generate_tasks<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &ScenarioConfig<T>,
    comm_ref_rate: T,
) -> (Vec<ComputeTask<T>>, Vec<CommTask<T>>) {
    let compute = (0..cfg.n_compute)
        .map(|_| {
            let d = T::uniform(rng, cfg.compute_data_range.0, cfg.compute_data_range.1);
            let c = T::uniform(rng, cfg.compute_cycles_range.0, cfg.compute_cycles_range.1);
            let u = T::uniform(rng, cfg.deadline_factor_range.0, cfg.deadline_factor_range.1);
            ComputeTask {
                data_bits: d,
                cpu_cycles: c,
                deadline: u * c / cfg.f_local,
            }
        })
        .collect();
    let comm = (0..cfg.n_comm)
        .map(|_| {
            let d = T::uniform(rng, cfg.comm_data_range.0, cfg.comm_data_range.1);
            let psi = T::uniform(
                rng,
                cfg.comm_deadline_factor_range.0,
                cfg.comm_deadline_factor_range.1,
            );
            CommTask {
                data_bits: d,
                deadline: psi * d / comm_ref_rate,
            }
        })
        .collect();
    (compute, comm)
}

/// Delay and energy of executing a compute task on the station itself.
pub fn local_cost<T: Real>(task: &ComputeTask<T>, f_local: T) -> CostPair<T> {
    CostPair {
        delay: task.cpu_cycles / f_local,
        energy: T::of(LOCAL_ENERGY_COEFF) * f_local * f_local * task.cpu_cycles,
    }
}

/// Delay and energy of offloading a compute task: upload at `rate`, execute
/// on an MEC share of `f_alloc`. `None` when the link is unreachable
/// (rate 0), which downstream treats as a deadline violation.
pub fn offload_cost<T: Real>(
    task: &ComputeTask<T>,
    f_alloc: T,
    rate: T,
    tx_power: T,
) -> Option<CostPair<T>> {
    if rate <= T::zero() {
        return None;
    }
    let trans = task.data_bits / rate;
    Some(CostPair {
        delay: task.cpu_cycles / f_alloc + trans,
        energy: tx_power * trans,
    })
}

/// Delay and energy of an uplink communication task.
pub fn comm_cost<T: Real>(task: &CommTask<T>, rate: T, tx_power: T) -> Option<CostPair<T>> {
    if rate <= T::zero() {
        return None;
    }
    let trans = task.data_bits / rate;
    Some(CostPair {
        delay: trans,
        energy: tx_power * trans,
    })
}

/// System totals for one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalCost<T> {
    pub delay: T,
    pub energy: T,
    pub weighted: T,
}

/// Sum per-station costs under the offloading decisions: station m
/// contributes its offload pair when `decisions[m]` and its local pair
/// otherwise; communication pairs always contribute. `offload[m]` is ignored
/// for stations computing locally.
pub fn total_cost<T: Real>(
    decisions: &[bool],
    local: &[CostPair<T>],
    offload: &[CostPair<T>],
    comm: &[CostPair<T>],
    lambda: T,
) -> TotalCost<T> {
    assert_eq!(decisions.len(), local.len());
    assert_eq!(decisions.len(), offload.len());
    let mut delay = T::zero();
    let mut energy = T::zero();
    for (m, &off) in decisions.iter().enumerate() {
        let pair = if off { &offload[m] } else { &local[m] };
        delay += pair.delay;
        energy += pair.energy;
    }
    for pair in comm {
        delay += pair.delay;
        energy += pair.energy;
    }
    TotalCost {
        delay,
        energy,
        weighted: lambda * delay + (T::one() - lambda) * energy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::RateTable;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn local_cost_unit_case() {
        let t = ComputeTask::<f64> {
            data_bits: 3.2e6,
            cpu_cycles: 1e9,
            deadline: 1.0,
        };
        let c = local_cost(&t, 1e9);
        assert_eq!(c.delay, 1.0);
        assert_eq!(c.energy, 1.0);
    }

    #[test]
    fn local_cost_linear_in_cycles() {
        let t = ComputeTask::<f64> {
            data_bits: 3.2e6,
            cpu_cycles: 9e8,
            deadline: 1.0,
        };
        let c = local_cost(&t, 1e9);
        assert_eq!(c.delay, 0.9);
        assert_eq!(c.energy, 0.9);
    }

    #[test]
    fn offload_cost_substitution() {
        let t = ComputeTask::<f64> {
            data_bits: 3.2e6,
            cpu_cycles: 1e9,
            deadline: 1.0,
        };
        let c = offload_cost(&t, 1e10, 1e8, 0.5).unwrap();
        assert!((c.delay - 0.132).abs() < 1e-15);
        assert!((c.energy - 0.016).abs() < 1e-15);
    }

    #[test]
    fn offload_energy_ignores_mec_share() {
        let t = ComputeTask::<f64> {
            data_bits: 3.2e6,
            cpu_cycles: 1e9,
            deadline: 1.0,
        };
        let a = offload_cost(&t, 1e9, 1e8, 0.5).unwrap();
        let b = offload_cost(&t, 7e9, 1e8, 0.5).unwrap();
        assert_eq!(a.energy, b.energy);
        // f -> infinity limit: only the transmission leg remains
        let c = offload_cost(&t, f64::INFINITY, 1e8, 0.5).unwrap();
        assert_eq!(c.delay, 3.2e6 / 1e8);
    }

    #[test]
    fn offload_unreachable_is_none() {
        let t = ComputeTask::<f64> {
            data_bits: 3.2e6,
            cpu_cycles: 1e9,
            deadline: 1.0,
        };
        assert_eq!(offload_cost(&t, 1e10, 0.0, 0.5), None);
    }

    #[test]
    fn comm_cost_examples() {
        let t = CommTask::<f64> {
            data_bits: 1e7,
            deadline: 1.0,
        };
        let c = comm_cost(&t, 1e8, 0.5).unwrap();
        assert_eq!(c.delay, 0.1);
        assert_eq!(c.energy, 0.05);
        let t2 = CommTask::<f64> {
            data_bits: 2e7,
            deadline: 1.0,
        };
        let c2 = comm_cost(&t2, 5e7, 0.5).unwrap();
        assert_eq!(c2.delay, 0.4);
        assert_eq!(c2.energy, 0.2);
        // energy = p * delay always
        assert_eq!(c2.energy, 0.5 * c2.delay);
        assert_eq!(comm_cost(&t, 0.0, 0.5), None);
    }

    #[test]
    fn delay_scales_inversely_with_rate() {
        let t = CommTask::<f64> {
            data_bits: 1.7e7,
            deadline: 1.0,
        };
        let slow = comm_cost(&t, 4e7, 0.5).unwrap();
        let fast = comm_cost(&t, 8e7, 0.5).unwrap();
        assert_eq!(fast.delay, slow.delay / 2.0);
    }

    #[test]
    fn total_cost_all_local_collapses() {
        let local = vec![
            CostPair::<f64> { delay: 1.0, energy: 1.0 },
            CostPair::<f64> { delay: 0.9, energy: 0.9 },
        ];
        let offload = vec![CostPair::zero(); 2];
        let tot = total_cost(&[false, false], &local, &offload, &[], 0.8);
        assert_eq!(tot.delay, 1.9);
        assert_eq!(tot.energy, 1.9);
        assert!((tot.weighted - 1.9).abs() < 1e-15);
    }

    #[test]
    fn total_cost_single_local_unit() {
        let local = vec![CostPair::<f64> { delay: 1.0, energy: 1.0 }];
        let tot = total_cost(&[false], &local, &[CostPair::zero()], &[], 0.8);
        assert_eq!(tot.weighted, 1.0);
    }

    #[test]
    fn total_cost_mixed_hand_summed() {
        // STA1 local (c=1e9, f=1e9); STA2 offloaded (c=1.1e9, f_alloc=1e10,
        // d=4e6, rate=5e7); one comm STA (d=1.5e7, rate=7.5e7); lambda=0.8.
        let t1 = ComputeTask::<f64> { data_bits: 2.4e6, cpu_cycles: 1e9, deadline: 1.0 };
        let t2 = ComputeTask { data_bits: 4e6, cpu_cycles: 1.1e9, deadline: 1.0 };
        let n1 = CommTask { data_bits: 1.5e7, deadline: 1.0 };
        let local = vec![local_cost(&t1, 1e9), local_cost(&t2, 1e9)];
        let offload = vec![
            CostPair::zero(),
            offload_cost(&t2, 1e10, 5e7, 0.5).unwrap(),
        ];
        let comm = vec![comm_cost(&n1, 7.5e7, 0.5).unwrap()];
        let tot = total_cost(&[false, true], &local, &offload, &comm, 0.8);
        assert!((tot.delay - 1.39).abs() < 1e-12, "T {}", tot.delay);
        assert!((tot.energy - 1.14).abs() < 1e-12, "E {}", tot.energy);
        assert!((tot.weighted - 1.34).abs() < 1e-12, "W {}", tot.weighted);
    }

    #[test]
    fn total_cost_is_additive_per_station() {
        let tasks: Vec<ComputeTask<f64>> = (0..4)
            .map(|i| ComputeTask {
                data_bits: 2.5e6 + i as f64 * 1e5,
                cpu_cycles: 9.2e8 + i as f64 * 3e7,
                deadline: 1.0,
            })
            .collect();
        let decisions = [true, false, true, false];
        let local: Vec<_> = tasks.iter().map(|t| local_cost(t, 1e9)).collect();
        let offload: Vec<_> = tasks
            .iter()
            .map(|t| offload_cost(t, 2e9, 6e7, 0.5).unwrap())
            .collect();
        let batch = total_cost(&decisions, &local, &offload, &[], 0.8);
        let mut sum = 0.0;
        for m in 0..4 {
            let one = total_cost(
                &decisions[m..=m],
                &local[m..=m],
                &offload[m..=m],
                &[],
                0.8,
            );
            sum += one.weighted;
        }
        assert!((batch.weighted - sum).abs() < 1e-12);
    }

    #[test]
    fn generated_tasks_respect_ranges_and_seed() {
        let cfg = ScenarioConfig::<f64>::default();
        let vref = comm_reference_rate(&RateTable::default());
        assert_eq!(vref, 37.5e6);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (a1, b1) = generate_tasks(&mut rng, &cfg, vref);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (a2, b2) = generate_tasks(&mut rng, &cfg, vref);
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert_eq!(a1.len(), 5);
        assert_eq!(b1.len(), 3);
    }

    #[test]
    fn sampler_statistics_match_uniform_law() {
        let cfg = ScenarioConfig::<f64>::default();
        let vref = comm_reference_rate(&RateTable::default());
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mut cycles = Vec::new();
        for _ in 0..2000 {
            let (compute, _) = generate_tasks(&mut rng, &cfg, vref);
            cycles.extend(compute.iter().map(|t| t.cpu_cycles));
        }
        assert!(cycles.len() >= 10_000);
        let min = cycles.iter().copied().fold(f64::INFINITY, f64::min);
        let max = cycles.iter().copied().fold(0.0, f64::max);
        let mean = cycles.iter().sum::<f64>() / cycles.len() as f64;
        assert!(min >= 9e8);
        assert!(max <= 1.1e9);
        assert!((mean - 1e9).abs() / 1e9 < 0.02, "mean {mean}");
    }

    #[test]
    fn compute_deadline_brackets_local_latency() {
        let cfg = ScenarioConfig::<f64>::default();
        let vref = comm_reference_rate(&RateTable::default());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let (compute, _) = generate_tasks(&mut rng, &cfg, vref);
            for t in compute {
                let t_local = t.cpu_cycles / cfg.f_local;
                assert!(t.deadline >= 0.8 * t_local - 1e-12);
                assert!(t.deadline <= 1.2 * t_local + 1e-12);
            }
        }
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = ScenarioConfig::<f64>::default();
        cfg.lambda_weight = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::<f64>::default();
        cfg.n_comm = 40;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::<f64>::default();
        cfg.priority_weights = [0.5, 0.5, 0.5];
        assert!(cfg.validate().is_err());
        assert!(ScenarioConfig::<f64>::default().validate().is_ok());
    }
}
