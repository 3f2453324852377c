//! Joint RU / CPU allocation: task priorities, MEC CPU shares, RU-partition
//! enumeration, per-partition efficiency matrices solved by the Hungarian
//! algorithm, and demotion of low-priority offloads when the transmitting
//! set exceeds the RU budget.
//!
//! Communication stations take precedence throughout: they are never
//! demoted, and partitions whose assignment violates a communication
//! deadline rank strictly below every partition that satisfies them all.

pub mod hungarian;

use crate::channel::{self, ChannelParams, McsIndex, RateTable, RuSize, RU_UNIT_SIZES};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tasking::{CommTask, ComputeTask, ScenarioConfig};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Identity of a transmitting station. Communication stations sort first so
/// map iteration order matches allocation precedence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StaRef {
    Comm(usize),
    Compute(usize),
}

/// Eq-(19)-style priority of one compute task: the weighted sum of its
/// normalized RU demand, CPU demand, and inverse link capability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaPriority<T> {
    pub value: T,
    /// The three weighted fractions the value sums.
    pub components: [T; 3],
    /// False when the station cannot reach even MCS 0 on a 26-tone RU.
    pub feasible: bool,
}

/// A multiset of RU sizes, one per transmitting station, stored in
/// nondecreasing order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RuPartition {
    sizes: Vec<RuSize>,
}

impl RuPartition {
    pub fn new(mut sizes: Vec<RuSize>) -> Self {
        sizes.sort();
        RuPartition { sizes }
    }

    pub fn sizes(&self) -> &[RuSize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn total_units(&self) -> u32 {
        self.sizes.iter().map(|s| s.units()).sum()
    }
}

/// The allocator's output for one slot.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Allocation<T> {
    /// RU assigned to each transmitting station.
    pub ru_assignment: BTreeMap<StaRef, RuSize>,
    /// Achieved PHY rate of each transmitting station (0 when unreachable).
    pub rates: BTreeMap<StaRef, T>,
    /// MEC CPU share per surviving offloading compute station, cycles/s.
    pub cpu_shares: BTreeMap<usize, T>,
    /// Compute stations forced back to local execution.
    pub demoted: BTreeSet<usize>,
}

impl<T: Real> Allocation<T> {
    pub fn empty() -> Self {
        Allocation {
            ru_assignment: BTreeMap::new(),
            rates: BTreeMap::new(),
            cpu_shares: BTreeMap::new(),
            demoted: BTreeSet::new(),
        }
    }

    pub fn total_units(&self) -> u32 {
        self.ru_assignment.values().map(|s| s.units()).sum()
    }

    /// Check constraints C4/C6 plus the demotion bookkeeping. C5 holds by
    /// construction ([`RuSize`] is unconstructible outside the legal set),
    /// and C3 by the action type. Used pervasively in tests.
    pub fn check_constraints(&self, cfg: &ScenarioConfig<T>) -> Result<()> {
        if self.total_units() > cfg.bandwidth_units {
            return Err(Error::InvalidInput(format!(
                "C4 violated: {} units assigned, budget {}",
                self.total_units(),
                cfg.bandwidth_units
            )));
        }
        let share_sum: T = self.cpu_shares.values().copied().sum();
        if share_sum > cfg.f_mec_total * (T::one() + T::of(1e-12)) {
            return Err(Error::InvalidInput(format!(
                "C6 violated: shares sum to {share_sum}, budget {}",
                cfg.f_mec_total
            )));
        }
        for &m in &self.demoted {
            if self.ru_assignment.contains_key(&StaRef::Compute(m)) {
                return Err(Error::InvalidInput(format!(
                    "demoted compute STA {m} still holds an RU"
                )));
            }
        }
        for n in 0..cfg.n_comm {
            if !self.ru_assignment.contains_key(&StaRef::Comm(n)) {
                return Err(Error::InvalidInput(format!(
                    "communication STA {n} was left without an RU"
                )));
            }
        }
        Ok(())
    }
}

/// Maximum MCS each station reaches on a single 26-tone RU; the capability
/// term of the priority formula.
pub fn capabilities<T: Real>(
    gains: &[T],
    tx_power: T,
    params: &ChannelParams<T>,
    table: &RateTable<T>,
) -> Vec<Option<McsIndex>> {
    let ru1 = RuSize::new(1).expect("26-tone is legal");
    gains
        .iter()
        .map(|&g| channel::mcs_from_snr(channel::snr(tx_power, g, ru1, params), table))
        .collect()
}

/// Task priorities over a set of compute tasks. Each of the three fractions
/// is normalized over the set, so the values sum to 1. The capability score
/// is `MCS index + 1`; an unreachable station scores 1 (the worst) and is
/// flagged infeasible.
pub fn priority<T: Real>(
    tasks: &[ComputeTask<T>],
    capabilities: &[Option<McsIndex>],
    weights: [T; 3],
) -> Vec<StaPriority<T>> {
    assert_eq!(tasks.len(), capabilities.len());
    if tasks.is_empty() {
        return Vec::new();
    }
    let ru_req: Vec<T> = tasks.iter().map(|t| t.data_bits / t.deadline).collect();
    let f_req: Vec<T> = tasks.iter().map(|t| t.cpu_cycles / t.deadline).collect();
    let inv_cap: Vec<T> = capabilities
        .iter()
        .map(|c| {
            let score = c.map_or(1, |m| m.index() + 1);
            T::one() / T::of_usize(score)
        })
        .collect();
    let ru_sum: T = ru_req.iter().copied().sum();
    let f_sum: T = f_req.iter().copied().sum();
    let cap_sum: T = inv_cap.iter().copied().sum();
    (0..tasks.len())
        .map(|m| {
            let components = [
                weights[0] * ru_req[m] / ru_sum,
                weights[1] * f_req[m] / f_sum,
                weights[2] * inv_cap[m] / cap_sum,
            ];
            StaPriority {
                value: components.iter().copied().sum(),
                components,
                feasible: capabilities[m].is_some(),
            }
        })
        .collect()
}

/// Proportional MEC CPU shares: `f_m = priority_m / sum(priority) * f_mec`.
/// The last share absorbs the rounding residual so the shares sum to
/// `f_mec` exactly.
pub fn allocate_compute<T: Real>(priorities: &[T], f_mec: T) -> Vec<T> {
    if priorities.is_empty() {
        return Vec::new();
    }
    let total: T = priorities.iter().copied().sum();
    let mut shares = Vec::with_capacity(priorities.len());
    let mut assigned = T::zero();
    for &p in &priorities[..priorities.len() - 1] {
        let share = p / total * f_mec;
        shares.push(share);
        assigned += share;
    }
    shares.push(f_mec - assigned);
    shares
}

/// All RU-size multisets of the given cardinality whose unit sum fits the
/// budget, in canonical (lexicographic over nondecreasing sizes) order.
pub fn enumerate_partitions(n_stas: usize, budget_units: u32) -> Vec<RuPartition> {
    let mut out = Vec::new();
    if n_stas == 0 {
        return out;
    }
    let mut acc: Vec<RuSize> = Vec::with_capacity(n_stas);
    fn rec(
        ladder_from: usize,
        remaining: usize,
        used: u32,
        budget: u32,
        acc: &mut Vec<RuSize>,
        out: &mut Vec<RuPartition>,
    ) {
        if remaining == 0 {
            out.push(RuPartition { sizes: acc.clone() });
            return;
        }
        for idx in ladder_from..RU_UNIT_SIZES.len() {
            let unit = RU_UNIT_SIZES[idx];
            // Sizes are nondecreasing from here on, so the cheapest possible
            // completion uses `unit` for every remaining slot.
            if used + unit * remaining as u32 > budget {
                break;
            }
            acc.push(RuSize::new(unit).unwrap());
            rec(idx, remaining - 1, used + unit, budget, acc, out);
            acc.pop();
        }
    }
    rec(0, n_stas, 0, budget_units, &mut acc, &mut out);
    out
}

/// Uniform RU size for the naive baselines: the largest legal size `r` such
/// that `n * r` fits the budget, or `None` when not even 26-tone RUs fit.
pub fn even_ru_split(n_transmitting: usize, budget_units: u32) -> Option<RuPartition> {
    if n_transmitting == 0 {
        return Some(RuPartition { sizes: Vec::new() });
    }
    RU_UNIT_SIZES
        .iter()
        .rev()
        .find(|&&r| r as usize * n_transmitting <= budget_units as usize)
        .map(|&r| RuPartition {
            sizes: vec![RuSize::new(r).unwrap(); n_transmitting],
        })
}

/// One transmitting station as the efficiency matrix sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmitSta<T> {
    pub sta: StaRef,
    pub data_bits: T,
    pub gain: T,
}

/// Achievable rate of each station on each RU-ladder size (rows follow
/// `stas`, columns follow [`RU_UNIT_SIZES`]).
fn rate_cache<T: Real>(
    stas: &[TransmitSta<T>],
    tx_power: T,
    params: &ChannelParams<T>,
    table: &RateTable<T>,
) -> Array2<T> {
    Array2::from_shape_fn((stas.len(), RU_UNIT_SIZES.len()), |(i, j)| {
        let ru = RuSize::new(RU_UNIT_SIZES[j]).unwrap();
        channel::achievable_rate(tx_power, stas[i].gain, ru, params, table)
    })
}

/// Weighted transmission cost of station `i` on RU slot `j` of the
/// partition: `lambda * d/V + (1-lambda) * p * d/V`. Unreachable pairings
/// are `T::infinity()`.
pub fn efficiency_matrix<T: Real>(
    stas: &[TransmitSta<T>],
    partition: &RuPartition,
    tx_power: T,
    lambda: T,
    params: &ChannelParams<T>,
    table: &RateTable<T>,
) -> Array2<T> {
    assert_eq!(
        stas.len(),
        partition.len(),
        "partition cardinality must match the transmitting set"
    );
    let rates = rate_cache(stas, tx_power, params, table);
    matrix_from_rates(stas, partition, &rates, tx_power, lambda)
}

fn matrix_from_rates<T: Real>(
    stas: &[TransmitSta<T>],
    partition: &RuPartition,
    rates: &Array2<T>,
    tx_power: T,
    lambda: T,
) -> Array2<T> {
    Array2::from_shape_fn((stas.len(), partition.len()), |(i, j)| {
        let v = rates[(i, partition.sizes[j].ladder_index())];
        if v <= T::zero() {
            T::infinity()
        } else {
            let trans = stas[i].data_bits / v;
            lambda * trans + (T::one() - lambda) * tx_power * trans
        }
    })
}

struct TransmitSet<T> {
    stas: Vec<TransmitSta<T>>,
    /// Comm deadline per row (None for compute rows).
    comm_deadlines: Vec<Option<T>>,
    demoted: BTreeSet<usize>,
}

/// Shared preamble of both allocation modes: pick the transmitting set,
/// demote low-priority offloaders if it cannot fit the RU budget, and
/// compute MEC CPU shares over the survivors.
fn build_transmit_set<T: Real>(
    compute_tasks: &[ComputeTask<T>],
    comm_tasks: &[CommTask<T>],
    decisions: &[bool],
    compute_gains: &[T],
    comm_gains: &[T],
    cfg: &ScenarioConfig<T>,
    params: &ChannelParams<T>,
    table: &RateTable<T>,
) -> Result<(TransmitSet<T>, BTreeMap<usize, T>)> {
    if decisions.len() != compute_tasks.len() || compute_gains.len() != compute_tasks.len() {
        return Err(Error::InvalidInput(format!(
            "expected {} decisions/gains for compute STAs",
            compute_tasks.len()
        )));
    }
    if comm_gains.len() != comm_tasks.len() {
        return Err(Error::InvalidInput(format!(
            "expected {} gains for comm STAs",
            comm_tasks.len()
        )));
    }
    if comm_tasks.len() as u32 > cfg.bandwidth_units {
        return Err(Error::Config(format!(
            "{} communication STAs cannot fit a {}-unit budget",
            comm_tasks.len(),
            cfg.bandwidth_units
        )));
    }

    let mut offloaders: Vec<usize> = (0..compute_tasks.len()).filter(|&m| decisions[m]).collect();
    let mut demoted = BTreeSet::new();

    let overflow = (comm_tasks.len() + offloaders.len())
        .saturating_sub(cfg.bandwidth_units as usize);
    if overflow > 0 {
        // Rank the offloading set once by Eq-(19) priority; equal priorities
        // demote the higher station index first.
        let off_tasks: Vec<ComputeTask<T>> = offloaders.iter().map(|&m| compute_tasks[m]).collect();
        let off_gains: Vec<T> = offloaders.iter().map(|&m| compute_gains[m]).collect();
        let caps = capabilities(&off_gains, cfg.tx_power, params, table);
        let prios = priority(&off_tasks, &caps, cfg.priority_weights);
        let mut ranked: Vec<(usize, T)> = offloaders
            .iter()
            .copied()
            .zip(prios.iter().map(|p| p.value))
            .collect();
        ranked.sort_by(|a, b| {
            a.1.partial_cmp(&b.1)
                .expect("priorities are finite")
                .then(b.0.cmp(&a.0))
        });
        for &(m, _) in ranked.iter().take(overflow) {
            demoted.insert(m);
        }
        offloaders.retain(|m| !demoted.contains(m));
    }

    // Eq-(20) CPU shares over the surviving offload set.
    let off_tasks: Vec<ComputeTask<T>> = offloaders.iter().map(|&m| compute_tasks[m]).collect();
    let off_gains: Vec<T> = offloaders.iter().map(|&m| compute_gains[m]).collect();
    let caps = capabilities(&off_gains, cfg.tx_power, params, table);
    let prios: Vec<T> = priority(&off_tasks, &caps, cfg.priority_weights)
        .iter()
        .map(|p| p.value)
        .collect();
    let shares = allocate_compute(&prios, cfg.f_mec_total);
    let cpu_shares: BTreeMap<usize, T> = offloaders.iter().copied().zip(shares).collect();

    let mut stas = Vec::with_capacity(comm_tasks.len() + offloaders.len());
    let mut comm_deadlines = Vec::with_capacity(stas.capacity());
    for (n, task) in comm_tasks.iter().enumerate() {
        stas.push(TransmitSta {
            sta: StaRef::Comm(n),
            data_bits: task.data_bits,
            gain: comm_gains[n],
        });
        comm_deadlines.push(Some(task.deadline));
    }
    for &m in &offloaders {
        stas.push(TransmitSta {
            sta: StaRef::Compute(m),
            data_bits: compute_tasks[m].data_bits,
            gain: compute_gains[m],
        });
        comm_deadlines.push(None);
    }

    Ok((
        TransmitSet {
            stas,
            comm_deadlines,
            demoted,
        },
        cpu_shares,
    ))
}

/// Full allocation pipeline: demotion, Eq-(20) CPU shares, RU-partition
/// enumeration, Hungarian assignment per partition, and selection of the
/// cheapest partition with communication-deadline feasibility taking strict
/// precedence over cost (and fewer total units breaking exact cost ties).
pub fn allocate<T: Real>(
    compute_tasks: &[ComputeTask<T>],
    comm_tasks: &[CommTask<T>],
    decisions: &[bool],
    compute_gains: &[T],
    comm_gains: &[T],
    cfg: &ScenarioConfig<T>,
    params: &ChannelParams<T>,
    table: &RateTable<T>,
) -> Result<Allocation<T>> {
    let (set, cpu_shares) = build_transmit_set(
        compute_tasks,
        comm_tasks,
        decisions,
        compute_gains,
        comm_gains,
        cfg,
        params,
        table,
    )?;
    let n = set.stas.len();
    if n == 0 {
        return Ok(Allocation::empty());
    }

    let rates = rate_cache(&set.stas, cfg.tx_power, params, table);

    struct Best<T> {
        feasible: bool,
        cost: T,
        units: u32,
        partition: RuPartition,
        assignment: Vec<usize>,
    }
    let mut best: Option<Best<T>> = None;

    for partition in enumerate_partitions(n, cfg.bandwidth_units) {
        let matrix = matrix_from_rates(&set.stas, &partition, &rates, cfg.tx_power, cfg.lambda_weight);
        let (assignment, cost) = hungarian::solve(&matrix)?;
        let feasible = set.stas.iter().enumerate().all(|(i, _)| {
            match set.comm_deadlines[i] {
                Some(deadline) => {
                    let v = rates[(i, partition.sizes[assignment[i]].ladder_index())];
                    v > T::zero() && set.stas[i].data_bits / v <= deadline
                }
                None => true,
            }
        });
        let units = partition.total_units();
        let improves = match &best {
            None => true,
            Some(b) => {
                feasible > b.feasible
                    || (feasible == b.feasible
                        && (cost < b.cost || (cost == b.cost && units < b.units)))
            }
        };
        if improves {
            best = Some(Best {
                feasible,
                cost,
                units,
                partition,
                assignment,
            });
        }
    }

    let best = best.ok_or_else(|| {
        Error::InvalidInput(format!(
            "no RU partition fits {n} transmitting STAs in {} units",
            cfg.bandwidth_units
        ))
    })?;

    let mut allocation = Allocation::empty();
    allocation.cpu_shares = cpu_shares;
    allocation.demoted = set.demoted;
    for (i, sta) in set.stas.iter().enumerate() {
        let ru = best.partition.sizes[best.assignment[i]];
        allocation.ru_assignment.insert(sta.sta, ru);
        allocation.rates.insert(sta.sta, rates[(i, ru.ladder_index())]);
    }
    Ok(allocation)
}

/// Allocation used by the naive baselines: the same demotion and CPU-share
/// preamble, but every transmitting station receives the same RU size from
/// [`even_ru_split`] instead of a searched partition.
pub fn allocate_even<T: Real>(
    compute_tasks: &[ComputeTask<T>],
    comm_tasks: &[CommTask<T>],
    decisions: &[bool],
    compute_gains: &[T],
    comm_gains: &[T],
    cfg: &ScenarioConfig<T>,
    params: &ChannelParams<T>,
    table: &RateTable<T>,
) -> Result<Allocation<T>> {
    let (set, cpu_shares) = build_transmit_set(
        compute_tasks,
        comm_tasks,
        decisions,
        compute_gains,
        comm_gains,
        cfg,
        params,
        table,
    )?;
    let n = set.stas.len();
    if n == 0 {
        return Ok(Allocation::empty());
    }
    let partition = even_ru_split(n, cfg.bandwidth_units).ok_or_else(|| {
        Error::InvalidInput(format!(
            "even split impossible: {n} STAs, {} units",
            cfg.bandwidth_units
        ))
    })?;
    let rates = rate_cache(&set.stas, cfg.tx_power, params, table);
    let mut allocation = Allocation::empty();
    allocation.cpu_shares = cpu_shares;
    allocation.demoted = set.demoted;
    for (i, sta) in set.stas.iter().enumerate() {
        let ru = partition.sizes()[i];
        allocation.ru_assignment.insert(sta.sta, ru);
        allocation.rates.insert(sta.sta, rates[(i, ru.ladder_index())]);
    }
    Ok(allocation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn task(d: f64, c: f64, tau: f64) -> ComputeTask<f64> {
        ComputeTask {
            data_bits: d,
            cpu_cycles: c,
            deadline: tau,
        }
    }

    fn mcs(k: u8) -> Option<McsIndex> {
        Some(McsIndex::new(k).unwrap())
    }

    #[test]
    fn identical_stations_share_priority_evenly() {
        let tasks = vec![task(3e6, 1e9, 1.0); 4];
        let caps = vec![mcs(7); 4];
        let prios = priority(&tasks, &caps, [1.0 / 3.0; 3]);
        for p in &prios {
            assert!((p.value - 0.25).abs() < 1e-12);
            assert!(p.feasible);
        }
        let sum: f64 = prios.iter().map(|p| p.value).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_station_has_priority_one() {
        let prios = priority(&[task(3e6, 1e9, 1.0)], &[mcs(3)], [1.0 / 3.0; 3]);
        assert_eq!(prios.len(), 1);
        assert!((prios[0].value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_station_priorities_match_hand_evaluation() {
        // (d, c, tau, cap) = (2e6, 1e9, 1.0, 4) and (4e6, 1e9, 1.0, 4):
        // fractions (1/3, 1/2, 1/2) and (2/3, 1/2, 1/2) -> 4/9 and 5/9.
        let tasks = vec![task(2e6, 1e9, 1.0), task(4e6, 1e9, 1.0)];
        let caps = vec![mcs(3), mcs(3)]; // capability = index + 1 = 4
        let prios = priority(&tasks, &caps, [1.0 / 3.0; 3]);
        assert!((prios[0].value - 4.0 / 9.0).abs() < 1e-12, "{}", prios[0].value);
        assert!((prios[1].value - 5.0 / 9.0).abs() < 1e-12, "{}", prios[1].value);
        assert!((prios[0].value + prios[1].value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn priorities_are_scale_invariant_in_data_size() {
        let tasks = vec![task(2e6, 1e9, 0.9), task(4e6, 8e8, 1.1), task(3e6, 1.05e9, 1.0)];
        let caps = vec![mcs(2), mcs(9), mcs(5)];
        let base = priority(&tasks, &caps, [0.5, 0.3, 0.2]);
        let scaled_tasks: Vec<_> = tasks
            .iter()
            .map(|t| task(t.data_bits * 7.5, t.cpu_cycles, t.deadline))
            .collect();
        let scaled = priority(&scaled_tasks, &caps, [0.5, 0.3, 0.2]);
        for (a, b) in base.iter().zip(&scaled) {
            assert!((a.value - b.value).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_task_set_gives_empty_priorities() {
        let prios = priority::<f64>(&[], &[], [1.0 / 3.0; 3]);
        assert!(prios.is_empty());
    }

    #[test]
    fn unreachable_station_scores_worst_capability() {
        let tasks = vec![task(3e6, 1e9, 1.0), task(3e6, 1e9, 1.0)];
        let prios = priority(&tasks, &[None, mcs(11)], [0.0, 0.0, 1.0]);
        assert!(!prios[0].feasible);
        // 1/cap fractions: 1 vs 1/12
        assert!((prios[0].value - 12.0 / 13.0).abs() < 1e-12);
    }

    #[test]
    fn cpu_shares_split_evenly_and_sum_exactly() {
        let shares = allocate_compute(&[0.5f64, 0.5], 1e10);
        assert_eq!(shares, vec![5e9, 5e9]);
        assert_eq!(allocate_compute(&[1.0f64], 1e10), vec![1e10]);
        let shares = allocate_compute(&[4.0f64 / 9.0, 5.0 / 9.0], 1e10);
        assert!((shares[0] - 4.444444444444444e9).abs() < 1.0);
        assert!((shares[1] - 5.555555555555556e9).abs() < 1.0);
        let total: f64 = shares.iter().sum();
        assert_eq!(total, 1e10, "shares must sum exactly to the MEC budget");
    }

    #[test]
    fn cpu_share_sum_is_exact_for_many_random_priorities() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for k in 1..20 {
            let prios: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
            let shares = allocate_compute(&prios, 1e10);
            assert_eq!(shares.iter().sum::<f64>(), 1e10);
            assert!(shares.iter().all(|&s| s > 0.0));
        }
    }

    #[test]
    fn partition_enumeration_matches_known_counts() {
        assert_eq!(enumerate_partitions(1, 36).len(), 6);
        assert_eq!(enumerate_partitions(2, 36).len(), 15);
        assert!(enumerate_partitions(37, 36).is_empty());
        // all pairs avoid 36 since any pair containing it exceeds the budget
        for p in enumerate_partitions(2, 36) {
            assert!(p.total_units() <= 36);
            assert!(p.sizes().iter().all(|s| s.units() != 36));
        }
    }

    #[test]
    fn partition_enumeration_matches_brute_force() {
        // Brute-force oracle: filter the full cartesian product down to
        // nondecreasing tuples within budget.
        for n in 1..=5usize {
            let expected = brute_force_partitions(n, 36);
            let got: Vec<Vec<u32>> = enumerate_partitions(n, 36)
                .iter()
                .map(|p| p.sizes().iter().map(|s| s.units()).collect())
                .collect();
            assert_eq!(got, expected, "n={n}");
        }
        assert_eq!(enumerate_partitions(3, 36).len(), 30);
        assert_eq!(enumerate_partitions(4, 36).len(), 51);
        assert_eq!(enumerate_partitions(5, 36).len(), 75);
    }

    fn brute_force_partitions(n: usize, budget: u32) -> Vec<Vec<u32>> {
        let mut all: Vec<Vec<u32>> = vec![vec![]];
        for _ in 0..n {
            let mut next = Vec::new();
            for prefix in &all {
                for &u in &RU_UNIT_SIZES {
                    if prefix.last().map_or(true, |&l| u >= l) {
                        let mut v = prefix.clone();
                        v.push(u);
                        next.push(v);
                    }
                }
            }
            all = next;
        }
        let mut all: Vec<Vec<u32>> = all
            .into_iter()
            .filter(|v| v.iter().sum::<u32>() <= budget)
            .collect();
        all.sort();
        all
    }

    #[test]
    fn even_split_examples() {
        assert_eq!(even_ru_split(2, 36).unwrap().sizes()[0].units(), 18);
        assert_eq!(even_ru_split(5, 36).unwrap().sizes()[0].units(), 4);
        assert_eq!(even_ru_split(36, 36).unwrap().sizes()[0].units(), 1);
        assert_eq!(even_ru_split(37, 36), None);
        assert!(even_ru_split(0, 36).unwrap().is_empty());
    }

    fn default_setup() -> (ScenarioConfig<f64>, ChannelParams<f64>, RateTable<f64>) {
        (
            ScenarioConfig::default(),
            ChannelParams::default(),
            RateTable::default(),
        )
    }

    #[test]
    fn efficiency_matrix_single_station() {
        let (cfg, params, table) = default_setup();
        let stas = [TransmitSta {
            sta: StaRef::Comm(0),
            data_bits: 1.5e7,
            gain: channel::channel_gain(10.0, &params).unwrap(),
        }];
        let partition = RuPartition::new(vec![RuSize::new(9).unwrap()]);
        let m = efficiency_matrix(&stas, &partition, cfg.tx_power, cfg.lambda_weight, &params, &table);
        assert_eq!(m.dim(), (1, 1));
        let v = channel::achievable_rate(cfg.tx_power, stas[0].gain, RuSize::new(9).unwrap(), &params, &table);
        let expected = 0.8 * 1.5e7 / v + 0.2 * 0.5 * 1.5e7 / v;
        assert!((m[(0, 0)] - expected).abs() < 1e-12);
    }

    #[test]
    fn efficiency_matrix_hand_computed_pair() {
        // Compute STA at 5 m with d=3.2e6 and comm STA at 15 m with d=1.5e7,
        // partition {106-tone, 242-tone}: both reach MCS 11, so the entries
        // are 0.9 * d / V with V = 62.4975 and 143.3766... Mbit/s.
        let (cfg, params, table) = default_setup();
        let stas = [
            TransmitSta {
                sta: StaRef::Compute(0),
                data_bits: 3.2e6,
                gain: channel::channel_gain(5.0, &params).unwrap(),
            },
            TransmitSta {
                sta: StaRef::Comm(0),
                data_bits: 1.5e7,
                gain: channel::channel_gain(15.0, &params).unwrap(),
            },
        ];
        let partition = RuPartition::new(vec![RuSize::new(4).unwrap(), RuSize::new(9).unwrap()]);
        let m = efficiency_matrix(&stas, &partition, cfg.tx_power, cfg.lambda_weight, &params, &table);
        let expected = [
            [0.04608184327373095, 0.020086957324446826],
            [0.21600864034561384, 0.09415761245834449],
        ];
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (m[(i, j)] - expected[i][j]).abs() < 1e-12,
                    "entry ({i},{j}): {} vs {}",
                    m[(i, j)],
                    expected[i][j]
                );
            }
        }
        // at equal MCS the bigger RU is never more expensive
        assert!(m[(0, 1)] <= m[(0, 0)]);
        assert!(m[(1, 1)] <= m[(1, 0)]);
    }

    fn gains_at<T: Real>(dists: &[f64], params: &ChannelParams<T>) -> Vec<T> {
        dists
            .iter()
            .map(|&d| channel::channel_gain(T::of(d), params).unwrap())
            .collect()
    }

    #[test]
    fn allocate_with_no_transmitters_is_empty() {
        let (cfg, params, table) = default_setup();
        let mut cfg = cfg;
        cfg.n_compute = 2;
        cfg.n_comm = 0;
        let tasks = vec![task(3e6, 1e9, 1.0), task(3e6, 1e9, 1.0)];
        let gains = gains_at(&[5.0, 10.0], &params);
        let alloc = allocate(&tasks, &[], &[false, false], &gains, &[], &cfg, &params, &table).unwrap();
        assert_eq!(alloc, Allocation::empty());
    }

    #[test]
    fn single_comm_station_gets_best_single_ru() {
        let (mut cfg, params, table) = default_setup();
        cfg.n_compute = 0;
        cfg.n_comm = 1;
        let comm = vec![CommTask {
            data_bits: 1.5e7,
            deadline: 10.0,
        }];
        let gains = gains_at(&[12.0], &params);
        let alloc = allocate(&[], &comm, &[], &[], &gains, &cfg, &params, &table).unwrap();
        // With a generous deadline the cheapest RU is the one with the best
        // rate; all sizes reach MCS 11 at 12 m, so 996-tone wins.
        assert_eq!(
            alloc.ru_assignment[&StaRef::Comm(0)].units(),
            36,
            "expected the largest RU to minimize transmission cost"
        );
        alloc.check_constraints(&cfg).unwrap();
    }

    #[test]
    fn oversubscription_demotes_exactly_the_lowest_priority() {
        // 37 offloading compute STAs against a 36-unit budget: the single
        // lowest-priority station is demoted and everything else fits.
        let (mut cfg, params, table) = default_setup();
        cfg.n_compute = 37;
        cfg.n_comm = 0;
        let tasks: Vec<ComputeTask<f64>> = (0..37)
            .map(|m| task(2.4e6 + 4e4 * m as f64, 1e9, 1.0))
            .collect();
        // identical gains: priority ordering is by data size (RU_req term)
        let gains = vec![channel::channel_gain(8.0, &params).unwrap(); 37];
        let decisions = vec![true; 37];
        let alloc = allocate(&tasks, &[], &decisions, &gains, &[], &cfg, &params, &table).unwrap();
        assert_eq!(alloc.demoted.len(), 1);
        // STA 0 has the smallest d/tau and f/tau fractions -> lowest priority
        assert!(alloc.demoted.contains(&0), "demoted: {:?}", alloc.demoted);
        assert!(alloc.total_units() <= 36);
        assert_eq!(alloc.ru_assignment.len(), 36);
        alloc.check_constraints(&cfg).unwrap();
        // shares were recomputed over the survivors and still sum exactly
        assert_eq!(alloc.cpu_shares.len(), 36);
        assert_eq!(alloc.cpu_shares.values().sum::<f64>(), cfg.f_mec_total);
        assert!(!alloc.cpu_shares.contains_key(&0));
    }

    #[test]
    fn equal_priority_demotion_takes_highest_index() {
        let (mut cfg, params, table) = default_setup();
        cfg.n_compute = 37;
        cfg.n_comm = 0;
        let tasks = vec![task(3e6, 1e9, 1.0); 37];
        let gains = vec![channel::channel_gain(8.0, &params).unwrap(); 37];
        let alloc = allocate(&tasks, &[], &vec![true; 37], &gains, &[], &cfg, &params, &table).unwrap();
        assert_eq!(alloc.demoted.iter().copied().collect::<Vec<_>>(), vec![36]);
    }

    #[test]
    fn comm_stations_are_never_demoted() {
        let (mut cfg, params, table) = default_setup();
        cfg.n_compute = 34;
        cfg.n_comm = 3;
        let tasks = vec![task(3e6, 1e9, 1.0); 34];
        let comm = vec![
            CommTask {
                data_bits: 1.5e7,
                deadline: 0.6,
            };
            3
        ];
        let cg = vec![channel::channel_gain(8.0, &params).unwrap(); 34];
        let ng = vec![channel::channel_gain(15.0, &params).unwrap(); 3];
        let alloc = allocate(&tasks, &comm, &vec![true; 34], &cg, &ng, &cfg, &params, &table).unwrap();
        // 37 transmitters for 36 units: one compute STA is demoted
        assert_eq!(alloc.demoted.len(), 1);
        for n in 0..3 {
            assert!(alloc.ru_assignment.contains_key(&StaRef::Comm(n)));
        }
        alloc.check_constraints(&cfg).unwrap();
    }

    #[test]
    fn random_allocations_satisfy_constraints() {
        let (_, params, table) = default_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..300 {
            let m = rng.gen_range(0..9usize);
            let n = rng.gen_range(0..4usize);
            if m + n == 0 {
                continue;
            }
            let mut cfg = ScenarioConfig::<f64>::default();
            cfg.n_compute = m;
            cfg.n_comm = n;
            let tasks: Vec<ComputeTask<f64>> = (0..m)
                .map(|_| {
                    task(
                        rng.gen_range(2.4e6..4e6),
                        rng.gen_range(9e8..1.1e9),
                        rng.gen_range(0.7..1.3),
                    )
                })
                .collect();
            let comm: Vec<CommTask<f64>> = (0..n)
                .map(|_| CommTask {
                    data_bits: rng.gen_range(1e7..2e7),
                    deadline: rng.gen_range(0.1..0.5),
                })
                .collect();
            let cg: Vec<f64> = (0..m)
                .map(|_| channel::channel_gain(rng.gen_range(1.0..20.0), &params).unwrap())
                .collect();
            let ng: Vec<f64> = (0..n)
                .map(|_| channel::channel_gain(rng.gen_range(1.0..20.0), &params).unwrap())
                .collect();
            let decisions: Vec<bool> = (0..m).map(|_| rng.gen_bool(0.5)).collect();
            let alloc = allocate(&tasks, &comm, &decisions, &cg, &ng, &cfg, &params, &table).unwrap();
            alloc.check_constraints(&cfg).unwrap();
            let even = allocate_even(&tasks, &comm, &decisions, &cg, &ng, &cfg, &params, &table).unwrap();
            even.check_constraints(&cfg).unwrap();
        }
    }

    #[test]
    fn chosen_partition_prefers_comm_feasibility() {
        // A comm station with a deadline only a 242-tone RU can meet, plus
        // enough offloaders that cost alone might starve it: the allocator
        // must still pick a comm-feasible partition.
        let (mut cfg, params, table) = default_setup();
        cfg.n_compute = 5;
        cfg.n_comm = 3;
        let tasks = vec![task(3.2e6, 1e9, 1.0); 5];
        let comm = vec![
            CommTask {
                data_bits: 1.8e7,
                deadline: 1.8e7 / 125e6, // needs >= 125 Mbit/s
            };
            3
        ];
        let cg = gains_at(&[3.0, 6.0, 9.0, 12.0, 15.0], &params);
        let ng = gains_at(&[18.0, 19.0, 20.0], &params);
        let alloc = allocate(&tasks, &comm, &vec![true; 5], &cg, &ng, &cfg, &params, &table).unwrap();
        for n in 0..3 {
            let ru = alloc.ru_assignment[&StaRef::Comm(n)];
            let v = alloc.rates[&StaRef::Comm(n)];
            assert!(
                1.8e7 / v <= comm[n].deadline + 1e-12,
                "comm {n} got {}-unit RU at {v} bit/s",
                ru.units()
            );
        }
        alloc.check_constraints(&cfg).unwrap();
    }
}
