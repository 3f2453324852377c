//! Uplink wireless model: log-distance indoor path loss, per-RU SNR, the
//! SNR→MCS lookup, and the (RU size, MCS)→PHY rate mapping.
//!
//! RU sizes follow the 80 MHz OFDMA grid (26/52/106/242/484/996-tone),
//! encoded as multiples of a 26-tone unit. The rate table defaults to one
//! spatial stream with a 0.8 µs guard interval; both the table and the
//! channel constants are plain data so scenario files can override them.

use crate::error::{Error, Result};
use crate::real::Real;
use serde::{Deserialize, Serialize};

/// Legal RU sizes in 26-tone units (constraint C5).
pub const RU_UNIT_SIZES: [u32; 6] = [1, 2, 4, 9, 18, 36];

/// Number of MCS indices (0..=11).
pub const MCS_COUNT: usize = 12;

/// An OFDMA resource-unit size, in 26-tone units. Only the six 80 MHz grid
/// sizes are constructible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct RuSize(u32);

impl RuSize {
    pub const ALL: [RuSize; 6] = [
        RuSize(1),
        RuSize(2),
        RuSize(4),
        RuSize(9),
        RuSize(18),
        RuSize(36),
    ];

    pub fn new(units: u32) -> Result<Self> {
        if RU_UNIT_SIZES.contains(&units) {
            Ok(RuSize(units))
        } else {
            Err(Error::InvalidInput(format!(
                "RU size must be one of {RU_UNIT_SIZES:?} 26-tone units, got {units}"
            )))
        }
    }

    pub fn units(self) -> u32 {
        self.0
    }

    /// Position of this size in the legal-size ladder (0..6).
    pub fn ladder_index(self) -> usize {
        RU_UNIT_SIZES.iter().position(|&u| u == self.0).unwrap()
    }
}

impl TryFrom<u32> for RuSize {
    type Error = Error;
    fn try_from(units: u32) -> Result<Self> {
        RuSize::new(units)
    }
}

impl From<RuSize> for u32 {
    fn from(ru: RuSize) -> u32 {
        ru.0
    }
}

/// Modulation-and-coding-scheme index, 0..=11. "No transmission possible" is
/// represented as `Option<McsIndex>::None` by [`mcs_from_snr`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct McsIndex(u8);

impl McsIndex {
    pub fn new(index: u8) -> Result<Self> {
        if index < MCS_COUNT as u8 {
            Ok(McsIndex(index))
        } else {
            Err(Error::InvalidInput(format!(
                "MCS index must be in 0..={}, got {index}",
                MCS_COUNT - 1
            )))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Physical-layer constants of the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams<T> {
    /// Noise power spectral density N0, W/Hz.
    pub noise_psd: T,
    /// Bandwidth of a single 26-tone RU, Hz.
    pub ru_unit_bandwidth: T,
    /// Carrier frequency, Hz (informational; the default path-loss reference
    /// already assumes 5 GHz).
    pub carrier_frequency: T,
    /// Log-distance path-loss exponent.
    pub pathloss_exponent: T,
    /// Path loss at the 1 m reference distance, dB.
    pub pathloss_ref_db: T,
}

impl<T: Real> Default for ChannelParams<T> {
    fn default() -> Self {
        ChannelParams {
            // -174 dBm/Hz thermal floor
            noise_psd: T::of(3.98e-21),
            // 26 subcarriers x 78.125 kHz spacing
            ru_unit_bandwidth: T::of(2.03125e6),
            carrier_frequency: T::of(5.0e9),
            pathloss_exponent: T::of(3.0),
            // free space at 1 m, 5 GHz
            pathloss_ref_db: T::of(46.4),
        }
    }
}

impl<T: Real> ChannelParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.noise_psd <= T::zero() {
            return Err(Error::Config("noise_psd must be > 0".into()));
        }
        if self.ru_unit_bandwidth <= T::zero() {
            return Err(Error::Config("ru_unit_bandwidth must be > 0".into()));
        }
        if self.pathloss_exponent < T::of(2.0) {
            return Err(Error::Config("pathloss_exponent must be >= 2".into()));
        }
        Ok(())
    }
}

/// SNR→MCS thresholds plus the subcarrier/bit tables that turn an (RU, MCS)
/// pair into a PHY rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable<T> {
    /// Minimum linear SNR for each MCS index; strictly increasing.
    pub snr_thresholds: [T; MCS_COUNT],
    /// Data subcarriers per RU size, aligned with [`RU_UNIT_SIZES`].
    pub data_subcarriers: [u32; 6],
    /// Effective coded bits per data subcarrier per symbol for each MCS.
    pub bits_per_symbol_coded: [T; MCS_COUNT],
    /// OFDM symbol duration, seconds.
    pub symbol_duration: T,
}

impl<T: Real> Default for RateTable<T> {
    fn default() -> Self {
        let thresholds_db = [
            2.0, 5.0, 9.0, 11.0, 15.0, 18.0, 20.0, 25.0, 29.0, 31.0, 34.0, 37.0,
        ];
        RateTable::from_db_thresholds(
            thresholds_db,
            [24, 48, 102, 234, 468, 980],
            [
                0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 4.5, 5.0, 6.0, 6.667, 7.5, 8.333,
            ],
            13.6e-6,
        )
        .expect("default rate table is valid")
    }
}

impl<T: Real> RateTable<T> {
    pub fn from_db_thresholds(
        thresholds_db: [f64; MCS_COUNT],
        data_subcarriers: [u32; 6],
        bits_per_symbol_coded: [f64; MCS_COUNT],
        symbol_duration: f64,
    ) -> Result<Self> {
        let mut snr_thresholds = [T::zero(); MCS_COUNT];
        for (dst, db) in snr_thresholds.iter_mut().zip(thresholds_db) {
            *dst = T::of(10f64.powf(db / 10.0));
        }
        let mut bits = [T::zero(); MCS_COUNT];
        for (dst, b) in bits.iter_mut().zip(bits_per_symbol_coded) {
            *dst = T::of(b);
        }
        let table = RateTable {
            snr_thresholds,
            data_subcarriers,
            bits_per_symbol_coded: bits,
            symbol_duration: T::of(symbol_duration),
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.snr_thresholds.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config(
                    "snr_thresholds must be strictly increasing".into(),
                ));
            }
        }
        if self.snr_thresholds[0] < T::zero() {
            return Err(Error::Config("snr_thresholds must be nonnegative".into()));
        }
        for w in self.data_subcarriers.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config(
                    "data_subcarriers must increase with RU size".into(),
                ));
            }
        }
        for w in self.bits_per_symbol_coded.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config(
                    "bits_per_symbol_coded must increase with MCS".into(),
                ));
            }
        }
        if self.bits_per_symbol_coded[0] <= T::zero() {
            return Err(Error::Config("bits_per_symbol_coded must be > 0".into()));
        }
        if self.symbol_duration <= T::zero() {
            return Err(Error::Config("symbol_duration must be > 0".into()));
        }
        Ok(())
    }

    pub fn subcarriers(&self, ru: RuSize) -> u32 {
        self.data_subcarriers[ru.ladder_index()]
    }
}

/// Indoor log-distance path loss in dB: `ref_db + 10 n log10(max(d, 1 m))`.
pub fn path_loss_db<T: Real>(distance: T, params: &ChannelParams<T>) -> Result<T> {
    if distance <= T::zero() {
        return Err(Error::InvalidInput(format!(
            "distance must be > 0, got {distance}"
        )));
    }
    let d = distance.max(T::one());
    Ok(params.pathloss_ref_db + T::of(10.0) * params.pathloss_exponent * d.log10())
}

/// Linear channel gain `10^(-PL/10)`.
pub fn channel_gain<T: Real>(distance: T, params: &ChannelParams<T>) -> Result<T> {
    let pl = path_loss_db(distance, params)?;
    Ok(T::of(10.0).powf(-pl / T::of(10.0)))
}

/// Linear SNR of a transmission on `ru`: `p g / (N0 r b_c)`.
pub fn snr<T: Real>(tx_power: T, gain: T, ru: RuSize, params: &ChannelParams<T>) -> T {
    tx_power * gain / (params.noise_psd * T::of_usize(ru.units() as usize) * params.ru_unit_bandwidth)
}

/// Highest MCS whose threshold is `<= snr` (inclusive boundary), or `None`
/// when even MCS 0 is out of reach. Callers must treat `None` as rate 0.
pub fn mcs_from_snr<T: Real>(snr: T, table: &RateTable<T>) -> Option<McsIndex> {
    let mut best = None;
    for (k, &thr) in table.snr_thresholds.iter().enumerate() {
        if snr >= thr {
            best = Some(McsIndex(k as u8));
        } else {
            break;
        }
    }
    best
}

/// PHY rate in bit/s for an RU/MCS pair; 0 for the no-transmission sentinel.
pub fn rate<T: Real>(ru: RuSize, mcs: Option<McsIndex>, table: &RateTable<T>) -> T {
    match mcs {
        Some(m) => {
            T::of_usize(table.subcarriers(ru) as usize) * table.bits_per_symbol_coded[m.index()]
                / table.symbol_duration
        }
        None => T::zero(),
    }
}

/// Achievable uplink rate for a station with the given power and gain on the
/// given RU: the composition `rate(ru, mcs_from_snr(snr(..)))`.
pub fn achievable_rate<T: Real>(
    tx_power: T,
    gain: T,
    ru: RuSize,
    params: &ChannelParams<T>,
    table: &RateTable<T>,
) -> T {
    rate(ru, mcs_from_snr(snr(tx_power, gain, ru, params), table), table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ChannelParams<f64> {
        ChannelParams::default()
    }

    #[test]
    fn path_loss_reference_and_decade() {
        let p = params();
        assert_eq!(path_loss_db(1.0, &p).unwrap(), 46.4);
        assert_eq!(path_loss_db(10.0, &p).unwrap(), 76.4);
        // inside the 1 m reference, loss is clamped to the reference value
        assert_eq!(path_loss_db(0.3, &p).unwrap(), 46.4);
    }

    #[test]
    fn path_loss_at_twenty_meters() {
        let pl = path_loss_db(20.0, &params()).unwrap();
        assert!((pl - 85.43089986991944).abs() < 1e-9, "got {pl}");
    }

    #[test]
    fn path_loss_rejects_nonpositive_distance() {
        assert!(path_loss_db(0.0, &params()).is_err());
        assert!(path_loss_db(-3.0, &params()).is_err());
    }

    #[test]
    fn gain_is_in_unit_interval_and_monotone() {
        let p = params();
        let mut last = 1.0f64;
        for d in [0.5, 1.0, 2.0, 5.0, 10.0, 20.0] {
            let g = channel_gain(d, &p).unwrap();
            assert!(g > 0.0 && g <= 1.0);
            assert!(g <= last, "gain must not increase with distance");
            last = g;
        }
    }

    #[test]
    fn snr_direct_substitution() {
        let p = ChannelParams {
            noise_psd: 1.0,
            ru_unit_bandwidth: 1.0,
            ..params()
        };
        let s = snr(0.5, 1.0, RuSize::new(2).unwrap(), &p);
        assert_eq!(s, 0.25);
    }

    #[test]
    fn snr_halves_when_ru_doubles() {
        let p = params();
        let s1 = snr(0.5, 1e-8, RuSize::new(1).unwrap(), &p);
        let s2 = snr(0.5, 1e-8, RuSize::new(2).unwrap(), &p);
        assert_eq!(s2, s1 / 2.0);
        // strictly decreasing across the whole ladder
        let series: Vec<f64> = RuSize::ALL.iter().map(|&ru| snr(0.5, 1e-8, ru, &p)).collect();
        for w in series.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn snr_at_cell_edge_matches_hand_calculation() {
        // 20 m, default params, 26-tone: 0.5 * 10^-8.543 / (3.98e-21 * 2.03125e6)
        let p = params();
        let g = 10f64.powf(-8.543);
        let s = snr(0.5, g, RuSize::new(1).unwrap(), &p);
        assert!((s - 177142.8199401058).abs() / s < 1e-12, "got {s}");
    }

    #[test]
    fn mcs_boundary_is_inclusive_and_round_trips() {
        let t = RateTable::<f64>::default();
        for k in 0..MCS_COUNT {
            let got = mcs_from_snr(t.snr_thresholds[k], &t).unwrap();
            assert_eq!(got.index(), k);
        }
        assert_eq!(mcs_from_snr(0.0, &t), None);
        assert_eq!(mcs_from_snr(f64::INFINITY, &t).unwrap().index(), 11);
        // just below the first threshold stays unreachable
        assert_eq!(mcs_from_snr(t.snr_thresholds[0] * 0.999, &t), None);
    }

    #[test]
    fn rate_mcs0_on_26_tone() {
        let t = RateTable::<f64>::default();
        let r = rate(RuSize::new(1).unwrap(), Some(McsIndex::new(0).unwrap()), &t);
        assert!((r - 882352.9411764706).abs() < 1e-6, "got {r}");
    }

    #[test]
    fn rate_sentinel_is_zero() {
        let t = RateTable::<f64>::default();
        assert_eq!(rate(RuSize::new(9).unwrap(), None, &t), 0.0);
    }

    #[test]
    fn rate_monotone_in_ru_and_mcs() {
        let t = RateTable::<f64>::default();
        for k in 0..MCS_COUNT {
            let mcs = Some(McsIndex::new(k as u8).unwrap());
            let rates: Vec<f64> = RuSize::ALL.iter().map(|&ru| rate(ru, mcs, &t)).collect();
            for w in rates.windows(2) {
                assert!(w[1] > w[0]);
            }
        }
        for &ru in &RuSize::ALL {
            let rates: Vec<f64> = (0..MCS_COUNT)
                .map(|k| rate(ru, Some(McsIndex::new(k as u8).unwrap()), &t))
                .collect();
            for w in rates.windows(2) {
                assert!(w[1] > w[0]);
            }
        }
    }

    #[test]
    fn achievable_rate_is_deterministic() {
        let p = params();
        let t = RateTable::<f64>::default();
        let g = channel_gain(12.0, &p).unwrap();
        let a = achievable_rate(0.5, g, RuSize::new(4).unwrap(), &p, &t);
        let b = achievable_rate(0.5, g, RuSize::new(4).unwrap(), &p, &t);
        assert_eq!(a, b);
        assert!(a > 0.0);
    }

    #[test]
    fn ru_size_rejects_illegal_values() {
        for bad in [0u32, 3, 5, 8, 10, 17, 37, 100] {
            assert!(RuSize::new(bad).is_err());
        }
        for good in RU_UNIT_SIZES {
            assert_eq!(RuSize::new(good).unwrap().units(), good);
        }
    }

    #[test]
    fn table_validation_catches_disorder() {
        let mut t = RateTable::<f64>::default();
        t.snr_thresholds[5] = t.snr_thresholds[4];
        assert!(t.validate().is_err());
    }

    #[test]
    fn generic_scalar_agrees_between_f32_and_f64() {
        let p32 = ChannelParams::<f32>::default();
        let p64 = ChannelParams::<f64>::default();
        let g32 = channel_gain(7.5f32, &p32).unwrap();
        let g64 = channel_gain(7.5f64, &p64).unwrap();
        assert!((g32 as f64 - g64).abs() / g64 < 1e-5);
    }
}
