//! Per-packet SNR features.
//!
//! For antenna pair `(tx i, rx j)` and subcarrier `k` the SNR is the channel
//! power over the noise power, `10·log10(|h_{j,i,k}|² / N₀)` dB. The packet
//! feature of a pair is the K-vector whose entries all equal the mean of those
//! K values; [`FeatureMode::MeanBroadcast`] collapses that constant vector to
//! one scalar per pair for the classifier input.
//!
//! Feature order is rx-major, then tx, then (for per-subcarrier features)
//! subcarrier, i.e. the pair index is `rx * n_tx + tx`.

use std::io::{self, Write};

use thiserror::Error;

use crate::csi::{Condition, CsiSample};

/// Value used for zero-gain entries, dB.
pub const DEFAULT_FLOOR_DB: f64 = -100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FeatureMode {
    /// One mean SNR per antenna pair.
    #[default]
    MeanBroadcast,
    /// Every subcarrier of every antenna pair.
    PerSubcarrier,
}

impl FeatureMode {
    pub fn dim(self, n_pairs: usize, n_subcarriers: usize) -> usize {
        match self {
            FeatureMode::MeanBroadcast => n_pairs,
            FeatureMode::PerSubcarrier => n_pairs * n_subcarriers,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::MeanBroadcast => "mean",
            FeatureMode::PerSubcarrier => "per-subcarrier",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "mean" | "mean-broadcast" => Some(FeatureMode::MeanBroadcast),
            "per-subcarrier" | "subcarrier" => Some(FeatureMode::PerSubcarrier),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SnrError {
    #[error("non-finite gain at flat index {index}")]
    NonFiniteGain { index: usize },
    #[error("noise floor {0} dBm does not give a positive finite noise power")]
    InvalidNoise(f32),
    #[error("expected {expected} gains, found {found}")]
    GainCount { expected: usize, found: usize },
    #[error("cannot average an empty SNR row")]
    EmptyRow,
}

/// SNR of one packet, `(n_rx·n_tx) × K` dB values in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrFeature {
    pub identity: u32,
    pub condition: Condition,
    pub n_pairs: usize,
    pub n_subcarriers: usize,
    pub per_pair_snr_db: Vec<f64>,
    pub mode: FeatureMode,
}

impl SnrFeature {
    pub fn row(&self, pair: usize) -> &[f64] {
        &self.per_pair_snr_db[pair * self.n_subcarriers..(pair + 1) * self.n_subcarriers]
    }

    /// Flat classifier input for this feature's mode.
    pub fn to_vector(&self) -> Vec<f64> {
        match self.mode {
            FeatureMode::MeanBroadcast => (0..self.n_pairs).map(|p| self.row(p)[0]).collect(),
            FeatureMode::PerSubcarrier => self.per_pair_snr_db.clone(),
        }
    }
}

/// Per-subcarrier SNR matrix with the default floor.
pub fn per_subcarrier_snr(s: &CsiSample) -> Result<Vec<f64>, SnrError> {
    per_subcarrier_snr_with_floor(s, DEFAULT_FLOOR_DB)
}

/// Per-subcarrier SNR matrix; values below `floor_db` (including `|h| = 0`)
/// are clamped to it.
pub fn per_subcarrier_snr_with_floor(s: &CsiSample, floor_db: f64) -> Result<Vec<f64>, SnrError> {
    let expected = s.geometry.n_gains();
    if s.h.len() != expected {
        return Err(SnrError::GainCount {
            expected,
            found: s.h.len(),
        });
    }
    let n0 = s.noise_power_linear();
    if !(n0 > 0.0 && n0.is_finite()) {
        return Err(SnrError::InvalidNoise(s.noise_floor_dbm));
    }
    s.h.iter()
        .enumerate()
        .map(|(index, z)| {
            let (re, im) = (f64::from(z.re), f64::from(z.im));
            if !(re.is_finite() && im.is_finite()) {
                return Err(SnrError::NonFiniteGain { index });
            }
            Ok(snr_db(re * re + im * im, n0, floor_db))
        })
        .collect()
}

/// `10·log10(power / n0)` clamped below at `floor_db`.
#[inline]
pub fn snr_db(power: f64, n0: f64, floor_db: f64) -> f64 {
    if power == 0.0 {
        return floor_db;
    }
    (10.0 * (power / n0).log10()).max(floor_db)
}

/// `1_{1×K} · (1/K)·Σ_k row[k]`: a K-vector filled with the row mean.
pub fn mean_broadcast(row: &[f64]) -> Result<Vec<f64>, SnrError> {
    if row.is_empty() {
        return Err(SnrError::EmptyRow);
    }
    let mean = row.iter().sum::<f64>() / row.len() as f64;
    Ok(vec![mean; row.len()])
}

/// Full SNR feature of one packet.
pub fn snr_feature(s: &CsiSample, mode: FeatureMode) -> Result<SnrFeature, SnrError> {
    let k = s.geometry.n_subcarriers;
    let mut snr = per_subcarrier_snr(s)?;
    if mode == FeatureMode::MeanBroadcast {
        for row in snr.chunks_mut(k) {
            let b = mean_broadcast(row)?;
            row.copy_from_slice(&b);
        }
    }
    Ok(SnrFeature {
        identity: s.identity,
        condition: s.condition,
        n_pairs: s.geometry.n_pairs(),
        n_subcarriers: k,
        per_pair_snr_db: snr,
        mode,
    })
}

/// Flat classifier input: `n_pairs` values for [`FeatureMode::MeanBroadcast`],
/// `n_pairs · K` for [`FeatureMode::PerSubcarrier`].
pub fn packet_feature(s: &CsiSample, mode: FeatureMode) -> Result<Vec<f64>, SnrError> {
    let k = s.geometry.n_subcarriers;
    let snr = per_subcarrier_snr(s)?;
    match mode {
        FeatureMode::PerSubcarrier => Ok(snr),
        FeatureMode::MeanBroadcast => snr
            .chunks(k)
            .map(|row| mean_broadcast(row).map(|b| b[0]))
            .collect(),
    }
}

/// Writes `identity,condition,<feature columns>` CSV rows.
pub fn write_features_csv<'a, W, I>(
    out: &mut W,
    mode: FeatureMode,
    n_pairs: usize,
    n_subcarriers: usize,
    rows: I,
) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (u32, Condition, &'a [f64])>,
{
    write!(out, "identity,condition")?;
    match mode {
        FeatureMode::MeanBroadcast => {
            for p in 0..n_pairs {
                write!(out, ",pair{p}")?;
            }
        }
        FeatureMode::PerSubcarrier => {
            for p in 0..n_pairs {
                for k in 0..n_subcarriers {
                    write!(out, ",pair{p}_sc{k}")?;
                }
            }
        }
    }
    writeln!(out)?;
    for (identity, condition, values) in rows {
        write!(out, "{identity},{}", condition.name())?;
        for v in values {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csi::ArrayGeometry;
    use num_complex::Complex32;
    use proptest::prelude::*;

    fn constant_sample(h: Complex32, noise_floor_dbm: f32) -> CsiSample {
        let g = ArrayGeometry::default();
        CsiSample {
            geometry: g,
            h: vec![h; g.n_gains()],
            noise_floor_dbm,
            timestamp_ns: 0,
            identity: 4,
            condition: Condition::WalkRL,
        }
    }

    #[test]
    fn unit_ratio_is_zero_db() {
        let s = constant_sample(Complex32::new(0.6, 0.8), 0.0);
        let snr = per_subcarrier_snr(&s).unwrap();
        assert_eq!(snr.len(), 180);
        assert!(snr.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn power_four_is_six_db() {
        let s = constant_sample(Complex32::new(2.0, 0.0), 0.0);
        let expected = 10.0 * 4f64.log10();
        assert!((expected - 6.0206).abs() < 1e-4);
        for v in per_subcarrier_snr(&s).unwrap() {
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gain_is_clamped_to_the_floor() {
        let mut s = constant_sample(Complex32::new(1.0, 0.0), -20.0);
        let idx = s.geometry.gain_index(1, 0, 12);
        s.h[idx] = Complex32::new(0.0, 0.0);
        let snr = per_subcarrier_snr(&s).unwrap();
        assert_eq!(snr[idx], -100.0);
        assert!((snr[idx + 1] - 20.0).abs() < 1e-4);
        let snr = per_subcarrier_snr_with_floor(&s, -60.0).unwrap();
        assert_eq!(snr[idx], -60.0);
    }

    #[test]
    fn non_finite_gain_is_an_error() {
        let mut s = constant_sample(Complex32::new(1.0, 0.0), -20.0);
        s.h[7].re = f32::NAN;
        assert_eq!(
            per_subcarrier_snr(&s),
            Err(SnrError::NonFiniteGain { index: 7 })
        );
    }

    #[test]
    fn mean_broadcast_examples() {
        assert_eq!(mean_broadcast(&[3.0, 5.0, 7.0]).unwrap(), vec![5.0; 3]);
        assert_eq!(mean_broadcast(&[-2.5; 4]).unwrap(), vec![-2.5; 4]);
        assert_eq!(mean_broadcast(&[1.0; 30]).unwrap().len(), 30);
        assert_eq!(mean_broadcast(&[]), Err(SnrError::EmptyRow));
    }

    #[test]
    fn packet_feature_lengths() {
        let s = constant_sample(Complex32::new(1.0, 0.0), 0.0);
        let mean = packet_feature(&s, FeatureMode::MeanBroadcast).unwrap();
        assert_eq!(mean.len(), 6);
        assert!(mean.iter().all(|v| v.abs() < 1e-9));
        assert_eq!(packet_feature(&s, FeatureMode::PerSubcarrier).unwrap().len(), 180);
    }

    #[test]
    fn packet_feature_ordering_is_rx_major() {
        let g = ArrayGeometry::default();
        let mut s = constant_sample(Complex32::new(1.0, 0.0), 0.0);
        for rx in 0..g.n_rx {
            for tx in 0..g.n_tx {
                for k in 0..g.n_subcarriers {
                    let amp = 10f32.powf((rx * g.n_tx + tx) as f32 / 20.0);
                    s.h[g.gain_index(rx, tx, k)] = Complex32::new(amp, 0.0);
                }
            }
        }
        let f = packet_feature(&s, FeatureMode::MeanBroadcast).unwrap();
        for (p, v) in f.iter().enumerate() {
            assert!((v - p as f64).abs() < 1e-5);
        }
    }

    #[test]
    fn snr_feature_rows_are_constant_in_mean_mode() {
        let mut s = constant_sample(Complex32::new(1.0, 0.0), -20.0);
        for (i, z) in s.h.iter_mut().enumerate() {
            *z = Complex32::new(1.0 + (i % 7) as f32 * 0.1, 0.0);
        }
        let f = snr_feature(&s, FeatureMode::MeanBroadcast).unwrap();
        for p in 0..f.n_pairs {
            let row = f.row(p);
            assert!(row.iter().all(|v| *v == row[0]));
        }
        assert_eq!(f.to_vector(), packet_feature(&s, FeatureMode::MeanBroadcast).unwrap());
        let full = snr_feature(&s, FeatureMode::PerSubcarrier).unwrap();
        assert_eq!(full.to_vector(), per_subcarrier_snr(&s).unwrap());
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let mut out = Vec::new();
        let row = [1.5, -2.0];
        write_features_csv(
            &mut out,
            FeatureMode::MeanBroadcast,
            2,
            30,
            [(3u32, Condition::StandingFacing, &row[..])],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "identity,condition,pair0,pair1\n3,standing-facing,1.5,-2\n"
        );
    }

    proptest! {
        #[test]
        fn scaling_power_shifts_every_entry(
            c in 0.01f64..100.0,
            n0 in 1e-4f64..10.0,
            powers in proptest::collection::vec(1e-3f64..10.0, 180),
        ) {
            let shift = 10.0 * c.log10();
            for p in powers {
                let d = snr_db(c * p, n0, DEFAULT_FLOOR_DB) - snr_db(p, n0, DEFAULT_FLOOR_DB);
                prop_assert!((d - shift).abs() < 1e-9);
            }
        }

        #[test]
        fn mean_broadcast_is_constant_and_exact(
            row in proptest::collection::vec(-40f64..60.0, 1..64),
        ) {
            let out = mean_broadcast(&row).unwrap();
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            prop_assert_eq!(out.len(), row.len());
            prop_assert!(out.iter().all(|v| *v == out[0]));
            prop_assert!((out[0] - mean).abs() <= 1e-12 * mean.abs().max(1e-300));
        }
    }
}
