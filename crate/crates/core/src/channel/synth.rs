use num_complex::{Complex32, Complex64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{
    apply_motion, channel_response_on, draw_fingerprint_with, perturb_estimate,
    subcarrier_frequencies, transmit, ChannelError, ChannelResponse, FingerprintProfile,
    IdentityFingerprint, LsEstimator, NoiseModel, PilotSequence,
};
use crate::csi::{ArrayGeometry, Condition, CsiLog, CsiSample, EMPTY_IDENTITY};
use crate::kv::{parse_key_values, parse_value};

const ACQUISITION_STREAM: u64 = 1 << 61;

/// Dataset synthesis parameters. Defaults follow the reference acquisition
/// protocol: 50 identities, four person conditions plus the empty path, three
/// acquisitions of 200 packets over 3 s each.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    pub geometry: ArrayGeometry,
    pub identities: u32,
    pub conditions: Vec<Condition>,
    pub acquisitions_per_condition: usize,
    pub packets_per_acquisition: usize,
    pub acquisition_duration_s: f64,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    /// Per-packet path phase drift (std, rad) for walking conditions.
    pub doppler_phase_jitter_rad: f64,
    pub noise: NoiseModel,
    pub master_seed: u64,
    pub pilot_count: usize,
    pub pilot_power: f64,
    /// Per-acquisition change of the subject's position: path delay std (ns).
    pub pose_delay_jitter_ns: f64,
    /// Per-acquisition relative complex gain std of every path.
    pub pose_gain_jitter: f64,
    pub profile: FingerprintProfile,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            geometry: ArrayGeometry::default(),
            identities: 50,
            conditions: Condition::ALL.to_vec(),
            acquisitions_per_condition: 3,
            packets_per_acquisition: 200,
            acquisition_duration_s: 3.0,
            carrier_hz: 5.32e9,
            subcarrier_spacing_hz: 312.5e3,
            doppler_phase_jitter_rad: 0.3,
            noise: NoiseModel::default(),
            master_seed: 42,
            pilot_count: 4,
            pilot_power: 1.0,
            pose_delay_jitter_ns: 0.5,
            pose_gain_jitter: 0.05,
            profile: FingerprintProfile::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> ChannelError {
    ChannelError::InvalidConfig(msg.into())
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !self.geometry.is_valid() {
            return Err(invalid(format!("invalid geometry {}", self.geometry)));
        }
        if self.identities < 1 {
            return Err(invalid("identities must be >= 1"));
        }
        if self.conditions.is_empty() {
            return Err(invalid("at least one condition is required"));
        }
        if self.acquisitions_per_condition < 1 {
            return Err(invalid("acquisitions_per_condition must be >= 1"));
        }
        if self.packets_per_acquisition < 1 {
            return Err(invalid("packets_per_acquisition must be >= 1"));
        }
        if !(self.acquisition_duration_s > 0.0 && self.acquisition_duration_s.is_finite()) {
            return Err(invalid("acquisition duration must be > 0"));
        }
        if !(self.carrier_hz > 0.0 && self.subcarrier_spacing_hz > 0.0) {
            return Err(invalid("carrier and subcarrier spacing must be > 0"));
        }
        if !(self.doppler_phase_jitter_rad >= 0.0 && self.doppler_phase_jitter_rad.is_finite()) {
            return Err(invalid("phase jitter must be >= 0"));
        }
        if !(self.pose_delay_jitter_ns >= 0.0 && self.pose_gain_jitter >= 0.0) {
            return Err(invalid("pose jitters must be >= 0"));
        }
        if self.pilot_count < self.geometry.n_tx {
            return Err(invalid(format!(
                "pilot_count {} < n_tx {}",
                self.pilot_count, self.geometry.n_tx
            )));
        }
        self.noise.validate()
    }

    /// Noise floor referred to the per-symbol pilot power, dBm.
    pub fn noise_floor_dbm(&self) -> f64 {
        10.0 * (self.noise.noise_power_linear / self.pilot_power).log10()
    }

    /// Number of records [`generate_dataset`] will emit.
    pub fn record_count(&self) -> usize {
        let per_acq = self.acquisitions_per_condition * self.packets_per_acquisition;
        let person = self.conditions.iter().filter(|c| **c != Condition::Empty).count();
        let empty = usize::from(self.conditions.contains(&Condition::Empty));
        (empty + person * self.identities as usize) * per_acq
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ChannelError> {
        match key {
            "identities" => self.identities = parse_value(key, value).map_err(invalid)?,
            "conditions" => {
                self.conditions = value
                    .split(',')
                    .map(|s| {
                        Condition::from_name(s.trim())
                            .ok_or_else(|| invalid(format!("unknown condition {s:?}")))
                    })
                    .collect::<Result<_, _>>()?;
            }
            "acquisitions" => {
                self.acquisitions_per_condition = parse_value(key, value).map_err(invalid)?
            }
            "packets" => self.packets_per_acquisition = parse_value(key, value).map_err(invalid)?,
            "duration_s" => self.acquisition_duration_s = parse_value(key, value).map_err(invalid)?,
            "carrier_hz" => self.carrier_hz = parse_value(key, value).map_err(invalid)?,
            "subcarrier_spacing_hz" => {
                self.subcarrier_spacing_hz = parse_value(key, value).map_err(invalid)?
            }
            "jitter_rad" => {
                self.doppler_phase_jitter_rad = parse_value(key, value).map_err(invalid)?
            }
            "noise_power" => {
                self.noise.noise_power_linear = parse_value(key, value).map_err(invalid)?
            }
            "estimation_error_variance" => {
                self.noise.estimation_error_variance = parse_value(key, value).map_err(invalid)?
            }
            "seed" => self.master_seed = parse_value(key, value).map_err(invalid)?,
            "n_tx" => self.geometry.n_tx = parse_value(key, value).map_err(invalid)?,
            "n_rx" => self.geometry.n_rx = parse_value(key, value).map_err(invalid)?,
            "n_subcarriers" => self.geometry.n_subcarriers = parse_value(key, value).map_err(invalid)?,
            "pilots" => self.pilot_count = parse_value(key, value).map_err(invalid)?,
            "pilot_power" => self.pilot_power = parse_value(key, value).map_err(invalid)?,
            "pose_delay_jitter_ns" => {
                self.pose_delay_jitter_ns = parse_value(key, value).map_err(invalid)?
            }
            "pose_gain_jitter" => self.pose_gain_jitter = parse_value(key, value).map_err(invalid)?,
            _ => return Err(invalid(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Recognized keys for [`set`](Self::set).
    pub const KEYS: &'static [&'static str] = &[
        "identities",
        "conditions",
        "acquisitions",
        "packets",
        "duration_s",
        "carrier_hz",
        "subcarrier_spacing_hz",
        "jitter_rad",
        "noise_power",
        "estimation_error_variance",
        "seed",
        "n_tx",
        "n_rx",
        "n_subcarriers",
        "pilots",
        "pilot_power",
        "pose_delay_jitter_ns",
        "pose_gain_jitter",
    ];

    /// Defaults overridden by a flat `key = value` text.
    pub fn from_key_values(text: &str) -> Result<Self, ChannelError> {
        let mut cfg = Self::default();
        for (k, v) in parse_key_values(text).map_err(invalid)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    /// Ordered acquisition keys: identity, then condition code, then acquisition.
    fn acquisitions(&self) -> Vec<(u32, Condition, usize)> {
        let mut conditions = self.conditions.clone();
        conditions.sort();
        conditions.dedup();
        let mut out = Vec::new();
        for identity in 0..=self.identities {
            for &c in &conditions {
                if (identity == EMPTY_IDENTITY) != (c == Condition::Empty) {
                    continue;
                }
                for a in 0..self.acquisitions_per_condition {
                    out.push((identity, c, a));
                }
            }
        }
        out
    }
}

/// One simulated packet: the true channel and its least-squares estimate.
#[derive(Debug, Clone)]
pub struct SimulatedPacket {
    pub truth: ChannelResponse,
    pub estimate: ChannelResponse,
    pub timestamp_ns: u64,
}

struct Synthesizer<'a> {
    cfg: &'a SynthesisConfig,
    pilots: PilotSequence,
    estimator: LsEstimator,
    freqs: Vec<f64>,
}

impl<'a> Synthesizer<'a> {
    fn new(cfg: &'a SynthesisConfig) -> Result<Self, ChannelError> {
        cfg.validate()?;
        let pilots = PilotSequence::orthogonal(cfg.geometry.n_tx, cfg.pilot_count, cfg.pilot_power)?;
        let estimator = LsEstimator::new(&pilots)?;
        Ok(Self {
            cfg,
            pilots,
            estimator,
            freqs: subcarrier_frequencies(cfg),
        })
    }

    fn fingerprint(&self, identity: u32) -> IdentityFingerprint {
        draw_fingerprint_with(
            identity,
            self.cfg.geometry,
            self.cfg.master_seed,
            &self.cfg.profile,
        )
    }

    /// Where the subject stands in this acquisition: small delay and gain
    /// perturbations of every path. The empty room is static.
    fn pose(&self, f: &IdentityFingerprint, rng: &mut ChaCha8Rng) -> IdentityFingerprint {
        let mut posed = f.clone();
        if f.is_empty_path() {
            return posed;
        }
        let cfg = self.cfg;
        let s = cfg.pose_gain_jitter / std::f64::consts::SQRT_2;
        for path in &mut posed.paths {
            let d: f64 = StandardNormal.sample(rng);
            path.delay_ns = (path.delay_ns + cfg.pose_delay_jitter_ns * d).max(0.0);
            for g in &mut path.gains {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                *g *= Complex64::new(1.0 + s * re, s * im);
            }
        }
        posed
    }

    fn acquisition(
        &self,
        f: &IdentityFingerprint,
        condition: Condition,
        acquisition: usize,
    ) -> Result<Vec<SimulatedPacket>, ChannelError> {
        let cfg = self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
        rng.set_stream(
            ACQUISITION_STREAM
                | (u64::from(f.identity) << 24)
                | (u64::from(condition.code()) << 16)
                | acquisition as u64,
        );
        let posed = self.pose(f, &mut rng);
        let spacing_ns =
            (cfg.acquisition_duration_s * 1e9 / cfg.packets_per_acquisition as f64).round() as u64;

        (0..cfg.packets_per_acquisition)
            .map(|i| {
                let moved = apply_motion(&posed, condition, cfg.doppler_phase_jitter_rad, &mut rng);
                let truth = channel_response_on(&moved, &self.freqs);
                let received = transmit(&truth, &self.pilots, &cfg.noise, &mut rng)?;
                let mut estimate = self.estimator.estimate(&received)?;
                perturb_estimate(&mut estimate, cfg.noise.estimation_error_variance, &mut rng);
                Ok(SimulatedPacket {
                    truth,
                    estimate,
                    timestamp_ns: i as u64 * spacing_ns,
                })
            })
            .collect()
    }
}

/// Simulates one acquisition of `identity` under `condition` with full
/// double-precision output (truth and estimate per packet).
pub fn simulate_acquisition(
    cfg: &SynthesisConfig,
    identity: u32,
    condition: Condition,
    acquisition: usize,
) -> Result<Vec<SimulatedPacket>, ChannelError> {
    let synth = Synthesizer::new(cfg)?;
    let f = synth.fingerprint(identity);
    synth.acquisition(&f, condition, acquisition)
}

fn to_sample(
    p: &SimulatedPacket,
    geometry: ArrayGeometry,
    identity: u32,
    condition: Condition,
    noise_floor_dbm: f32,
) -> CsiSample {
    let mut h = vec![Complex32::new(0.0, 0.0); geometry.n_gains()];
    for (k, m) in p.estimate.matrices.iter().enumerate() {
        for rx in 0..geometry.n_rx {
            for tx in 0..geometry.n_tx {
                let z = m[(rx, tx)];
                h[geometry.gain_index(rx, tx, k)] = Complex32::new(z.re as f32, z.im as f32);
            }
        }
    }
    CsiSample {
        geometry,
        h,
        noise_floor_dbm,
        timestamp_ns: p.timestamp_ns,
        identity,
        condition,
    }
}

/// Generates the full dataset: for every identity × condition × acquisition,
/// `packets_per_acquisition` estimated channels. Identity 0 is recorded only
/// under [`Condition::Empty`], person identities only under the other
/// requested conditions.
///
/// Output is ordered by (identity, condition, acquisition, packet) and is a
/// pure function of `cfg`; acquisitions use independent RNG substreams, so the
/// parallel evaluation order does not matter. Timestamps restart at zero with
/// each acquisition.
pub fn generate_dataset(cfg: &SynthesisConfig) -> Result<CsiLog, ChannelError> {
    let synth = Synthesizer::new(cfg)?;
    let fingerprints: Vec<IdentityFingerprint> =
        (0..=cfg.identities).map(|u| synth.fingerprint(u)).collect();
    let noise_floor = cfg.noise_floor_dbm() as f32;
    let jobs = cfg.acquisitions();

    let chunks = jobs
        .par_iter()
        .map(|&(identity, condition, acq)| {
            let packets = synth.acquisition(&fingerprints[identity as usize], condition, acq)?;
            Ok(packets
                .iter()
                .map(|p| to_sample(p, cfg.geometry, identity, condition, noise_floor))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, ChannelError>>()?;

    let mut log = CsiLog::new(cfg.geometry);
    log.samples.reserve(cfg.record_count());
    for chunk in chunks {
        log.samples.extend(chunk);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{channel_response, draw_fingerprint};
    use crate::csi::write_log;

    fn small() -> SynthesisConfig {
        SynthesisConfig {
            identities: 3,
            acquisitions_per_condition: 2,
            packets_per_acquisition: 5,
            ..SynthesisConfig::default()
        }
    }

    #[test]
    fn default_counts_follow_the_protocol() {
        let cfg = SynthesisConfig::default();
        // 50 identities x 4 person conditions x 3 acquisitions x 200 packets,
        // plus 3 x 200 empty-path packets.
        assert_eq!(cfg.record_count(), 120_000 + 600);
    }

    #[test]
    fn minimal_config_emits_exactly_the_requested_packets() {
        let cfg = SynthesisConfig {
            identities: 1,
            conditions: vec![Condition::StandingFacing],
            acquisitions_per_condition: 1,
            packets_per_acquisition: 10,
            ..SynthesisConfig::default()
        };
        let log = generate_dataset(&cfg).unwrap();
        assert_eq!(log.record_count(), 10);
        assert!(log.samples.iter().all(|s| s.identity == 1));
        assert!(log.samples.iter().all(|s| s.condition == Condition::StandingFacing));
    }

    #[test]
    fn layout_and_timestamps() {
        let cfg = small();
        let log = generate_dataset(&cfg).unwrap();
        assert_eq!(log.record_count(), cfg.record_count());
        assert_eq!(log.record_count(), (1 + 3 * 4) * 2 * 5);
        let first = &log.samples[0];
        assert_eq!((first.identity, first.condition), (0, Condition::Empty));
        let keys: Vec<_> = log
            .samples
            .iter()
            .map(|s| (s.identity, s.condition))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let spacing = 600_000_000;
        for (i, s) in log.samples[..10].iter().enumerate() {
            assert_eq!(s.timestamp_ns, (i % 5) as u64 * spacing);
        }
        assert!((first.noise_floor_dbm - -20.0).abs() < 1e-6);
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let cfg = small();
        let bytes = |c: &SynthesisConfig| {
            let mut out = Vec::new();
            write_log(&generate_dataset(c).unwrap(), &mut out).unwrap();
            out
        };
        let a = bytes(&cfg);
        assert_eq!(a, bytes(&cfg));
        let other = SynthesisConfig {
            master_seed: 7,
            ..small()
        };
        assert_ne!(a, bytes(&other));
    }

    #[test]
    fn noiseless_estimates_match_the_channel() {
        let cfg = SynthesisConfig {
            noise: NoiseModel::new(1e-30, 0.0).unwrap(),
            pose_delay_jitter_ns: 0.0,
            pose_gain_jitter: 0.0,
            packets_per_acquisition: 4,
            ..SynthesisConfig::default()
        };
        let expected = channel_response(&draw_fingerprint(5, cfg.geometry, cfg.master_seed), &cfg)
            .unwrap();
        for p in simulate_acquisition(&cfg, 5, Condition::StandingAway, 1).unwrap() {
            assert!(p.estimate.max_abs_diff(&p.truth) < 1e-9);
            assert!(p.truth.max_abs_diff(&expected) < 1e-12);
        }
        for p in simulate_acquisition(&cfg, 5, Condition::WalkRL, 0).unwrap() {
            assert!(p.estimate.max_abs_diff(&p.truth) < 1e-9);
        }
    }

    #[test]
    fn stored_gains_are_the_estimate_in_single_precision() {
        let cfg = small();
        let log = generate_dataset(&cfg).unwrap();
        let packets = simulate_acquisition(&cfg, 2, Condition::WalkLR, 1).unwrap();
        let stored: Vec<_> = log
            .samples
            .iter()
            .filter(|s| s.identity == 2 && s.condition == Condition::WalkLR)
            .skip(5)
            .collect();
        assert_eq!(stored.len(), 5);
        let g = cfg.geometry;
        for (s, p) in stored.iter().zip(&packets) {
            for k in 0..g.n_subcarriers {
                for rx in 0..g.n_rx {
                    for tx in 0..g.n_tx {
                        let z = p.estimate.matrices[k][(rx, tx)];
                        assert_eq!(s.gain(rx, tx, k), Complex32::new(z.re as f32, z.im as f32));
                    }
                }
            }
        }
    }

    #[test]
    fn acquisitions_of_one_subject_differ() {
        let cfg = SynthesisConfig {
            noise: NoiseModel::new(1e-30, 0.0).unwrap(),
            packets_per_acquisition: 1,
            ..SynthesisConfig::default()
        };
        let a = simulate_acquisition(&cfg, 3, Condition::StandingFacing, 0).unwrap();
        let b = simulate_acquisition(&cfg, 3, Condition::StandingFacing, 1).unwrap();
        assert!(a[0].truth.max_abs_diff(&b[0].truth) > 1e-4);
    }

    #[test]
    fn key_value_config() {
        let cfg = SynthesisConfig::from_key_values(
            "identities = 4\nconditions = empty,walk-lr\npackets = 7\nnoise_power = 0.5\nseed = 9",
        )
        .unwrap();
        assert_eq!(cfg.identities, 4);
        assert_eq!(cfg.conditions, vec![Condition::Empty, Condition::WalkLR]);
        assert_eq!(cfg.packets_per_acquisition, 7);
        assert_eq!(cfg.noise.noise_power_linear, 0.5);
        assert_eq!(cfg.master_seed, 9);
        assert!(SynthesisConfig::from_key_values("bogus = 1").is_err());
        assert!(SynthesisConfig::from_key_values("conditions = sitting").is_err());
        assert!(SynthesisConfig::from_key_values("packets = many").is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            SynthesisConfig {
                identities: 0,
                ..small()
            },
            SynthesisConfig {
                packets_per_acquisition: 0,
                ..small()
            },
            SynthesisConfig {
                acquisition_duration_s: 0.0,
                ..small()
            },
            SynthesisConfig {
                pilot_count: 1,
                ..small()
            },
        ];
        for cfg in bad {
            assert!(matches!(
                generate_dataset(&cfg),
                Err(ChannelError::InvalidConfig(_))
            ));
        }
    }
}
