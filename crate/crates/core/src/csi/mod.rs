//! CSI domain types and the CSIR binary log format.

mod format;

use std::fmt;

use num_complex::Complex32;

pub use format::{parse_log, write_log, FormatError, HEADER_LEN, MAGIC, MAX_SEGMENT_RECORDS, VERSION};

/// Antenna counts and subcarrier count of a MIMO-OFDM link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArrayGeometry {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_subcarriers: usize,
}

impl Default for ArrayGeometry {
    /// Two transmit antennas on the router, three receive antennas on the NIC,
    /// 30 reported subcarriers.
    fn default() -> Self {
        Self {
            n_tx: 2,
            n_rx: 3,
            n_subcarriers: 30,
        }
    }
}

impl ArrayGeometry {
    pub fn new(n_tx: usize, n_rx: usize, n_subcarriers: usize) -> Self {
        Self {
            n_tx,
            n_rx,
            n_subcarriers,
        }
    }

    /// Number of (rx, tx) antenna pairs.
    pub fn n_pairs(&self) -> usize {
        self.n_tx * self.n_rx
    }

    /// Number of complex gains in one packet.
    pub fn n_gains(&self) -> usize {
        self.n_pairs() * self.n_subcarriers
    }

    /// Flat index of gain `(rx, tx, k)`: subcarrier fastest, then tx, then rx.
    #[inline]
    pub fn gain_index(&self, rx: usize, tx: usize, k: usize) -> usize {
        (rx * self.n_tx + tx) * self.n_subcarriers + k
    }

    /// Inverse of [`gain_index`](Self::gain_index).
    pub fn gain_position(&self, index: usize) -> (usize, usize, usize) {
        let k = index % self.n_subcarriers;
        let pair = index / self.n_subcarriers;
        (pair / self.n_tx, pair % self.n_tx, k)
    }

    pub fn is_valid(&self) -> bool {
        self.n_tx >= 1 && self.n_rx >= 1 && self.n_subcarriers >= 1
    }
}

impl fmt::Display for ArrayGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.n_tx, self.n_rx, self.n_subcarriers)
    }
}

/// Acquisition condition of a packet. Codes are stable on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Condition {
    Empty = 0,
    StandingFacing = 1,
    StandingAway = 2,
    WalkLR = 3,
    WalkRL = 4,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::Empty,
        Condition::StandingFacing,
        Condition::StandingAway,
        Condition::WalkLR,
        Condition::WalkRL,
    ];

    pub const PERSON: [Condition; 4] = [
        Condition::StandingFacing,
        Condition::StandingAway,
        Condition::WalkLR,
        Condition::WalkRL,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn is_walking(self) -> bool {
        matches!(self, Condition::WalkLR | Condition::WalkRL)
    }

    /// Kebab-case name used on the command line.
    pub fn name(self) -> &'static str {
        match self {
            Condition::Empty => "empty",
            Condition::StandingFacing => "standing-facing",
            Condition::StandingAway => "standing-away",
            Condition::WalkLR => "walk-lr",
            Condition::WalkRL => "walk-rl",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Identity label reserved for the empty-path measurement.
pub const EMPTY_IDENTITY: u32 = 0;

/// One packet's channel state: `n_rx × n_tx × K` complex gains and metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSample {
    pub geometry: ArrayGeometry,
    /// Linear gains, indexed by [`ArrayGeometry::gain_index`].
    pub h: Vec<Complex32>,
    pub noise_floor_dbm: f32,
    pub timestamp_ns: u64,
    pub identity: u32,
    pub condition: Condition,
}

impl CsiSample {
    pub fn gain(&self, rx: usize, tx: usize, k: usize) -> Complex32 {
        self.h[self.geometry.gain_index(rx, tx, k)]
    }

    /// Noise power in linear units (mW) from the dBm floor.
    pub fn noise_power_linear(&self) -> f64 {
        10f64.powf(f64::from(self.noise_floor_dbm) / 10.0)
    }

    /// Realistic floors are negative dBm; positive values are allowed but suspect.
    pub fn has_plausible_noise_floor(&self) -> bool {
        self.noise_floor_dbm < 0.0
    }
}

/// A type-invariant violation found by [`validate_sample`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Geometry { geometry: ArrayGeometry },
    GainCount { expected: usize, actual: usize },
    NonFiniteGain { rx: usize, tx: usize, subcarrier: usize },
    NonFiniteNoiseFloor,
}

impl Violation {
    /// Name of the offending field.
    pub fn field(&self) -> &'static str {
        match self {
            Violation::Geometry { .. } => "geometry",
            Violation::GainCount { .. } | Violation::NonFiniteGain { .. } => "h",
            Violation::NonFiniteNoiseFloor => "noise_floor_dbm",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Geometry { geometry } => {
                write!(f, "geometry: every dimension must be >= 1, got {geometry}")
            }
            Violation::GainCount { expected, actual } => {
                write!(f, "h: expected {expected} gains, found {actual}")
            }
            Violation::NonFiniteGain { rx, tx, subcarrier } => write!(
                f,
                "h: non-finite gain at (rx {rx}, tx {tx}, subcarrier {subcarrier})"
            ),
            Violation::NonFiniteNoiseFloor => f.write_str("noise_floor_dbm: not finite"),
        }
    }
}

/// Checks every type invariant of `s`. An empty result means the sample is valid.
pub fn validate_sample(s: &CsiSample) -> Vec<Violation> {
    let mut out = Vec::new();
    let g = s.geometry;
    if !g.is_valid() {
        out.push(Violation::Geometry { geometry: g });
    }
    if s.h.len() != g.n_gains() {
        out.push(Violation::GainCount {
            expected: g.n_gains(),
            actual: s.h.len(),
        });
    }
    if g.is_valid() {
        for (i, z) in s.h.iter().enumerate() {
            if !(z.re.is_finite() && z.im.is_finite()) {
                let (rx, tx, subcarrier) = g.gain_position(i);
                out.push(Violation::NonFiniteGain { rx, tx, subcarrier });
            }
        }
    }
    if !s.noise_floor_dbm.is_finite() {
        out.push(Violation::NonFiniteNoiseFloor);
    }
    out
}

/// An ordered sequence of packets sharing one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiLog {
    pub geometry: ArrayGeometry,
    pub version: u16,
    pub samples: Vec<CsiSample>,
}

impl CsiLog {
    pub fn new(geometry: ArrayGeometry) -> Self {
        Self {
            geometry,
            version: VERSION,
            samples: Vec::new(),
        }
    }

    pub fn with_samples(geometry: ArrayGeometry, samples: Vec<CsiSample>) -> Self {
        Self {
            geometry,
            version: VERSION,
            samples,
        }
    }

    pub fn record_count(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of records per condition, in condition-code order.
    pub fn condition_counts(&self) -> Vec<(Condition, usize)> {
        let mut counts = [0usize; 5];
        for s in &self.samples {
            counts[s.condition as usize] += 1;
        }
        Condition::ALL
            .into_iter()
            .zip(counts)
            .filter(|(_, n)| *n > 0)
            .collect()
    }
}
