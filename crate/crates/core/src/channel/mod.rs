//! Synthetic MIMO-OFDM channel measurements.
//!
//! A person between transmitter and receiver is modelled as an
//! [`IdentityFingerprint`]: the direct path (attenuated by the body) plus a
//! handful of identity-specific reflections. Per packet the simulator
//! evaluates the frequency response on the subcarrier grid, optionally applies
//! motion-induced phase drift, sends a known pilot block through the channel
//! with additive noise (`Y = H·P + N`) and recovers `H` with least squares.

mod estimation;
mod fingerprint;
mod propagation;
mod synth;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::csi::ArrayGeometry;

pub use estimation::{
    estimate_channel, perturb_estimate, transmit, LsEstimator, NoiseModel, PilotSequence,
};
pub use fingerprint::{
    draw_fingerprint, draw_fingerprint_with, FingerprintProfile, IdentityFingerprint,
    PropagationPath,
};
pub use propagation::{apply_motion, channel_response, channel_response_on, subcarrier_frequencies};
pub use synth::{generate_dataset, simulate_acquisition, SimulatedPacket, SynthesisConfig};

/// Dense complex matrix.
pub type CMatrix = DMatrix<Complex64>;

/// One `n_rx × n_tx` channel matrix per subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelResponse {
    pub geometry: ArrayGeometry,
    pub matrices: Vec<CMatrix>,
}

impl ChannelResponse {
    pub fn zeros(geometry: ArrayGeometry) -> Self {
        Self {
            geometry,
            matrices: vec![CMatrix::zeros(geometry.n_rx, geometry.n_tx); geometry.n_subcarriers],
        }
    }

    /// Largest entrywise absolute difference to `other`.
    pub fn max_abs_diff(&self, other: &ChannelResponse) -> f64 {
        self.matrices
            .iter()
            .zip(&other.matrices)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }

    /// Total channel energy `Σ_k ‖H(k)‖_F²`.
    pub fn energy(&self) -> f64 {
        self.matrices.iter().map(|m| m.norm_squared()).sum()
    }
}

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("geometry mismatch: expected {expected}, found {found}")]
    GeometryMismatch {
        expected: ArrayGeometry,
        found: ArrayGeometry,
    },
    #[error("shape mismatch in {what}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("pilot matrix is rank deficient: rank {rank} < {required} transmit antennas, P·Pᴴ is singular")]
    RankDeficient { rank: usize, required: usize },
    #[error("invalid synthesis configuration: {0}")]
    InvalidConfig(String),
}
