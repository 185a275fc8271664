use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{CMatrix, ChannelError, ChannelResponse, IdentityFingerprint, SynthesisConfig};
use crate::csi::Condition;

/// Centre frequency of every subcarrier, Hz:
/// `f_k = carrier + (k - (K+1)/2) * spacing` for `k = 1..=K`.
pub fn subcarrier_frequencies(cfg: &SynthesisConfig) -> Vec<f64> {
    let k_total = cfg.geometry.n_subcarriers;
    let centre = (k_total as f64 + 1.0) / 2.0;
    (1..=k_total)
        .map(|k| cfg.carrier_hz + (k as f64 - centre) * cfg.subcarrier_spacing_hz)
        .collect()
}

/// Frequency response `H(k)_{j,i} = Σ_p a_p^{(j,i)} exp(-i 2π f_k τ_p)` on the
/// configured subcarrier grid.
pub fn channel_response(
    f: &IdentityFingerprint,
    cfg: &SynthesisConfig,
) -> Result<ChannelResponse, ChannelError> {
    if f.geometry != cfg.geometry {
        return Err(ChannelError::GeometryMismatch {
            expected: cfg.geometry,
            found: f.geometry,
        });
    }
    Ok(channel_response_on(f, &subcarrier_frequencies(cfg)))
}

/// Same as [`channel_response`] for an explicit frequency grid; the number of
/// subcarriers is `freqs_hz.len()`.
pub fn channel_response_on(f: &IdentityFingerprint, freqs_hz: &[f64]) -> ChannelResponse {
    let g = f.geometry;
    let gains: Vec<Vec<Complex64>> = (0..f.paths.len())
        .map(|p| {
            (0..g.n_pairs())
                .map(|pair| f.effective_gain(p, pair / g.n_tx, pair % g.n_tx))
                .collect()
        })
        .collect();

    let matrices = freqs_hz
        .iter()
        .map(|&fk| {
            let mut h = CMatrix::zeros(g.n_rx, g.n_tx);
            for (path, a) in f.paths.iter().zip(&gains) {
                let phasor = Complex64::from_polar(1.0, -TAU * fk * path.delay_ns * 1e-9);
                for rx in 0..g.n_rx {
                    for tx in 0..g.n_tx {
                        h[(rx, tx)] += a[rx * g.n_tx + tx] * phasor;
                    }
                }
            }
            h
        })
        .collect();

    let mut geometry = g;
    geometry.n_subcarriers = freqs_hz.len();
    ChannelResponse { geometry, matrices }
}

/// Motion-induced phase drift for one packet.
///
/// Walking conditions rotate every propagation path by an independent phase
/// drawn from `N(0, jitter²)`; each path keeps its modulus while the paths
/// decorrelate, so the summed channel fluctuates from packet to packet.
/// Standing and empty conditions (and `jitter == 0`) return the fingerprint
/// unchanged without consuming randomness.
pub fn apply_motion<R: Rng + ?Sized>(
    f: &IdentityFingerprint,
    condition: Condition,
    jitter_rad: f64,
    rng: &mut R,
) -> IdentityFingerprint {
    if !condition.is_walking() || jitter_rad <= 0.0 {
        return f.clone();
    }
    let drift = Normal::new(0.0, jitter_rad).expect("jitter is positive and finite");
    let mut moved = f.clone();
    for path in &mut moved.paths {
        let rot = Complex64::from_polar(1.0, drift.sample(rng));
        for g in &mut path.gains {
            *g *= rot;
        }
    }
    moved
}
