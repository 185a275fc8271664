use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::csi::{ArrayGeometry, EMPTY_IDENTITY};

// Substream tags. The room stream is shared by every identity drawn with the
// same seed; identity streams are disjoint from it and from each other.
const ROOM_STREAM: u64 = 1 << 63;
const IDENTITY_STREAM: u64 = 1 << 62;

/// One propagation path with a gain per (rx, tx) antenna pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationPath {
    pub delay_ns: f64,
    /// Indexed `rx * n_tx + tx`.
    pub gains: Vec<Complex64>,
}

/// Multipath ground truth for one identity. `paths[0]` is the direct path.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityFingerprint {
    pub identity: u32,
    pub geometry: ArrayGeometry,
    pub paths: Vec<PropagationPath>,
    /// Body shadowing of the direct path, dB, applied by the channel response.
    pub body_attenuation_db: f64,
    pub seed: u64,
}

impl IdentityFingerprint {
    pub fn is_empty_path(&self) -> bool {
        self.identity == EMPTY_IDENTITY
    }

    /// Gain of path `p` for antenna pair `(rx, tx)`, body attenuation included.
    pub fn effective_gain(&self, p: usize, rx: usize, tx: usize) -> Complex64 {
        let g = self.paths[p].gains[rx * self.geometry.n_tx + tx];
        if p == 0 {
            g * 10f64.powf(-self.body_attenuation_db / 20.0)
        } else {
            g
        }
    }
}

/// Ranges the per-identity parameters are drawn from (uniformly).
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintProfile {
    pub direct_delay_ns: f64,
    pub body_attenuation_db: (f64, f64),
    pub reflected_paths: (usize, usize),
    pub excess_delay_ns: (f64, f64),
    pub reflection_gain: (f64, f64),
}

impl Default for FingerprintProfile {
    fn default() -> Self {
        Self {
            direct_delay_ns: 10.0,
            body_attenuation_db: (1.0, 6.0),
            reflected_paths: (2, 6),
            excess_delay_ns: (5.0, 150.0),
            reflection_gain: (0.1, 0.5),
        }
    }
}

/// Draws the fingerprint of `identity` with the default profile.
pub fn draw_fingerprint(identity: u32, geometry: ArrayGeometry, seed: u64) -> IdentityFingerprint {
    draw_fingerprint_with(identity, geometry, seed, &FingerprintProfile::default())
}

/// Deterministic in `(identity, geometry, seed, profile)`. Identity 0 is the
/// unobstructed link: direct path only, no body attenuation.
pub fn draw_fingerprint_with(
    identity: u32,
    geometry: ArrayGeometry,
    seed: u64,
    profile: &FingerprintProfile,
) -> IdentityFingerprint {
    let pairs = geometry.n_pairs();

    let mut room = ChaCha8Rng::seed_from_u64(seed);
    room.set_stream(ROOM_STREAM);
    let direct = PropagationPath {
        delay_ns: profile.direct_delay_ns,
        gains: (0..pairs)
            .map(|_| Complex64::from_polar(1.0, room.random_range(0.0..TAU)))
            .collect(),
    };

    if identity == EMPTY_IDENTITY {
        return IdentityFingerprint {
            identity,
            geometry,
            paths: vec![direct],
            body_attenuation_db: 0.0,
            seed,
        };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(IDENTITY_STREAM | u64::from(identity));
    let (att_lo, att_hi) = profile.body_attenuation_db;
    let body_attenuation_db = rng.random_range(att_lo..=att_hi);
    let (n_lo, n_hi) = profile.reflected_paths;
    let n_reflected = rng.random_range(n_lo..=n_hi);
    let (d_lo, d_hi) = profile.excess_delay_ns;
    let (g_lo, g_hi) = profile.reflection_gain;

    let mut paths = Vec::with_capacity(1 + n_reflected);
    paths.push(direct);
    for _ in 0..n_reflected {
        let delay_ns = profile.direct_delay_ns + rng.random_range(d_lo..=d_hi);
        let gains = (0..pairs)
            .map(|_| {
                let mag = rng.random_range(g_lo..=g_hi);
                Complex64::from_polar(mag, rng.random_range(0.0..TAU))
            })
            .collect();
        paths.push(PropagationPath { delay_ns, gains });
    }

    IdentityFingerprint {
        identity,
        geometry,
        paths,
        body_attenuation_db,
        seed,
    }
}
