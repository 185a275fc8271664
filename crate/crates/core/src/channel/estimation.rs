use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{CMatrix, ChannelError, ChannelResponse};
use crate::csi::ArrayGeometry;

/// Known pilot block `P = [p_1 … p_N]`, one column per transmitted vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSequence {
    /// `n_tx × N_pilots`.
    pub matrix: CMatrix,
    /// Mean per-symbol power `E|p|²`.
    pub power: f64,
}

impl PilotSequence {
    /// Validates `N_pilots ≥ n_tx` and full row rank.
    pub fn new(matrix: CMatrix) -> Result<Self, ChannelError> {
        let (n_tx, n_pilots) = matrix.shape();
        if n_tx == 0 || n_pilots < n_tx {
            return Err(ChannelError::RankDeficient {
                rank: n_pilots.min(n_tx),
                required: n_tx.max(1),
            });
        }
        let power = matrix.iter().map(|z| z.norm_sqr()).sum::<f64>() / (n_tx * n_pilots) as f64;
        let pilots = Self { matrix, power };
        let rank = pilots.rank();
        if rank < n_tx {
            return Err(ChannelError::RankDeficient {
                rank,
                required: n_tx,
            });
        }
        Ok(pilots)
    }

    /// DFT pilots `P[i][n] = √power · exp(-i 2π i n / N)`; rows are mutually
    /// orthogonal, so `P·Pᴴ = N·power·I`.
    pub fn orthogonal(n_tx: usize, n_pilots: usize, power: f64) -> Result<Self, ChannelError> {
        if !(power > 0.0 && power.is_finite()) {
            return Err(ChannelError::InvalidConfig(format!(
                "pilot power must be positive, got {power}"
            )));
        }
        let amp = power.sqrt();
        let matrix = CMatrix::from_fn(n_tx, n_pilots, |i, n| {
            Complex64::from_polar(amp, -TAU * (i * n) as f64 / n_pilots as f64)
        });
        Self::new(matrix)
    }

    pub fn n_tx(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_pilots(&self) -> usize {
        self.matrix.ncols()
    }

    /// Numerical rank from the singular values of `P`.
    pub fn rank(&self) -> usize {
        let sv = self.matrix.clone().svd(false, false).singular_values;
        let max = sv.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            return 0;
        }
        let tol = max * 1e-10 * self.matrix.nrows().max(self.matrix.ncols()) as f64;
        sv.iter().filter(|&&s| s > tol).count()
    }
}

/// Receiver noise and the optional explicit estimation-error term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Per receive antenna, i.i.d. circular complex Gaussian variance σ².
    pub noise_power_linear: f64,
    /// Diagonal estimation-error covariance σ_e² I added to the estimate.
    pub estimation_error_variance: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            noise_power_linear: 0.01,
            estimation_error_variance: 0.0,
        }
    }
}

impl NoiseModel {
    pub fn new(
        noise_power_linear: f64,
        estimation_error_variance: f64,
    ) -> Result<Self, ChannelError> {
        let m = Self {
            noise_power_linear,
            estimation_error_variance,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.noise_power_linear > 0.0 && self.noise_power_linear.is_finite()) {
            return Err(ChannelError::InvalidConfig(format!(
                "noise power must be > 0, got {}",
                self.noise_power_linear
            )));
        }
        if !(self.estimation_error_variance >= 0.0 && self.estimation_error_variance.is_finite())
        {
            return Err(ChannelError::InvalidConfig(format!(
                "estimation error variance must be >= 0, got {}",
                self.estimation_error_variance
            )));
        }
        Ok(())
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Received pilot block per subcarrier: `Y(k) = H(k)·P + N(k)`.
pub fn transmit<R: Rng + ?Sized>(
    h: &ChannelResponse,
    pilots: &PilotSequence,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Vec<CMatrix>, ChannelError> {
    let g = h.geometry;
    if pilots.n_tx() != g.n_tx {
        return Err(ChannelError::ShapeMismatch {
            what: "pilot rows vs transmit antennas",
            expected: (g.n_tx, pilots.n_pilots()),
            found: pilots.matrix.shape(),
        });
    }
    h.matrices
        .iter()
        .map(|hk| {
            if hk.shape() != (g.n_rx, g.n_tx) {
                return Err(ChannelError::ShapeMismatch {
                    what: "channel matrix",
                    expected: (g.n_rx, g.n_tx),
                    found: hk.shape(),
                });
            }
            let mut y = hk * &pilots.matrix;
            for z in y.iter_mut() {
                *z += complex_gaussian(rng, noise.noise_power_linear);
            }
            Ok(y)
        })
        .collect()
}

/// Least-squares channel estimator `Ĥ = Y·Pᴴ·(P·Pᴴ)⁻¹` with the pilot-side
/// factor precomputed.
#[derive(Debug, Clone)]
pub struct LsEstimator {
    /// `Pᴴ·(P·Pᴴ)⁻¹`, `N_pilots × n_tx`.
    projector: CMatrix,
}

impl LsEstimator {
    pub fn new(pilots: &PilotSequence) -> Result<Self, ChannelError> {
        let n_tx = pilots.n_tx();
        let rank = pilots.rank();
        if rank < n_tx {
            return Err(ChannelError::RankDeficient {
                rank,
                required: n_tx,
            });
        }
        let p_h = pilots.matrix.adjoint();
        let gram = &pilots.matrix * &p_h;
        let inv = gram.try_inverse().ok_or(ChannelError::RankDeficient {
            rank: rank.saturating_sub(1),
            required: n_tx,
        })?;
        Ok(Self {
            projector: p_h * inv,
        })
    }

    pub fn estimate(&self, received: &[CMatrix]) -> Result<ChannelResponse, ChannelError> {
        let (n_pilots, n_tx) = self.projector.shape();
        let n_rx = received.first().map_or(0, |y| y.nrows());
        let matrices = received
            .iter()
            .map(|y| {
                if y.shape() != (n_rx, n_pilots) {
                    return Err(ChannelError::ShapeMismatch {
                        what: "received block",
                        expected: (n_rx, n_pilots),
                        found: y.shape(),
                    });
                }
                Ok(y * &self.projector)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ChannelResponse {
            geometry: ArrayGeometry::new(n_tx, n_rx, received.len()),
            matrices,
        })
    }
}

/// Recovers `H(k)` from `Y(k)` and the known pilots; minimizes
/// `‖Y(k) − H·P‖_F` independently per subcarrier.
pub fn estimate_channel(
    received: &[CMatrix],
    pilots: &PilotSequence,
) -> Result<ChannelResponse, ChannelError> {
    LsEstimator::new(pilots)?.estimate(received)
}

/// Adds an explicit `CN(0, σ_e²)` error to every entry of an estimate.
pub fn perturb_estimate<R: Rng + ?Sized>(h: &mut ChannelResponse, variance: f64, rng: &mut R) {
    if variance <= 0.0 {
        return;
    }
    for m in &mut h.matrices {
        for z in m.iter_mut() {
            *z += complex_gaussian(rng, variance);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn random_response(rng: &mut ChaCha8Rng, g: ArrayGeometry) -> ChannelResponse {
        ChannelResponse {
            geometry: g,
            matrices: (0..g.n_subcarriers)
                .map(|_| random_matrix(rng, g.n_rx, g.n_tx))
                .collect(),
        }
    }

    const SILENT: NoiseModel = NoiseModel {
        noise_power_linear: 1e-30,
        estimation_error_variance: 0.0,
    };

    #[test]
    fn dft_pilots_are_orthogonal() {
        let p = PilotSequence::orthogonal(2, 4, 1.0).unwrap();
        let gram = &p.matrix * p.matrix.adjoint();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 4.0 } else { 0.0 };
                assert!((gram[(i, j)] - Complex64::new(want, 0.0)).norm() < 1e-12);
            }
        }
        assert!((p.power - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_transmission_is_h_times_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_response(&mut rng, ArrayGeometry::default());
        let p = PilotSequence::orthogonal(2, 4, 1.0).unwrap();
        let y = transmit(&h, &p, &SILENT, &mut rng).unwrap();
        for (yk, hk) in y.iter().zip(&h.matrices) {
            assert!((yk - hk * &p.matrix).iter().all(|z| z.norm() < 1e-10));
        }
    }

    #[test]
    fn identity_pilots_return_the_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_response(&mut rng, ArrayGeometry::default());
        let p = PilotSequence::new(CMatrix::identity(2, 2)).unwrap();
        let y = transmit(&h, &p, &SILENT, &mut rng).unwrap();
        for (yk, hk) in y.iter().zip(&h.matrices) {
            assert!((yk - hk).iter().all(|z| z.norm() < 1e-14));
        }
    }

    #[test]
    fn pure_noise_has_the_configured_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = ArrayGeometry::new(1, 1, 1);
        let h = ChannelResponse::zeros(g);
        let p = PilotSequence::new(CMatrix::identity(1, 1)).unwrap();
        let noise = NoiseModel::new(0.25, 0.0).unwrap();
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let y = transmit(&h, &p, &noise, &mut rng).unwrap();
            acc += y[0][(0, 0)].norm_sqr();
        }
        let var = acc / n as f64;
        assert!((var - 0.25).abs() / 0.25 < 0.05, "sample variance {var}");
    }

    #[test]
    fn noiseless_estimate_recovers_the_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = ArrayGeometry::default();
        for _ in 0..20 {
            let h = random_response(&mut rng, g);
            let p = PilotSequence::new(random_matrix(&mut rng, 2, 5)).unwrap();
            let y: Vec<CMatrix> = h.matrices.iter().map(|hk| hk * &p.matrix).collect();
            let est = estimate_channel(&y, &p).unwrap();
            assert!(est.max_abs_diff(&h) < 1e-9);
            assert_eq!(est.geometry, g);
        }
    }

    #[test]
    fn orthogonal_shortcut_matches_general_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = ArrayGeometry::default();
        let h = random_response(&mut rng, g);
        let p = PilotSequence::orthogonal(2, 4, 2.0).unwrap();
        let y = transmit(&h, &p, &NoiseModel::default(), &mut rng).unwrap();
        let general = estimate_channel(&y, &p).unwrap();
        let c = 4.0 * 2.0;
        for (yk, gk) in y.iter().zip(&general.matrices) {
            let shortcut = yk * p.matrix.adjoint() / Complex64::new(c, 0.0);
            assert!((shortcut - gk).iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn duplicated_pilot_columns_are_rank_deficient() {
        let col = [Complex64::new(1.0, 0.0), Complex64::new(0.5, -0.5)];
        let m = CMatrix::from_fn(2, 4, |i, _| col[i]);
        assert!(matches!(
            PilotSequence::new(m.clone()),
            Err(ChannelError::RankDeficient { rank: 1, required: 2 })
        ));
        let bad = PilotSequence { matrix: m, power: 1.0 };
        let y = vec![CMatrix::zeros(3, 4); 30];
        let err = estimate_channel(&y, &bad).unwrap_err();
        assert!(matches!(err, ChannelError::RankDeficient { rank: 1, required: 2 }));
        assert!(err.to_string().contains("singular"));
    }

    #[test]
    fn too_few_pilots_are_rejected() {
        assert!(PilotSequence::orthogonal(3, 2, 1.0).is_err());
    }

    #[test]
    fn least_squares_beats_random_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = ArrayGeometry::new(2, 3, 1);
        let h = random_response(&mut rng, g);
        let p = PilotSequence::new(random_matrix(&mut rng, 2, 4)).unwrap();
        let noise = NoiseModel::new(0.1, 0.0).unwrap();
        let y = transmit(&h, &p, &noise, &mut rng).unwrap();
        let est = estimate_channel(&y, &p).unwrap();
        let residual = |hk: &CMatrix| (&y[0] - hk * &p.matrix).norm_squared();
        let best = residual(&est.matrices[0]);
        for _ in 0..1000 {
            let delta = random_matrix(&mut rng, 3, 2) * Complex64::new(1e-3, 0.0);
            assert!(best <= residual(&(&est.matrices[0] + delta)));
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let h = ChannelResponse::zeros(ArrayGeometry::default());
        let p = PilotSequence::orthogonal(3, 4, 1.0).unwrap();
        assert!(matches!(
            transmit(&h, &p, &NoiseModel::default(), &mut ChaCha8Rng::seed_from_u64(0)),
            Err(ChannelError::ShapeMismatch { .. })
        ));
        let p = PilotSequence::orthogonal(2, 4, 1.0).unwrap();
        let y = vec![CMatrix::zeros(3, 4), CMatrix::zeros(3, 3)];
        assert!(estimate_channel(&y, &p).is_err());
    }

    #[test]
    fn noise_model_validation() {
        assert!(NoiseModel::new(0.0, 0.0).is_err());
        assert!(NoiseModel::new(0.1, -1.0).is_err());
        assert!(NoiseModel::new(0.1, 0.0).is_ok());
    }
}
