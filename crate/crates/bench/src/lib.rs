//! Fixtures shared by the pipeline benchmarks.

use csireid::channel::{channel_response, draw_fingerprint, CMatrix, PilotSequence};
use csireid::csi::{Condition, CsiLog};
use csireid::mlp::{Matrix, MlpArchitecture, MlpModel};
use csireid::{generate_dataset, FeatureMode, FeatureSet, SynthesisConfig};

/// Small standing dataset: `identities` people, one acquisition each of
/// `packets` packets, plus the empty path.
pub fn standing_config(identities: u32, packets: usize) -> SynthesisConfig {
    SynthesisConfig {
        identities,
        conditions: vec![Condition::Empty, Condition::StandingFacing],
        acquisitions_per_condition: 1,
        packets_per_acquisition: packets,
        ..SynthesisConfig::default()
    }
}

pub fn standing_log(identities: u32, packets: usize) -> CsiLog {
    generate_dataset(&standing_config(identities, packets)).expect("fixture generation")
}

pub fn features(log: &CsiLog) -> FeatureSet {
    FeatureSet::from_log(log, FeatureMode::MeanBroadcast).expect("fixture features")
}

/// The default 6 → 128 → 64 → `n_classes` network.
pub fn model(n_classes: usize) -> MlpModel {
    MlpModel::init(MlpArchitecture::new(6, n_classes), 1).expect("fixture model")
}

/// First `rows` rows of `set` with their labels.
pub fn batch(set: &FeatureSet, rows: usize) -> (Matrix, Vec<usize>) {
    let idx: Vec<usize> = (0..rows.min(set.len())).collect();
    (set.x.select_rows(&idx), idx.iter().map(|&i| set.labels[i]).collect())
}

/// Noiseless received pilot blocks `H(k)·P` for one identity's channel.
pub fn received_blocks(pilots: &PilotSequence) -> Vec<CMatrix> {
    let cfg = SynthesisConfig::default();
    let f = draw_fingerprint(3, cfg.geometry, cfg.master_seed);
    let h = channel_response(&f, &cfg).expect("fixture channel");
    h.matrices.iter().map(|hk| hk * &pilots.matrix).collect()
}
