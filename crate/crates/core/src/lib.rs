//! Device-free person re-identification from Wi-Fi channel state information.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`channel`] synthesizes MIMO-OFDM channel measurements for a population of
//!    identities (multipath fingerprints, pilot transmission, least-squares
//!    channel estimation) and emits them as a [`csi::CsiLog`].
//! 2. [`snr`] maps every packet's complex channel matrices to per-antenna-pair
//!    SNR features in dB.
//! 3. [`mlp`] trains a two-hidden-layer perceptron (batch norm, LeakyReLU,
//!    softmax, cross-entropy, Adam) on those features.
//! 4. [`reid`] splits data, scores probes and computes rank-k accuracies and
//!    CMC curves.
//!
//! [`dataset`] glues a parsed log to the classifier input.

pub mod channel;
pub mod csi;
pub mod dataset;
pub mod error;
pub mod kv;
pub mod mlp;
pub mod reid;
pub mod snr;

pub use channel::{
    generate_dataset, ChannelResponse, IdentityFingerprint, NoiseModel, PilotSequence,
    SynthesisConfig,
};
pub use csi::{parse_log, write_log, ArrayGeometry, Condition, CsiLog, CsiSample};
pub use dataset::FeatureSet;
pub use error::{Error, Result};
pub use mlp::{MlpArchitecture, MlpModel, TrainConfig};
pub use reid::{Aggregation, EvalReport, SplitSpec};
pub use snr::{FeatureMode, SnrFeature};
