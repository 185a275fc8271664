//! Multi-layer perceptron classifier written from scratch.
//!
//! Architecture: `input → [affine → batch norm → LeakyReLU] × 2 → affine →
//! softmax`, trained with mean cross-entropy and Adam. All math is `f64`.
//!
//! The hidden affine layers carry no bias: batch normalization subtracts the
//! batch mean right after them, so a bias there would have an identically zero
//! gradient. The batch-norm shift plays its role.

mod adam;
mod io;
mod model;
mod tensor;
mod train;

use thiserror::Error;

pub use adam::{adam_step, AdamState};
pub use io::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use model::{
    leaky_relu, BatchStats, ForwardCache, Gradients, HiddenLayer, LossAndGrad, MlpModel, Mode,
    OutputLayer,
};
pub use tensor::Matrix;
pub use train::{argmax, train, write_history_csv, EpochRecord, TrainConfig, TrainHistory};

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("feature dimension mismatch: model expects {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("batch of {0} samples is too small for batch statistics (need >= 2)")]
    BatchTooSmall(usize),
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("{features} feature rows but {labels} labels")]
    LabelCount { features: usize, labels: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?}, expected \"CSIM\"")]
    BadMagic([u8; 4]),
    #[error("unsupported CSIM version {0}")]
    UnsupportedVersion(u16),
    #[error("model file truncated while reading {0}")]
    Truncated(String),
    #[error("model file has {0} unexpected trailing bytes")]
    TrailingData(usize),
}

/// Layer sizes and hyperparameters of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_dims: [usize; 2],
    pub n_classes: usize,
    pub leaky_slope: f64,
    pub batchnorm_epsilon: f64,
    pub batchnorm_momentum: f64,
}

impl MlpArchitecture {
    /// Default hyperparameters: hidden 128/64, slope 0.01, ε 1e-5, momentum 0.9.
    pub fn new(input_dim: usize, n_classes: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: [128, 64],
            n_classes,
            leaky_slope: 0.01,
            batchnorm_epsilon: 1e-5,
            batchnorm_momentum: 0.9,
        }
    }

    pub fn with_hidden(mut self, hidden_dims: [usize; 2]) -> Self {
        self.hidden_dims = hidden_dims;
        self
    }

    pub fn validate(&self) -> Result<(), MlpError> {
        let bad = |m: &str| Err(MlpError::InvalidArchitecture(m.to_string()));
        if self.input_dim < 1 || self.n_classes < 1 || self.hidden_dims.contains(&0) {
            return bad("all layer sizes must be >= 1");
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return bad("leaky slope must lie in (0, 1)");
        }
        if self.batchnorm_epsilon.is_nan() || self.batchnorm_epsilon <= 0.0 {
            return bad("batch-norm epsilon must be > 0");
        }
        if !(0.0..=1.0).contains(&self.batchnorm_momentum) {
            return bad("batch-norm momentum must lie in [0, 1]");
        }
        Ok(())
    }

    /// `[input, hidden0, hidden1, classes]`.
    pub fn dims(&self) -> [usize; 4] {
        [
            self.input_dim,
            self.hidden_dims[0],
            self.hidden_dims[1],
            self.n_classes,
        ]
    }
}
