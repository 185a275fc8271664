use thiserror::Error;

use crate::channel::ChannelError;
use crate::csi::FormatError;
use crate::mlp::MlpError;
use crate::reid::EvalError;
use crate::snr::SnrError;

/// Top-level error for callers that drive the whole pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Snr(#[from] SnrError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid dataset: {0}")]
    Dataset(String),
}

pub type Result<T> = std::result::Result<T, Error>;
