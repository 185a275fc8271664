use std::fmt;
use std::process::ExitCode;

use csireid::channel::ChannelError;
use csireid::mlp::MlpError;
use csireid::reid::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad flags or configuration.
    Usage,
    /// Unreadable, malformed or incompatible input data.
    Data,
    /// Training or inference produced non-finite values.
    Numeric,
}

impl Kind {
    pub fn exit_code(self) -> ExitCode {
        match self {
            Kind::Usage => ExitCode::from(2),
            Kind::Data => ExitCode::from(3),
            Kind::Numeric => ExitCode::from(4),
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(kind: Kind, error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind,
            error: error.into(),
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        Self::new(Kind::Usage, anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Self::new(Kind::Data, anyhow::anyhow!("{msg}"))
    }

    pub fn context(mut self, ctx: impl fmt::Display + Send + Sync + 'static) -> Self {
        self.error = self.error.context(ctx);
        self
    }
}

fn mlp_kind(e: &MlpError) -> Kind {
    match e {
        MlpError::NonFinite(_) => Kind::Numeric,
        MlpError::InvalidConfig(_) | MlpError::InvalidArchitecture(_) => Kind::Usage,
        _ => Kind::Data,
    }
}

impl From<MlpError> for Failure {
    fn from(e: MlpError) -> Self {
        Failure::new(mlp_kind(&e), e)
    }
}

impl From<ChannelError> for Failure {
    fn from(e: ChannelError) -> Self {
        Failure::new(Kind::Usage, e)
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let kind = match &e {
            EvalError::InvalidFraction(_) | EvalError::ZeroPacketsPerProbe => Kind::Usage,
            EvalError::Model(m) => mlp_kind(m),
            _ => Kind::Data,
        };
        Failure::new(kind, e)
    }
}

impl From<csireid::Error> for Failure {
    fn from(e: csireid::Error) -> Self {
        match e {
            csireid::Error::Mlp(m) => m.into(),
            csireid::Error::Channel(c) => c.into(),
            csireid::Error::Eval(v) => v.into(),
            other => Failure::new(Kind::Data, other),
        }
    }
}

impl From<csireid::csi::FormatError> for Failure {
    fn from(e: csireid::csi::FormatError) -> Self {
        Failure::new(Kind::Data, e)
    }
}

pub type CliResult<T> = Result<T, Failure>;
