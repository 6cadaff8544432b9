use std::fmt;

use msr_core::basecodec::BaseCodecError;
use msr_core::bilevel::BilevelError;
use msr_core::channel::ChannelError;
use msr_core::infotheory::InfoError;
use msr_core::metagen::MetaError;
use msr_core::metrics::MetricError;
use msr_core::pixel::{PixelError, PnmError};
use msr_core::rdo::RdoError;
use msr_core::receiver::ReceiverError;

/// Failure classes and their process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage = 1,
    Io = 2,
    Format = 3,
    Internal = 4,
    NoOverlap = 5,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub message: String,
}

impl Failure {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Kind::Usage, message)
    }

    pub fn format(message: impl Into<String>) -> Self {
        Self::new(Kind::Format, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(Kind::Internal, message)
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }

    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type Result<T> = std::result::Result<T, Failure>;

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new(Kind::Io, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::format(e.to_string())
    }
}

impl From<PnmError> for Failure {
    fn from(e: PnmError) -> Self {
        Self::format(e.to_string())
    }
}

impl From<PixelError> for Failure {
    fn from(e: PixelError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<BaseCodecError> for Failure {
    fn from(e: BaseCodecError) -> Self {
        match e {
            BaseCodecError::Quality(_) => Self::usage(e.to_string()),
            _ => Self::format(e.to_string()),
        }
    }
}

impl From<BilevelError> for Failure {
    fn from(e: BilevelError) -> Self {
        Self::format(e.to_string())
    }
}

impl From<MetaError> for Failure {
    fn from(e: MetaError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<ChannelError> for Failure {
    fn from(e: ChannelError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<ReceiverError> for Failure {
    fn from(e: ReceiverError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<MetricError> for Failure {
    fn from(e: MetricError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<InfoError> for Failure {
    fn from(e: InfoError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<RdoError> for Failure {
    fn from(e: RdoError) -> Self {
        match e {
            RdoError::NoOverlap(_) => Self::new(Kind::NoOverlap, e.to_string()),
            RdoError::Parse(_) | RdoError::Additivity { .. } => Self::format(e.to_string()),
            RdoError::Base(inner) => inner.into(),
            RdoError::Bilevel(inner) => inner.into(),
            _ => Self::usage(e.to_string()),
        }
    }
}
