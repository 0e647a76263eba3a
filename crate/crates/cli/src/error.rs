//! Exit statuses. The numbers are part of the interface.

use std::fmt;
use std::path::Path;

use ppress::analysis::AnalysisError;
use ppress::bench::BenchError;
use ppress::container::ContainerError;
use ppress::model::PredictorError;
use ppress::predictors::RegistryError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_REMOTE: i32 = 4;
pub const EXIT_DIGEST: i32 = 5;
pub const EXIT_TOOL: i32 = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Failure {
    Usage(String),
    Io(String),
    Remote(String),
    Digest(String),
    Tool(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Io(_) => EXIT_IO,
            Failure::Remote(_) => EXIT_REMOTE,
            Failure::Digest(_) => EXIT_DIGEST,
            Failure::Tool(_) => EXIT_TOOL,
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Failure::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m)
            | Failure::Io(m)
            | Failure::Remote(m)
            | Failure::Digest(m)
            | Failure::Tool(m) => f.write_str(m),
        }
    }
}

fn predictor(e: &PredictorError) -> fn(String) -> Failure {
    match e {
        PredictorError::RemoteUnavailable(_)
        | PredictorError::RemoteProtocolViolation(_)
        | PredictorError::ContextOverflow { .. } => Failure::Remote,
        PredictorError::InvalidSymbol { .. } => Failure::Digest,
    }
}

impl From<ContainerError> for Failure {
    fn from(e: ContainerError) -> Self {
        let kind: fn(String) -> Failure = match &e {
            e if e.is_corruption() => Failure::Digest,
            ContainerError::Predictor(p)
            | ContainerError::Registry(RegistryError::Predictor(p)) => predictor(p),
            ContainerError::Registry(RegistryError::NoEndpoint) => Failure::Remote,
            ContainerError::Registry(RegistryError::UnknownPredictor(_)) => Failure::Usage,
            ContainerError::TokenizerMismatch | ContainerError::TokenizationNotInvertible => {
                Failure::Remote
            }
            ContainerError::ChunkExceedsWindow { .. } => Failure::Usage,
            _ => Failure::Digest,
        };
        kind(e.to_string())
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Io { .. } => Failure::Io(e.to_string()),
            BenchError::Internal {
                error,
                corpus,
                compressor,
            } => {
                let inner = Failure::from(error);
                let msg = format!("{compressor} on {corpus}: {inner}");
                match inner {
                    Failure::Usage(_) => Failure::Usage(msg),
                    Failure::Io(_) => Failure::Io(msg),
                    Failure::Remote(_) => Failure::Remote(msg),
                    Failure::Digest(_) => Failure::Digest(msg),
                    Failure::Tool(_) => Failure::Tool(msg),
                }
            }
            BenchError::CorpusDigest { .. }
            | BenchError::Verification { .. }
            | BenchError::Nondeterministic { .. } => Failure::Digest(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        Failure::Usage(e.to_string())
    }
}
