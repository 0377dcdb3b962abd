use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("record {record}: field `{field}`: {message}")]
    Parse {
        record: usize,
        field: String,
        message: String,
    },

    #[error("session {session_id}: {message}")]
    Invariant { session_id: String, message: String },

    #[error("integration produced a non-finite state at frame {frame} (session seed {seed})")]
    Integration { frame: usize, seed: u64 },

    #[error("primitive {primitive} is not legal from state {state}")]
    IllegalPrimitive { primitive: String, state: String },

    #[error("non-finite activation at step {step}")]
    Numeric { step: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite (config: {config})")]
    Diverged { epoch: usize, config: String },

    #[error("clip {clip_id} has no event log; the verb oracle needs simulated provenance")]
    MissingProvenance { clip_id: String },

    #[error("split leakage: session {session_id} appears in both {first} and {second}")]
    SplitLeakage {
        session_id: String,
        first: &'static str,
        second: &'static str,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing input {path} for stage `{stage}`; run the stage that produces it first")]
    MissingInput { stage: String, path: PathBuf },

    #[error(
        "digest mismatch for {path}: stage `{producer}` recorded {expected} but the file now hashes to {actual}; rerun `{producer}`"
    )]
    DigestMismatch {
        path: PathBuf,
        producer: String,
        expected: String,
        actual: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
