use thiserror::Error;

use crate::signs::{PairIndex, SignVector};

#[derive(Debug, Error)]
pub enum Error {
    #[error("pair ({i},{j}) out of range for length {n}")]
    PairOutOfRange { i: usize, j: usize, n: usize },

    #[error("level {level} out of range for length {n}")]
    LevelOutOfRange { level: usize, n: usize },

    #[error("cannot parse sign pattern {0:?}: expected only '+' and '-'")]
    BadPattern(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// The case ladder had no applicable operation for this negative pair.
    #[error("case ladder stuck at {at} for sigma {sigma}")]
    LadderStuck { sigma: SignVector, at: PairIndex },

    /// No good partition exists within the searched space.
    #[error("no good partition found for sigma {sigma} (target {target})")]
    SearchExhausted {
        sigma: SignVector,
        target: &'static str,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
