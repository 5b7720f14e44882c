use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("position id {position} would exceed max context length {max_context}")]
    PositionOverflow { position: usize, max_context: usize },

    #[error("rotary embedding needs an even vector length, got {0}")]
    OddRotaryDim(usize),

    #[error("attention over an empty cache")]
    EmptyCache,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("position ids must be strictly increasing")]
    NonIncreasingPositions,

    #[error("invalid sampling parameters: {0}")]
    InvalidSampling(String),

    #[error("segment bookkeeping: {0}")]
    Segment(String),

    #[error("cache bound violated: {0}")]
    BoundViolation(String),

    #[error("cache inconsistency: {0}")]
    CacheInconsistency(String),

    #[error("script: {0}")]
    Script(String),

    #[error("trace: {0}")]
    Trace(String),

    #[error("generation: {0}")]
    Generation(String),

    #[error("not enough data: {0}")]
    NotEnoughData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
