//! A small decoder-only transformer with a dual-representation KV cache and
//! a sequential test-time scaling loop that re-reads its own context instead
//! of growing it without bound.

pub mod cache;
pub mod config;
pub mod controller;
pub mod error;
pub mod model;
pub mod oracle;
pub mod rope;
pub mod sampling;
pub mod script;
pub mod segmenter;
pub mod trace;
pub mod weights;

pub use cache::{CacheBound, DualKvCache, MemoryStats, MinRuleDecision, MinRuleOutcome, SegmentKind};
pub use config::{ModelConfig, SentinelTokens};
pub use controller::{
    run_generation, GenerationOptions, MaxRc, Method, RunOutcome, RunStatus, ScalingPolicy,
    TokenSource, Variant,
};
pub use error::{Error, Result};
pub use model::{attention_step, max_relative_deviation, Logits, Model};
pub use oracle::{fit_complexity, normalize, verify_boundaries, ComplexityFit, ReplayEngine};
pub use sampling::SampleMode;
pub use script::ScriptSpec;
pub use segmenter::split_transcript;
pub use trace::{parse_trace, render_trace, replay_phases, TraceEvent};
pub use weights::Weights;
