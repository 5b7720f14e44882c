use crate::error::{Error, Result};

/// Reserved vocabulary ids that mark output structure. All four must be
/// distinct and below vocab_size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SentinelTokens {
    /// Closes a thinking span. Replaced by `wait` when scaling continues,
    /// kept when the answer begins.
    pub think_end: u32,
    /// Injected in place of `think_end` to force another thinking cycle.
    pub wait: u32,
    /// Optional marker the model emits at the start of an answer.
    pub answer_start: u32,
    /// Ends the answer span.
    pub eos: u32,
}

impl Default for SentinelTokens {
    fn default() -> Self {
        SentinelTokens {
            think_end: 1,
            wait: 2,
            answer_start: 3,
            eos: 4,
        }
    }
}

impl SentinelTokens {
    pub fn all(&self) -> [u32; 4] {
        [self.think_end, self.wait, self.answer_start, self.eos]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub rope_theta: f32,
    pub max_context_length: usize,
    pub sentinels: SentinelTokens,
}

impl ModelConfig {
    /// The small test architecture used throughout the harness.
    pub fn toy() -> Self {
        ModelConfig {
            n_layers: 4,
            n_heads: 4,
            d_model: 64,
            d_head: 16,
            d_ff: 256,
            vocab_size: 256,
            rope_theta: 10000.0,
            max_context_length: 4096,
            sentinels: SentinelTokens::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return Err(Error::InvalidConfig("all dimensions must be positive".into()));
        }
        if self.n_heads * self.d_head != self.d_model {
            return Err(Error::InvalidConfig(format!(
                "n_heads * d_head must equal d_model ({} * {} != {})",
                self.n_heads, self.d_head, self.d_model
            )));
        }
        if self.d_head % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "d_head must be even for pairwise rotation, got {}",
                self.d_head
            )));
        }
        if self.vocab_size < 8 {
            return Err(Error::InvalidConfig("vocab_size too small".into()));
        }
        if !(self.rope_theta.is_finite() && self.rope_theta > 0.0) {
            return Err(Error::InvalidConfig("rope_theta must be positive and finite".into()));
        }
        if self.max_context_length == 0 {
            return Err(Error::InvalidConfig("max_context_length must be positive".into()));
        }
        let s = self.sentinels.all();
        for (i, a) in s.iter().enumerate() {
            if *a as usize >= self.vocab_size {
                return Err(Error::InvalidConfig(format!(
                    "sentinel id {} outside vocab of size {}",
                    a, self.vocab_size
                )));
            }
            for b in &s[i + 1..] {
                if a == b {
                    return Err(Error::InvalidConfig(format!("duplicate sentinel id {}", a)));
                }
            }
        }
        Ok(())
    }
}
