//! Multimodal token-length accounting.
//!
//! The length of a sample is `|images| * tokens_per_image + sum of text
//! token counts + per_sample_overhead`. Text counting is injected behind
//! [`TokenCounter`] so a real subword tokenizer can replace the bundled
//! heuristics without touching callers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Sample;

/// Visual tokens per image during packing.
pub const DEFAULT_TOKENS_PER_IMAGE: u64 = 144;
/// Visual tokens per image at full patch resolution (fine-tuning setting).
pub const SFT_TOKENS_PER_IMAGE: u64 = 729;
/// Context capacity a packed bin must not exceed.
pub const DEFAULT_CAPACITY: u64 = 4096;

/// Visual-token budget, per-sample overhead, and context capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthConfig {
    pub tokens_per_image: u64,
    pub per_sample_overhead: u64,
    pub capacity: u64,
}

impl Default for LengthConfig {
    fn default() -> Self {
        Self {
            tokens_per_image: DEFAULT_TOKENS_PER_IMAGE,
            per_sample_overhead: 0,
            capacity: DEFAULT_CAPACITY,
        }
    }
}

impl LengthConfig {
    pub fn new(
        tokens_per_image: u64,
        per_sample_overhead: u64,
        capacity: u64,
    ) -> Result<Self, LengthError> {
        let cfg = Self { tokens_per_image, per_sample_overhead, capacity };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), LengthError> {
        if self.tokens_per_image < 1 {
            return Err(LengthError::InvalidTokensPerImage);
        }
        if self.capacity < self.tokens_per_image + self.per_sample_overhead {
            return Err(LengthError::CapacityTooSmall {
                capacity: self.capacity,
                required: self.tokens_per_image + self.per_sample_overhead,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LengthError {
    #[error("tokens_per_image must be >= 1")]
    InvalidTokensPerImage,
    #[error("capacity {capacity} cannot hold one image plus overhead ({required})")]
    CapacityTooSmall { capacity: u64, required: u64 },
    #[error("unknown token counter '{0}'")]
    UnknownCounter(String),
}

/// A deterministic text-token counting function. `count("")` must be 0.
pub trait TokenCounter: Send + Sync {
    fn name(&self) -> &str;
    fn count(&self, text: &str) -> u64;
}

/// Counts maximal runs of non-whitespace characters.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn name(&self) -> &str {
        "whitespace"
    }

    fn count(&self, text: &str) -> u64 {
        let mut count = 0u64;
        let mut in_token = false;
        for c in text.chars() {
            if c.is_whitespace() {
                in_token = false;
            } else if !in_token {
                in_token = true;
                count += 1;
            }
        }
        count
    }
}

/// `ceil(bytes / 4)` — a crude subword-rate stand-in for latin text.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByteHeuristicCounter;

impl TokenCounter for ByteHeuristicCounter {
    fn name(&self) -> &str {
        "bytes4"
    }

    fn count(&self, text: &str) -> u64 {
        (text.len() as u64).div_ceil(4)
    }
}

/// Resolves a bundled counter by its configuration name.
pub fn counter_by_name(name: &str) -> Result<Box<dyn TokenCounter>, LengthError> {
    match name {
        "whitespace" => Ok(Box::new(WhitespaceCounter)),
        "bytes4" => Ok(Box::new(ByteHeuristicCounter)),
        other => Err(LengthError::UnknownCounter(other.to_string())),
    }
}

/// Token length of one multimodal sample:
/// `|images| * tokens_per_image + Σ count(turn) + per_sample_overhead`.
pub fn sample_length(s: &Sample, cfg: &LengthConfig, tc: &dyn TokenCounter) -> u64 {
    let visual = s.images.len() as u64 * cfg.tokens_per_image;
    let text: u64 = s.text_turns.iter().map(|t| tc.count(&t.content)).sum();
    visual + text + cfg.per_sample_overhead
}
