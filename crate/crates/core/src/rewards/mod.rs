//! Verifiable rewards: the format gate, caption cosine, diagnosis BLEU and
//! their weighted composition.

mod bleu;
mod composite;
mod embed;
mod format;

pub use bleu::{bleu, ngram_precision, BleuConfig};
pub use composite::{composite_reward, RewardBreakdown, RewardConfig, RewardWeights};
pub use embed::{caption_reward, cosine, fnv1a64, Embedder, EmbeddingVector, NgramEmbedder};
pub use format::{
    format_reward, parse_structured_output, StructuredOutput, ANSWER_CLOSE, ANSWER_OPEN,
    CAPTION_CLOSE, CAPTION_OPEN, TAG_MARKERS, THINK_CLOSE, THINK_OPEN,
};

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("text does not match the <think>/<caption>/<answer> grammar")]
    InvalidFormat,
    #[error("embedding dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("reference tokenizes to zero tokens")]
    EmptyReference,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("embedding backend failed: {0}")]
    Embedding(String),
}
