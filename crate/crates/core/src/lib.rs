//! Core of the diagnostic-report GRPO lab.
//!
//! Everything in this crate is pure computation over `alloc` collections:
//! report data model and extraction grammar, the synthetic corpus generator,
//! the ROI classifier heads used for prompt augmentation, the reward stack
//! (format gate, caption cosine, diagnosis BLEU), a linear-softmax token
//! policy with exact log-probabilities and gradients, the SFT and GRPO
//! objectives, and the evaluation harness.
//!
//! File formats, the command line and anything touching the OS live in the
//! `diaglab` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod augment;
pub mod corpus;
pub mod eval;
pub mod math;
pub mod pipeline;
pub mod policy;
pub mod rewards;
pub mod rng;
pub mod synth;
pub mod task;
pub mod text;
pub mod train;

pub use augment::{AugmentedPrompt, ClassifierHead, RoiPrediction};
pub use corpus::{CorpusSplit, Organ, ReportRecord};
pub use eval::EvalReport;
pub use policy::{PolicyParams, Rollout, Vocabulary};
pub use rewards::{RewardBreakdown, RewardWeights, StructuredOutput};
pub use text::{TokenSequence, TokenizerMode};
pub use train::{GrpoConfig, SftConfig, TrainMetrics};
