use alloc::string::ToString;

use super::{bleu, caption_reward, format::parse_structured_output, BleuConfig, Embedder, RewardError};
use crate::corpus::ReportRecord;

/// Weights of the format, caption and answer terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub format: f64,
    pub caption: f64,
    pub answer: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { format: 1.0 / 3.0, caption: 1.0 / 3.0, answer: 1.0 / 3.0 }
    }
}

impl RewardWeights {
    pub fn sum(&self) -> f64 {
        self.format + self.caption + self.answer
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if ok(self.format) && ok(self.caption) && ok(self.answer) {
            Ok(())
        } else {
            Err(RewardError::InvalidConfig("reward weights must be non-negative".to_string()))
        }
    }

    /// Weights used when the reference has no findings: the caption weight
    /// is dropped and the other two are scaled to keep the original sum.
    pub fn without_caption(&self) -> Self {
        let rest = self.format + self.answer;
        if rest <= 0.0 {
            return Self { format: 0.0, caption: 0.0, answer: 0.0 };
        }
        let s = self.sum() / rest;
        Self { format: self.format * s, caption: 0.0, answer: self.answer * s }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RewardConfig {
    pub weights: RewardWeights,
    pub bleu: BleuConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardBreakdown {
    pub format: u8,
    pub caption: f64,
    pub answer: f64,
    pub total: f64,
    /// Effective weights, after rescaling for caption-less references.
    pub weights_used: RewardWeights,
}

/// Scores one generated output against a reference record.
///
/// The format gate runs first: malformed output scores 0 on every term.
/// Otherwise the caption term is the embedding cosine between the
/// `<caption>` segment and the reference findings, and the answer term is
/// BLEU of the `<answer>` segment against the reference diagnosis.
pub fn composite_reward(
    output: &str,
    reference: &ReportRecord,
    config: &RewardConfig,
    embedder: &dyn Embedder,
) -> Result<RewardBreakdown, RewardError> {
    config.weights.validate()?;
    let weights = match reference.findings {
        Some(_) => config.weights,
        None => config.weights.without_caption(),
    };
    let parsed = match parse_structured_output(output) {
        Ok(p) => p,
        Err(_) => {
            return Ok(RewardBreakdown { format: 0, caption: 0.0, answer: 0.0, total: 0.0, weights_used: weights })
        }
    };
    let caption = match &reference.findings {
        Some(f) => caption_reward(&parsed.caption, f, embedder)?,
        None => 0.0,
    };
    let answer = bleu(&reference.diagnosis, &parsed.answer, &config.bleu)?;
    let total = weights.format + weights.caption * caption + weights.answer * answer;
    Ok(RewardBreakdown { format: 1, caption, answer, total, weights_used: weights })
}
