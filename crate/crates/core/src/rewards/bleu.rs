use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::RewardError;
use crate::math;
use crate::text::{tokenize, TokenSequence, TokenizerMode};

/// Clipped n-gram precision counts: `(matches, candidates)`.
///
/// `candidates` is the number of n-grams in the hypothesis; `matches` counts
/// hypothesis n-grams found in the reference, each distinct n-gram capped at
/// its reference multiplicity.
pub fn ngram_precision(reference: &TokenSequence, hypothesis: &TokenSequence, n: usize) -> (usize, usize) {
    assert!(n >= 1, "n-gram order must be at least 1");
    let hyp = &hypothesis.tokens;
    if hyp.len() < n {
        return (0, 0);
    }
    let mut ref_counts: BTreeMap<&[_], usize> = BTreeMap::new();
    for g in reference.tokens.windows(n) {
        *ref_counts.entry(g).or_default() += 1;
    }
    let mut hyp_counts: BTreeMap<&[_], usize> = BTreeMap::new();
    for g in hyp.windows(n) {
        *hyp_counts.entry(g).or_default() += 1;
    }
    let matches = hyp_counts
        .iter()
        .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
        .sum();
    (matches, hyp.len() + 1 - n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuConfig {
    pub mode: TokenizerMode,
    /// Weight per order `1..=weights.len()`; non-negative, summing to 1.
    pub weights: Vec<f64>,
    /// Add-one smoothing of precisions for orders >= 2.
    pub smoothing: bool,
    /// Standard brevity penalty. Off by default, so a short exact prefix of
    /// the reference scores 1.
    pub brevity_penalty: bool,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self { mode: TokenizerMode::Character, weights: vec![0.25; 4], smoothing: false, brevity_penalty: false }
    }
}

impl BleuConfig {
    pub fn max_n(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if self.weights.is_empty() {
            return Err(RewardError::InvalidConfig("BLEU needs at least one order".into()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(RewardError::InvalidConfig("BLEU weights must be non-negative".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(RewardError::InvalidConfig(format!("BLEU weights sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Sentence BLEU without smoothing or brevity penalty unless configured.
///
/// Orders with no hypothesis n-grams are dropped and the remaining weights
/// renormalized. If any remaining order has zero precision the score is 0;
/// otherwise it is `exp(Σ w_n ln p_n)`. A hypothesis with no tokens scores 0.
pub fn bleu(reference: &str, hypothesis: &str, config: &BleuConfig) -> Result<f64, RewardError> {
    config.validate()?;
    let r = tokenize(reference, config.mode);
    if r.is_empty() {
        return Err(RewardError::EmptyReference);
    }
    let h = tokenize(hypothesis, config.mode);

    let mut included_weight = 0.0;
    let mut log_sum = 0.0;
    for (k, &w) in config.weights.iter().enumerate() {
        let n = k + 1;
        let (m, c) = ngram_precision(&r, &h, n);
        if c == 0 {
            continue;
        }
        let p = if config.smoothing && n >= 2 {
            (m as f64 + 1.0) / (c as f64 + 1.0)
        } else {
            m as f64 / c as f64
        };
        if p == 0.0 {
            return Ok(0.0);
        }
        included_weight += w;
        log_sum += w * math::ln(p);
    }
    if included_weight <= 0.0 {
        return Ok(0.0);
    }
    let mut score = math::exp(log_sum / included_weight);
    if config.brevity_penalty && h.len() < r.len() {
        score *= math::exp(1.0 - r.len() as f64 / h.len() as f64);
    }
    Ok(score.clamp(0.0, 1.0))
}
