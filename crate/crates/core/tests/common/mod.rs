#![allow(dead_code)]

use diaglab_core::augment::{AugmentedPrompt, RoiPrediction};
use diaglab_core::policy::{FeatureSpec, PolicyParams, Vocabulary, EOS};
use diaglab_core::rewards::TAG_MARKERS;

/// Vocabulary of the six tags, EOS and `extra` plain words.
pub fn small_vocab(extra: usize) -> Vocabulary {
    let mut tokens: Vec<String> = TAG_MARKERS.iter().map(|s| s.to_string()).collect();
    tokens.push(EOS.into());
    tokens.extend(["a", "b", "c"].iter().take(extra).map(|s| s.to_string()));
    Vocabulary::new(tokens).unwrap()
}

pub fn prompt(site: &str, label: Option<&str>) -> AugmentedPrompt {
    AugmentedPrompt {
        text: format!("Site: {site}."),
        site: site.into(),
        aux: label.map(|l| RoiPrediction { label: l.into(), confidence: 0.9 }),
    }
}

/// A random policy with |V| = 7 + `extra` and two query keys; max_len 8 and
/// bucket width 4, so |F| = 1 + 2 + |V| + 1 + 2.
pub fn small_params(extra: usize, scale: f64, seed: u64) -> PolicyParams {
    let vocab = small_vocab(extra);
    let keys = ["s|x".to_string(), "s|y".to_string()];
    let spec = FeatureSpec::new(keys, vocab.len(), 8, 4).unwrap();
    PolicyParams::random(vocab, spec, scale, seed).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
