//! Glue between records, prompts and policy targets.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::augment::{build_prompt, build_site_prompt, predict_roi, AugmentError, AugmentedPrompt, ClassifierHead, PromptTemplate};
use crate::corpus::{Organ, ReportRecord};
use crate::policy::{FeatureSpec, PolicyError, Vocabulary};
use crate::rewards::StructuredOutput;

/// A record paired with the prompt the policy sees for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub record: ReportRecord,
    pub prompt: AugmentedPrompt,
}

impl Case {
    pub fn id(&self) -> &str {
        &self.record.id
    }
}

/// Templated reasoning text for the `<think>` segment.
pub fn reasoning_trace(record: &ReportRecord) -> String {
    let organ_word = match record.organ {
        Organ::Gastric => "stomach",
        Organ::Intestinal => "bowel",
        Organ::Other => "tissue",
    };
    alloc::format!("inspect {organ_word} sample")
}

/// Supervised target for a record; `None` when the record has no findings.
pub fn reference_output(record: &ReportRecord) -> Option<StructuredOutput> {
    let findings = record.findings.as_deref()?;
    StructuredOutput::new(&reasoning_trace(record), findings, &record.diagnosis)
}

/// Vocabulary covering every reasoning trace, finding and diagnosis in
/// `records`.
pub fn build_vocabulary<'a, I>(records: I) -> Result<Vocabulary, PolicyError>
where
    I: IntoIterator<Item = &'a ReportRecord>,
{
    let outputs: Vec<StructuredOutput> = records
        .into_iter()
        .filter_map(|r| {
            StructuredOutput::new(&reasoning_trace(r), r.findings.as_deref().unwrap_or(""), &r.diagnosis)
        })
        .collect();
    Vocabulary::from_outputs(outputs.iter())
}

pub fn build_feature_spec<'a, I>(
    cases: I,
    vocab: &Vocabulary,
    max_len: usize,
    bucket_width: usize,
) -> Result<FeatureSpec, PolicyError>
where
    I: IntoIterator<Item = &'a Case>,
{
    FeatureSpec::new(
        cases.into_iter().map(|c| crate::policy::query_key(&c.prompt)),
        vocab.len(),
        max_len,
        bucket_width,
    )
}

/// How prompts are built for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptMode {
    /// Site plus classifier label and confidence where a head exists.
    SiteAndClassifier,
    /// Site only, for every organ.
    SiteOnly,
}

/// Builds prompts for `records`, running the organ's head on the first
/// feature ref of each gastric or intestinal record.
pub fn build_prompts(
    records: &[ReportRecord],
    features: &BTreeMap<String, Vec<f64>>,
    heads: &[ClassifierHead],
    template: &PromptTemplate,
    mode: PromptMode,
) -> Result<Vec<AugmentedPrompt>, AugmentError> {
    records
        .iter()
        .map(|r| {
            if mode == PromptMode::SiteOnly {
                return Ok(build_site_prompt(r, template));
            }
            let prediction = if r.organ.has_classifier() {
                let head = heads.iter().find(|h| h.organ == r.organ);
                let feature = r.feature_refs.first().and_then(|f| features.get(f));
                match (head, feature) {
                    (Some(h), Some(x)) => Some(predict_roi(h, x)?),
                    _ => None,
                }
            } else {
                None
            };
            build_prompt(r, prediction, template)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewards::format_reward;
    use crate::synth::{generate_synthetic_corpus, SyntheticConfig};

    #[test]
    fn synthetic_vocabulary_is_small_and_covers_targets() {
        let c = generate_synthetic_corpus(300, 2, &SyntheticConfig { feature_dim: 4, ..Default::default() }).unwrap();
        let vocab = build_vocabulary(&c.records).unwrap();
        assert!(vocab.len() <= 64, "{}", vocab.len());
        for r in &c.records {
            if let Some(o) = reference_output(r) {
                let ids = vocab.encode_output(&o).unwrap();
                let text = vocab.render(&ids);
                assert_eq!(format_reward(&text), 1);
                assert_eq!(text, o.raw);
            }
        }
    }

    #[test]
    fn missing_head_means_missing_prediction() {
        let c = generate_synthetic_corpus(20, 2, &SyntheticConfig { feature_dim: 4, ..Default::default() }).unwrap();
        let err = build_prompts(&c.records, &BTreeMap::new(), &[], &PromptTemplate::default(), PromptMode::SiteAndClassifier);
        assert!(matches!(err, Err(AugmentError::MissingPrediction(_))));
        let ok = build_prompts(&c.records, &BTreeMap::new(), &[], &PromptTemplate::default(), PromptMode::SiteOnly).unwrap();
        assert!(ok.iter().all(|p| p.aux.is_none()));
    }
}
