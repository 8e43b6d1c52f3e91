//! Held-out evaluation: embedding cosine and BLEU for findings and
//! diagnosis, plus format pass rate and composite reward.

use alloc::string::String;
use alloc::vec::Vec;

use crate::policy::{greedy_sequence, PolicyParams};
use crate::rewards::{
    bleu, composite_reward, cosine, parse_structured_output, BleuConfig, Embedder, RewardConfig, RewardError,
    RewardWeights,
};
use crate::task::Case;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("split is empty")]
    EmptySplit,
    #[error("reports cover different splits or cases: {0}")]
    SplitMismatch(String),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Produces one report text per case.
pub trait ReportGenerator {
    fn generate(&self, case: &Case) -> String;
}

/// Greedy decoding from a policy snapshot.
pub struct GreedyDecoder<'a> {
    pub params: &'a PolicyParams,
    pub max_len: usize,
}

impl ReportGenerator for GreedyDecoder<'_> {
    fn generate(&self, case: &Case) -> String {
        let ids = greedy_sequence(self.params, &case.prompt, self.max_len);
        self.params.vocab.render(&ids)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalConfig {
    /// BLEU settings; uniform 0.25 weights over orders 1..4 by default.
    pub bleu: BleuConfig,
    /// Weights for the composite reward column.
    pub weights: RewardWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub id: String,
    pub generated: String,
    pub format: u8,
    /// `None` when the reference has no findings.
    pub caption_cosine: Option<f64>,
    pub caption_bleu: Option<f64>,
    pub answer_cosine: f64,
    pub answer_bleu: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub split: String,
    pub n_cases: usize,
    /// Number of cases whose reference has findings.
    pub n_caption_cases: usize,
    pub caption_cosine_mean: f64,
    pub caption_bleu_mean: f64,
    pub answer_cosine_mean: f64,
    pub answer_bleu_mean: f64,
    pub format_pass_rate: f64,
    pub reward_mean: f64,
    pub cases: Vec<CaseResult>,
}

fn similarity(a: &str, b: &str, embedder: &dyn Embedder) -> Result<f64, RewardError> {
    Ok(cosine(&embedder.embed(a)?, &embedder.embed(b)?)?.clamp(0.0, 1.0))
}

/// Scores one generated text against its reference record. Malformed
/// output scores 0 on every content metric.
pub fn score_case(
    case: &Case,
    generated: &str,
    config: &EvalConfig,
    embedder: &dyn Embedder,
) -> Result<CaseResult, EvalError> {
    let record = &case.record;
    let reward_cfg = RewardConfig { weights: config.weights, bleu: config.bleu.clone() };
    let reward = composite_reward(generated, record, &reward_cfg, embedder)?.total;
    let mut result = CaseResult {
        id: record.id.clone(),
        generated: generated.into(),
        format: 0,
        caption_cosine: record.findings.as_ref().map(|_| 0.0),
        caption_bleu: record.findings.as_ref().map(|_| 0.0),
        answer_cosine: 0.0,
        answer_bleu: 0.0,
        reward,
    };
    let Ok(parsed) = parse_structured_output(generated) else {
        return Ok(result);
    };
    result.format = 1;
    if let Some(f) = &record.findings {
        result.caption_cosine = Some(similarity(&parsed.caption, f, embedder)?);
        result.caption_bleu = Some(bleu(f, &parsed.caption, &config.bleu)?);
    }
    result.answer_cosine = similarity(&parsed.answer, &record.diagnosis, embedder)?;
    result.answer_bleu = bleu(&record.diagnosis, &parsed.answer, &config.bleu)?;
    Ok(result)
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Assembles a report from per-case results, in the given order.
pub fn summarize(split: &str, cases: Vec<CaseResult>) -> EvalReport {
    EvalReport {
        split: split.into(),
        n_cases: cases.len(),
        n_caption_cases: cases.iter().filter(|c| c.caption_cosine.is_some()).count(),
        caption_cosine_mean: mean_of(cases.iter().filter_map(|c| c.caption_cosine)),
        caption_bleu_mean: mean_of(cases.iter().filter_map(|c| c.caption_bleu)),
        answer_cosine_mean: mean_of(cases.iter().map(|c| c.answer_cosine)),
        answer_bleu_mean: mean_of(cases.iter().map(|c| c.answer_bleu)),
        format_pass_rate: mean_of(cases.iter().map(|c| f64::from(c.format))),
        reward_mean: mean_of(cases.iter().map(|c| c.reward)),
        cases,
    }
}

pub fn evaluate_split(
    generator: &dyn ReportGenerator,
    cases: &[Case],
    split: &str,
    config: &EvalConfig,
    embedder: &dyn Embedder,
) -> Result<EvalReport, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let mut results = cases
        .iter()
        .map(|c| score_case(c, &generator.generate(c), config, embedder))
        .collect::<Result<Vec<_>, _>>()?;
    results.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(summarize(split, results))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricDelta {
    pub name: &'static str,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

pub fn report_metrics(r: &EvalReport) -> [(&'static str, f64); 6] {
    [
        ("caption_cosine", r.caption_cosine_mean),
        ("caption_bleu", r.caption_bleu_mean),
        ("answer_cosine", r.answer_cosine_mean),
        ("answer_bleu", r.answer_bleu_mean),
        ("format_pass_rate", r.format_pass_rate),
        ("reward", r.reward_mean),
    ]
}

/// Per-metric `b - a`. Both reports must cover the same split and cases.
pub fn compare_runs(a: &EvalReport, b: &EvalReport) -> Result<Vec<MetricDelta>, EvalError> {
    if a.split != b.split {
        return Err(EvalError::SplitMismatch(alloc::format!("{} vs {}", a.split, b.split)));
    }
    let ids = |r: &EvalReport| r.cases.iter().map(|c| c.id.clone()).collect::<Vec<_>>();
    if ids(a) != ids(b) {
        return Err(EvalError::SplitMismatch("case ids differ".into()));
    }
    Ok(report_metrics(a)
        .into_iter()
        .zip(report_metrics(b))
        .map(|((name, x), (_, y))| MetricDelta { name, a: x, b: y, delta: y - x })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::build_site_prompt;
    use crate::rewards::NgramEmbedder;
    use crate::synth::{generate_synthetic_corpus, SyntheticConfig};
    use crate::task::reference_output;

    struct Echo;
    impl ReportGenerator for Echo {
        fn generate(&self, case: &Case) -> String {
            let r = &case.record;
            alloc::format!(
                "<think>x</think><caption>{}</caption><answer>{}</answer>",
                r.findings.as_deref().unwrap_or(""),
                r.diagnosis
            )
        }
    }

    struct Untagged;
    impl ReportGenerator for Untagged {
        fn generate(&self, case: &Case) -> String {
            case.record.diagnosis.clone()
        }
    }

    fn cases(n: usize) -> Vec<Case> {
        let c = generate_synthetic_corpus(n, 11, &SyntheticConfig { feature_dim: 2, ..Default::default() }).unwrap();
        c.records
            .into_iter()
            .map(|r| Case { prompt: build_site_prompt(&r, &Default::default()), record: r })
            .collect()
    }

    #[test]
    fn verbatim_generator_scores_one() {
        let e = NgramEmbedder::default();
        let cs = cases(40);
        let r = evaluate_split(&Echo, &cs, "test", &EvalConfig::default(), &e).unwrap();
        for m in [r.caption_cosine_mean, r.caption_bleu_mean, r.answer_cosine_mean, r.answer_bleu_mean, r.format_pass_rate] {
            assert!((m - 1.0).abs() < 1e-12, "{m}");
        }
        assert!((r.reward_mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn untagged_generator_scores_zero() {
        let e = NgramEmbedder::default();
        let r = evaluate_split(&Untagged, &cases(20), "test", &EvalConfig::default(), &e).unwrap();
        assert_eq!(r.format_pass_rate, 0.0);
        assert_eq!(r.answer_bleu_mean + r.answer_cosine_mean + r.caption_bleu_mean + r.caption_cosine_mean, 0.0);
    }

    #[test]
    fn caption_means_use_findings_subset() {
        let e = NgramEmbedder::default();
        let cs = cases(60);
        let r = evaluate_split(&Untagged, &cs, "t", &EvalConfig::default(), &e).unwrap();
        let with = cs.iter().filter(|c| c.record.findings.is_some()).count();
        assert_eq!(r.n_caption_cases, with);
        assert!(with < cs.len());
        let _ = reference_output(&cs[0].record);
    }

    #[test]
    fn compare_examples() {
        let e = NgramEmbedder::default();
        let cs = cases(10);
        let a = evaluate_split(&Echo, &cs, "test", &EvalConfig::default(), &e).unwrap();
        assert!(compare_runs(&a, &a).unwrap().iter().all(|d| d.delta == 0.0));
        let mut b = a.clone();
        let mut a2 = a.clone();
        a2.answer_bleu_mean = 0.8;
        b.answer_bleu_mean = 0.9;
        let d = compare_runs(&a2, &b).unwrap();
        let ab = d.iter().find(|d| d.name == "answer_bleu").unwrap();
        assert!((ab.delta - 0.1).abs() < 1e-12);
        b.split = "other".into();
        assert!(matches!(compare_runs(&a, &b), Err(EvalError::SplitMismatch(_))));
    }

    #[test]
    fn empty_split() {
        let e = NgramEmbedder::default();
        assert_eq!(evaluate_split(&Echo, &[], "t", &EvalConfig::default(), &e), Err(EvalError::EmptySplit));
    }
}
