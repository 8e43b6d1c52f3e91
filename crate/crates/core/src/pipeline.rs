//! End-to-end run on a synthetic corpus, held entirely in memory.
//!
//! Used by the ablation experiments and the acceptance suite; the CLI runs
//! the same stages through files.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::augment::{train_head, AugmentError, ClassifierHead, HeadConfig, PromptTemplate};
use crate::corpus::{split_corpus, CorpusError, CorpusSplit, Organ, ReportRecord};
use crate::eval::{evaluate_split, EvalConfig, EvalError, EvalReport, GreedyDecoder};
use crate::policy::{PolicyError, PolicyParams, DEFAULT_BUCKET_WIDTH};
use crate::rewards::{BleuConfig, Embedder};
use crate::synth::{generate_synthetic_corpus, synthetic_class_names, SyntheticConfig, SyntheticCorpus};
use crate::task::{build_feature_spec, build_prompts, build_vocabulary, reference_output, Case, PromptMode};
use crate::train::{grpo_step, sft_epoch, GrpoConfig, SftConfig, TrainError, TrainMetrics};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// How the policy is initialized before GRPO.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitMode {
    /// Zero weights followed by SFT on the sft split.
    WarmStart,
    /// Gaussian weights with the given scale, no SFT.
    ColdStart { scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub n_records: usize,
    pub sft_n: usize,
    pub test_n: usize,
    pub synth: SyntheticConfig,
    pub head: HeadConfig,
    pub template: PromptTemplate,
    pub prompt_mode: PromptMode,
    pub init: InitMode,
    pub sft: SftConfig,
    pub grpo: GrpoConfig,
    pub bucket_width: usize,
    pub bleu: BleuConfig,
    pub eval: EvalConfig,
    /// Master seed; overrides the seeds inside `sft` and `grpo`.
    pub seed: u64,
}

impl PipelineConfig {
    fn seeded_sft(&self) -> SftConfig {
        SftConfig { seed: self.seed, ..self.sft.clone() }
    }

    fn seeded_grpo(&self) -> GrpoConfig {
        GrpoConfig { seed: self.seed, ..self.grpo.clone() }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_records: 200,
            sft_n: 60,
            test_n: 50,
            synth: SyntheticConfig::default(),
            head: HeadConfig::default(),
            template: PromptTemplate::default(),
            prompt_mode: PromptMode::SiteAndClassifier,
            init: InitMode::WarmStart,
            sft: SftConfig::default(),
            grpo: GrpoConfig { max_len: 32, ..GrpoConfig::default() },
            bucket_width: DEFAULT_BUCKET_WIDTH,
            bleu: BleuConfig::default(),
            eval: EvalConfig::default(),
            seed: 0,
        }
    }
}

/// Everything a run needs after corpus preparation.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub corpus: SyntheticCorpus,
    pub split: CorpusSplit,
    pub heads: Vec<ClassifierHead>,
    /// Training accuracy per head, same order as `heads`.
    pub head_accuracy: Vec<f64>,
    pub cases: BTreeMap<String, Case>,
}

impl PreparedRun {
    pub fn cases_for(&self, ids: &[String]) -> Vec<Case> {
        ids.iter().map(|id| self.cases[id].clone()).collect()
    }
}

/// Labeled ROI features of `records`, per classifier organ.
pub fn roi_training_data(
    corpus: &SyntheticCorpus,
    records: &[&ReportRecord],
    organ: Organ,
) -> Vec<(Vec<f64>, usize)> {
    let names = synthetic_class_names(organ);
    let features: BTreeMap<&str, &Vec<f64>> = corpus.features.iter().map(|f| (f.id.as_str(), &f.values)).collect();
    let labels: BTreeMap<&str, &str> =
        corpus.roi_labels.iter().map(|l| (l.feature_id.as_str(), l.class_name.as_str())).collect();
    let mut out = Vec::new();
    for r in records.iter().filter(|r| r.organ == organ) {
        for fid in &r.feature_refs {
            if let (Some(x), Some(label)) = (features.get(fid.as_str()), labels.get(fid.as_str())) {
                let y = names.iter().position(|n| n == label).expect("label from table");
                out.push(((*x).clone(), y));
            }
        }
    }
    out
}

/// Generates the corpus, splits it, trains one head per classifier organ
/// on the non-test records, and builds prompts.
pub fn prepare(config: &PipelineConfig) -> Result<PreparedRun, PipelineError> {
    let corpus = generate_synthetic_corpus(config.n_records, config.seed, &config.synth)?;
    let split = split_corpus(&corpus.records, config.sft_n, config.test_n, config.seed)?;
    let train_ids: alloc::collections::BTreeSet<&str> =
        split.sft.iter().chain(&split.grpo).map(String::as_str).collect();
    let train_records: Vec<&ReportRecord> =
        corpus.records.iter().filter(|r| train_ids.contains(r.id.as_str())).collect();

    let mut heads = Vec::new();
    let mut head_accuracy = Vec::new();
    if config.prompt_mode == PromptMode::SiteAndClassifier {
        for organ in [Organ::Gastric, Organ::Intestinal] {
            let data = roi_training_data(&corpus, &train_records, organ);
            let trained = train_head(&data, organ, synthetic_class_names(organ), &config.head)?;
            head_accuracy.push(trained.train_accuracy);
            heads.push(trained.head);
        }
    }
    let features: BTreeMap<String, Vec<f64>> =
        corpus.features.iter().map(|f| (f.id.clone(), f.values.clone())).collect();
    let prompts = build_prompts(&corpus.records, &features, &heads, &config.template, config.prompt_mode)?;
    let cases = corpus
        .records
        .iter()
        .zip(prompts)
        .map(|(r, p)| (r.id.clone(), Case { record: r.clone(), prompt: p }))
        .collect();
    Ok(PreparedRun { corpus, split, heads, head_accuracy, cases })
}

/// Builds the initial policy for a prepared run: vocabulary and query keys
/// come from the sft and grpo cases.
pub fn initial_policy(run: &PreparedRun, config: &PipelineConfig) -> Result<PolicyParams, PipelineError> {
    let train: Vec<Case> = run.cases_for(&run.split.sft).into_iter().chain(run.cases_for(&run.split.grpo)).collect();
    let vocab = build_vocabulary(train.iter().map(|c| &c.record))?;
    let spec = build_feature_spec(train.iter(), &vocab, config.grpo.max_len, config.bucket_width)?;
    Ok(match config.init {
        InitMode::WarmStart => PolicyParams::zeros(vocab, spec)?,
        InitMode::ColdStart { scale } => PolicyParams::random(vocab, spec, scale, config.seed)?,
    })
}

/// Runs the configured SFT epochs in place; returns per-epoch losses.
pub fn run_sft(params: &mut PolicyParams, sft_cases: &[Case], config: &SftConfig) -> Result<Vec<f64>, PipelineError> {
    let targets: Vec<_> = sft_cases.iter().filter_map(|c| Some((&c.prompt, reference_output(&c.record)?))).collect();
    let examples: Vec<_> = targets.iter().map(|(p, t)| (*p, t)).collect();
    let mut losses = Vec::new();
    for epoch in 0..config.epochs {
        losses.push(sft_epoch(params, &examples, config, epoch)?);
    }
    Ok(losses)
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub params: PolicyParams,
    pub sft_losses: Vec<f64>,
    pub metrics: Vec<TrainMetrics>,
    pub report: EvalReport,
    pub head_accuracy: Vec<f64>,
}

pub fn run_pipeline(config: &PipelineConfig, embedder: &dyn Embedder) -> Result<PipelineOutcome, PipelineError> {
    let run = prepare(config)?;
    let mut params = initial_policy(&run, config)?;
    let sft_losses = match config.init {
        InitMode::WarmStart => run_sft(&mut params, &run.cases_for(&run.split.sft), &config.seeded_sft())?,
        InitMode::ColdStart { .. } => Vec::new(),
    };
    let reference = params.clone();
    let grpo_cases = run.cases_for(&run.split.grpo);
    let grpo = config.seeded_grpo();
    let mut metrics = Vec::with_capacity(grpo.steps);
    for step in 0..grpo.steps {
        let (next, m, _) = grpo_step(&params, &reference, &grpo_cases, &config.bleu, embedder, &grpo, step)?;
        params = next;
        metrics.push(m);
    }
    let decoder = GreedyDecoder { params: &params, max_len: config.grpo.max_len };
    let report = evaluate_split(&decoder, &run.cases_for(&run.split.test), "test", &config.eval, embedder)?;
    Ok(PipelineOutcome { params, sft_losses, metrics, report, head_accuracy: run.head_accuracy })
}
