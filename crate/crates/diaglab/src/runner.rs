//! File-backed training run: SFT, reference snapshot, GRPO.
//!
//! Output directory layout:
//!
//! - `metrics.log`: one line per SFT epoch, then one per GRPO step
//! - `ref.ckpt`: the frozen reference policy (written when GRPO runs)
//! - `ckpt-NNNNNN.ckpt`: policy after NNNNNN GRPO steps, every
//!   `checkpoint_every` steps when that is non-zero
//! - `policy.ckpt`: final policy

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use diaglab_core::augment::AugmentedPrompt;
use diaglab_core::corpus::ReportRecord;
use diaglab_core::pipeline::{run_sft, PipelineError};
use diaglab_core::policy::PolicyParams;
use diaglab_core::rewards::Embedder;
use diaglab_core::task::{build_feature_spec, build_vocabulary, Case};
use diaglab_core::train::grpo_step;
use diaglab_core::CorpusSplit;

use crate::checkpoint::{write_policy, PolicyCheckpoint};
use crate::config::RunConfig;
use crate::error::FormatError;
use crate::report::{format_metrics_record, MetricsRecord};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Core(#[from] PipelineError),
    #[error("no prompt for case {0}")]
    MissingPrompt(String),
    #[error("no record for split id {0}")]
    MissingRecord(String),
    #[error("resume step {step} is beyond the configured {steps} steps")]
    ResumePastEnd { step: usize, steps: usize },
}

impl From<diaglab_core::train::TrainError> for RunError {
    fn from(e: diaglab_core::train::TrainError) -> Self {
        RunError::Core(e.into())
    }
}

impl From<diaglab_core::policy::PolicyError> for RunError {
    fn from(e: diaglab_core::policy::PolicyError) -> Self {
        RunError::Core(e.into())
    }
}

/// Where the policy comes from.
#[derive(Debug, Clone)]
pub enum Start {
    /// Fresh weights: zeros plus SFT, or Gaussian when `cold_start` is set.
    Fresh,
    /// An existing policy, used as is and as the reference; no SFT.
    Init(PolicyCheckpoint),
    /// Continue GRPO from a checkpoint against a saved reference.
    Resume { policy: PolicyCheckpoint, reference: PolicyParams },
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub policy: PolicyCheckpoint,
    pub metrics: Vec<MetricsRecord>,
    pub out_dir: PathBuf,
}

/// Cases for `ids`, in order.
pub fn cases_for(
    ids: &[String],
    records: &BTreeMap<&str, &ReportRecord>,
    prompts: &BTreeMap<String, AugmentedPrompt>,
) -> Result<Vec<Case>, RunError> {
    ids.iter()
        .map(|id| {
            let record = records.get(id.as_str()).ok_or_else(|| RunError::MissingRecord(id.clone()))?;
            let prompt = prompts.get(id).ok_or_else(|| RunError::MissingPrompt(id.clone()))?;
            Ok(Case { record: (*record).clone(), prompt: prompt.clone() })
        })
        .collect()
}

pub fn checkpoint_path(out_dir: &Path, step: usize) -> PathBuf {
    out_dir.join(format!("ckpt-{step:06}.ckpt"))
}

struct MetricsSink {
    path: PathBuf,
    out: BufWriter<File>,
    records: Vec<MetricsRecord>,
}

impl MetricsSink {
    fn create(path: PathBuf) -> Result<Self, FormatError> {
        let file = File::create(&path).map_err(|e| FormatError::io(&path, e))?;
        Ok(Self { path, out: BufWriter::new(file), records: Vec::new() })
    }

    fn push(&mut self, r: MetricsRecord) -> Result<(), FormatError> {
        self.out
            .write_all(format_metrics_record(&r).as_bytes())
            .and_then(|_| self.out.flush())
            .map_err(|e| FormatError::io(&self.path, e))?;
        self.records.push(r);
        Ok(())
    }
}

/// Corpus, split and prompts of a run.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub records: &'a [ReportRecord],
    pub split: &'a CorpusSplit,
    pub prompts: &'a BTreeMap<String, AugmentedPrompt>,
}

/// Runs SFT (unless skipped) and then `config.grpo.steps` GRPO steps.
/// With `sft_only`, stops after SFT and writes only the policy and log.
pub fn run_training(
    data: TrainingData<'_>,
    config: &RunConfig,
    start: Start,
    sft_only: bool,
    out_dir: &Path,
    embedder: &dyn Embedder,
) -> Result<TrainingOutcome, RunError> {
    let TrainingData { records, split, prompts } = data;
    split.validate(records).map_err(PipelineError::from)?;
    std::fs::create_dir_all(out_dir).map_err(|e| FormatError::io(out_dir, e))?;
    let by_id: BTreeMap<&str, &ReportRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let sft_cases = cases_for(&split.sft, &by_id, prompts)?;
    let grpo_cases = cases_for(&split.grpo, &by_id, prompts)?;
    let mut sink = MetricsSink::create(out_dir.join("metrics.log"))?;
    let grpo = config.grpo_config();

    let (mut params, reference, first_step) = match start {
        Start::Fresh => {
            let train: Vec<&Case> = sft_cases.iter().chain(&grpo_cases).collect();
            let vocab = build_vocabulary(train.iter().map(|c| &c.record))?;
            let spec = build_feature_spec(train.iter().copied(), &vocab, grpo.max_len, config.bucket_width)?;
            let mut params = if config.cold_start {
                PolicyParams::random(vocab, spec, config.init_scale, config.seed)?
            } else {
                PolicyParams::zeros(vocab, spec)?
            };
            if !config.cold_start {
                let losses = run_sft(&mut params, &sft_cases, &config.sft_config())?;
                for (epoch, loss) in losses.into_iter().enumerate() {
                    sink.push(MetricsRecord::Sft { epoch, loss })?;
                }
            }
            let reference = params.clone();
            (params, reference, 0)
        }
        Start::Init(ckpt) => (ckpt.params.clone(), ckpt.params, 0),
        Start::Resume { policy, reference } => {
            if policy.step > grpo.steps {
                return Err(RunError::ResumePastEnd { step: policy.step, steps: grpo.steps });
            }
            (policy.params, reference, policy.step)
        }
    };

    if sft_only {
        let policy = PolicyCheckpoint { params, step: 0 };
        write_policy(&policy, &out_dir.join("policy.ckpt"))?;
        return Ok(TrainingOutcome { policy, metrics: sink.records, out_dir: out_dir.into() });
    }

    write_policy(&PolicyCheckpoint { params: reference.clone(), step: 0 }, &out_dir.join("ref.ckpt"))?;
    for step in first_step..grpo.steps {
        let started = Instant::now();
        let (next, mut m, _) = grpo_step(&params, &reference, &grpo_cases, &config.bleu, embedder, &grpo, step)?;
        if config.record_wall_time {
            m.wall_time = started.elapsed().as_secs_f64();
        }
        params = next;
        sink.push(MetricsRecord::Grpo(m))?;
        let done = step + 1;
        if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 {
            write_policy(&PolicyCheckpoint { params: params.clone(), step: done }, &checkpoint_path(out_dir, done))?;
        }
    }
    let policy = PolicyCheckpoint { params, step: grpo.steps.max(first_step) };
    write_policy(&policy, &out_dir.join("policy.ckpt"))?;
    Ok(TrainingOutcome { policy, metrics: sink.records, out_dir: out_dir.into() })
}
