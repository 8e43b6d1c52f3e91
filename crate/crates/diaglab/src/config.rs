//! Run configuration.
//!
//! Config files hold one `key = value` pair per line; blank lines and lines
//! starting with `#` are ignored. Every key is listed by `--print-config`
//! with its default. Values from `--set key=value` override the file.

use std::time::Duration;

use diaglab_core::augment::{HeadConfig, PromptTemplate};
use diaglab_core::pipeline::InitMode;
use diaglab_core::rewards::{BleuConfig, Embedder, NgramEmbedder, RewardConfig, RewardWeights};
use diaglab_core::synth::SyntheticConfig;
use diaglab_core::text::TokenizerMode;
use diaglab_core::train::{GrpoConfig, SftConfig};
use diaglab_core::eval::EvalConfig;

use crate::socket::SocketEmbedder;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {value:?}")]
    BadValue { key: String, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedderKind {
    Ngram,
    Socket,
}

/// Every tunable of a run. Paths and the subcommand travel separately.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SyntheticConfig,
    pub head: HeadConfig,
    pub template: PromptTemplate,
    pub bleu: BleuConfig,
    pub weights: RewardWeights,
    pub embedder: EmbedderKind,
    pub embed_dim: usize,
    pub embed_ngram: usize,
    pub embed_addr: String,
    pub embed_timeout_ms: u64,
    pub sft: SftConfig,
    pub grpo: GrpoConfig,
    pub bucket_width: usize,
    /// Skip SFT and start GRPO from Gaussian weights.
    pub cold_start: bool,
    pub init_scale: f64,
    pub checkpoint_every: usize,
    pub record_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ngram = NgramEmbedder::default();
        Self {
            seed: 0,
            synth: SyntheticConfig::default(),
            head: HeadConfig::default(),
            template: PromptTemplate::default(),
            bleu: BleuConfig::default(),
            weights: RewardWeights::default(),
            embedder: EmbedderKind::Ngram,
            embed_dim: ngram.dim,
            embed_ngram: ngram.n_max,
            embed_addr: "127.0.0.1:7878".into(),
            embed_timeout_ms: 10_000,
            sft: SftConfig::default(),
            grpo: GrpoConfig::default(),
            bucket_width: diaglab_core::policy::DEFAULT_BUCKET_WIDTH,
            cold_start: false,
            init_scale: 0.1,
            checkpoint_every: 0,
            record_wall_time: false,
        }
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

fn parse_weights(s: &str) -> Option<Vec<f64>> {
    s.split(',').map(|t| t.trim().parse().ok()).collect()
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue { key: key.into(), value: value.into() };
        macro_rules! num {
            () => {
                value.parse().map_err(|_| bad())?
            };
        }
        match key {
            "seed" => self.seed = num!(),
            "feature_dim" => self.synth.feature_dim = num!(),
            "captionless_fraction" => self.synth.captionless_fraction = num!(),
            "features_per_record" => self.synth.features_per_record = num!(),
            "class_separation" => self.synth.separation = num!(),
            "feature_noise" => self.synth.noise_std = num!(),
            "head_lr" => self.head.lr = num!(),
            "head_epochs" => self.head.epochs = num!(),
            "template" => self.template.base_request = value.into(),
            "tokenizer" => self.bleu.mode = TokenizerMode::parse(value).ok_or_else(bad)?,
            "bleu_weights" => self.bleu.weights = parse_weights(value).ok_or_else(bad)?,
            "bleu_smoothing" => self.bleu.smoothing = parse_bool(value).ok_or_else(bad)?,
            "brevity_penalty" => self.bleu.brevity_penalty = parse_bool(value).ok_or_else(bad)?,
            "lambda_format" => self.weights.format = num!(),
            "lambda_caption" => self.weights.caption = num!(),
            "lambda_answer" => self.weights.answer = num!(),
            "embedder" => {
                self.embedder = match value {
                    "ngram" => EmbedderKind::Ngram,
                    "socket" => EmbedderKind::Socket,
                    _ => return Err(bad()),
                }
            }
            "embed_dim" => self.embed_dim = num!(),
            "embed_ngram" => self.embed_ngram = num!(),
            "embed_addr" => self.embed_addr = value.into(),
            "embed_timeout_ms" => self.embed_timeout_ms = num!(),
            "sft_epochs" => self.sft.epochs = num!(),
            "sft_lr" => self.sft.lr = num!(),
            "sft_batch_size" => self.sft.batch_size = num!(),
            "group_size" => self.grpo.group_size = num!(),
            "clip_eps" => self.grpo.clip_eps = num!(),
            "kl_beta" => self.grpo.kl_beta = num!(),
            "grpo_lr" => self.grpo.lr = num!(),
            "steps" => self.grpo.steps = num!(),
            "inner_epochs" => self.grpo.inner_epochs = num!(),
            "max_len" => self.grpo.max_len = num!(),
            "bucket_width" => self.bucket_width = num!(),
            "init" => {
                self.cold_start = match value {
                    "warm" => false,
                    "cold" => true,
                    _ => return Err(bad()),
                }
            }
            "init_scale" => self.init_scale = num!(),
            "checkpoint_every" => self.checkpoint_every = num!(),
            "record_wall_time" => self.record_wall_time = parse_bool(value).ok_or_else(bad)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Applies a config file's contents.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), ConfigError> {
        for (i, o) in overrides.iter().enumerate() {
            let (k, v) = o.as_ref().split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// All settings as `(key, value)` in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let b = |v: bool| v.to_string();
        let weights = self.bleu.weights.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",");
        vec![
            ("seed", self.seed.to_string()),
            ("feature_dim", self.synth.feature_dim.to_string()),
            ("captionless_fraction", self.synth.captionless_fraction.to_string()),
            ("features_per_record", self.synth.features_per_record.to_string()),
            ("class_separation", self.synth.separation.to_string()),
            ("feature_noise", self.synth.noise_std.to_string()),
            ("head_lr", self.head.lr.to_string()),
            ("head_epochs", self.head.epochs.to_string()),
            ("template", self.template.base_request.clone()),
            ("tokenizer", self.bleu.mode.as_str().to_string()),
            ("bleu_weights", weights),
            ("bleu_smoothing", b(self.bleu.smoothing)),
            ("brevity_penalty", b(self.bleu.brevity_penalty)),
            ("lambda_format", self.weights.format.to_string()),
            ("lambda_caption", self.weights.caption.to_string()),
            ("lambda_answer", self.weights.answer.to_string()),
            ("embedder", match self.embedder {
                EmbedderKind::Ngram => "ngram".into(),
                EmbedderKind::Socket => "socket".into(),
            }),
            ("embed_dim", self.embed_dim.to_string()),
            ("embed_ngram", self.embed_ngram.to_string()),
            ("embed_addr", self.embed_addr.clone()),
            ("embed_timeout_ms", self.embed_timeout_ms.to_string()),
            ("sft_epochs", self.sft.epochs.to_string()),
            ("sft_lr", self.sft.lr.to_string()),
            ("sft_batch_size", self.sft.batch_size.to_string()),
            ("group_size", self.grpo.group_size.to_string()),
            ("clip_eps", self.grpo.clip_eps.to_string()),
            ("kl_beta", self.grpo.kl_beta.to_string()),
            ("grpo_lr", self.grpo.lr.to_string()),
            ("steps", self.grpo.steps.to_string()),
            ("inner_epochs", self.grpo.inner_epochs.to_string()),
            ("max_len", self.grpo.max_len.to_string()),
            ("bucket_width", self.bucket_width.to_string()),
            ("init", if self.cold_start { "cold" } else { "warm" }.into()),
            ("init_scale", self.init_scale.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("record_wall_time", b(self.record_wall_time)),
        ]
    }

    /// Config-file text that reproduces this configuration.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn init_mode(&self) -> InitMode {
        if self.cold_start {
            InitMode::ColdStart { scale: self.init_scale }
        } else {
            InitMode::WarmStart
        }
    }

    pub fn sft_config(&self) -> SftConfig {
        SftConfig { seed: self.seed, ..self.sft.clone() }
    }

    pub fn grpo_config(&self) -> GrpoConfig {
        GrpoConfig { seed: self.seed, weights: self.weights, ..self.grpo.clone() }
    }

    pub fn reward_config(&self) -> RewardConfig {
        RewardConfig { weights: self.weights, bleu: self.bleu.clone() }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig { bleu: self.bleu.clone(), weights: self.weights }
    }

    pub fn build_embedder(&self) -> Box<dyn Embedder> {
        match self.embedder {
            EmbedderKind::Ngram => Box::new(NgramEmbedder { n_max: self.embed_ngram, dim: self.embed_dim }),
            EmbedderKind::Socket => Box::new(SocketEmbedder::new(
                self.embed_addr.clone(),
                self.embed_dim,
                Duration::from_millis(self.embed_timeout_ms),
            )),
        }
    }
}
