//! Supervised warm start and group-relative policy optimization.
//!
//! The GRPO objective for one group of `G` rollouts is
//!
//! ```text
//! J = 1/G Σ_i 1/T_i Σ_t [ min(ρ_it A_i, clip(ρ_it, 1-ε, 1+ε) A_i) - β k_it ]
//! ρ_it = π_θ(o_it | ·) / π_old(o_it | ·)
//! k_it = r - ln r - 1,  r = π_ref(o_it | ·) / π_θ(o_it | ·)
//! A_i  = (R_i - mean R) / std R
//! ```
//!
//! Ratios and the KL estimate are taken per token, and every token of a
//! rollout shares that rollout's advantage.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::augment::AugmentedPrompt;
use crate::math;
use crate::policy::{accumulate_logprob_grad, sample_sequence, token_logprobs, PolicyError, PolicyParams, Rollout, SparseGrad};
use crate::rewards::{composite_reward, BleuConfig, Embedder, RewardBreakdown, RewardConfig, RewardError, RewardWeights, StructuredOutput};
use crate::rng::{self, Domain};
use crate::task::Case;

/// Rewards whose population standard deviation falls below this give zero
/// advantages.
pub const ADVANTAGE_STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("group needs at least two rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("group inconsistent with configuration: {0}")]
    GroupMismatch(String),
    #[error("split is empty")]
    EmptySplit,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SftConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self { epochs: 5, lr: 1.0, batch_size: 4, seed: 0 }
    }
}

/// Mean negative log-likelihood of the serialized references and its
/// gradient with respect to `W`.
pub fn sft_loss_and_grad(
    params: &PolicyParams,
    batch: &[(&AugmentedPrompt, &StructuredOutput)],
) -> Result<(f64, SparseGrad), PolicyError> {
    let mut grad = SparseGrad::new(params.vocab_size());
    if batch.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = -1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (prompt, target) in batch {
        let tokens = params.vocab.encode_output(target)?;
        loss -= token_logprobs(params, prompt, &tokens)?.iter().sum::<f64>();
        accumulate_logprob_grad(params, prompt, &tokens, &vec![scale; tokens.len()], &mut grad)?;
    }
    Ok((loss / batch.len() as f64, grad))
}

/// One pass of minibatch gradient descent over `examples`, shuffled by
/// `(config.seed, epoch)`. Returns the mean pre-update batch loss.
pub fn sft_epoch(
    params: &mut PolicyParams,
    examples: &[(&AugmentedPrompt, &StructuredOutput)],
    config: &SftConfig,
    epoch: usize,
) -> Result<f64, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptySplit);
    }
    if config.batch_size == 0 {
        return Err(TrainError::InvalidConfig("batch_size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng::stream(config.seed, Domain::SftShuffle, epoch as u64, 0));
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(config.batch_size) {
        let batch: Vec<_> = chunk.iter().map(|&i| examples[i]).collect();
        let (loss, grad) = sft_loss_and_grad(params, &batch)?;
        params.apply(&grad, -config.lr);
        total += loss;
        batches += 1;
    }
    Ok(total / batches as f64)
}

/// Standardizes rewards within a group using the population standard
/// deviation. Degenerate groups (std below [`ADVANTAGE_STD_FLOOR`]) get all
/// zeros.
pub fn compute_advantages(rewards: &[f64]) -> Result<Vec<f64>, TrainError> {
    if rewards.len() < 2 {
        return Err(TrainError::GroupTooSmall(rewards.len()));
    }
    let mean = math::mean(rewards);
    let std = math::std_dev(rewards);
    if std < ADVANTAGE_STD_FLOOR {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Per-token KL estimate `ρ - ln ρ - 1` with `ρ = exp(logp_ref - logp_theta)`.
pub fn kl_term(logp_theta: f64, logp_ref: f64) -> f64 {
    let d = logp_ref - logp_theta;
    math::expm1(d) - d
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub weights: RewardWeights,
    pub lr: f64,
    pub steps: usize,
    /// Gradient updates per sampling round.
    pub inner_epochs: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            clip_eps: 0.2,
            kl_beta: 0.001,
            weights: RewardWeights::default(),
            lr: 0.05,
            steps: 500,
            inner_epochs: 1,
            max_len: crate::policy::DEFAULT_MAX_LEN,
            seed: 0,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.group_size < 2 {
            return bad("group_size must be at least 2");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if self.kl_beta.is_nan() || self.kl_beta < 0.0 {
            return bad("kl_beta must be non-negative");
        }
        if self.inner_epochs == 0 || self.max_len == 0 {
            return bad("inner_epochs and max_len must be positive");
        }
        self.weights.validate()?;
        Ok(())
    }
}

/// One sampled group for a single query.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSample {
    pub query_id: String,
    pub prompt: AugmentedPrompt,
    pub rollouts: Vec<Rollout>,
    /// Sequence log-probabilities under the sampling policy.
    pub old_logprobs: Vec<f64>,
    pub rewards: Vec<RewardBreakdown>,
    pub advantages: Vec<f64>,
}

impl GroupSample {
    pub fn mean_reward(&self) -> f64 {
        math::mean(&self.rewards.iter().map(|r| r.total).collect::<Vec<_>>())
    }

    pub fn format_pass_rate(&self) -> f64 {
        math::mean(&self.rewards.iter().map(|r| f64::from(r.format)).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrpoObjective {
    pub value: f64,
    pub grad: SparseGrad,
    /// Fraction of tokens whose clipped branch is strictly active.
    pub clip_fraction: f64,
    /// Group mean of per-rollout token-mean KL estimates.
    pub mean_kl: f64,
}

/// Objective value and analytic gradient with respect to `params`.
///
/// `old_params` must be the policy the group was sampled from: recorded
/// per-token log-probabilities are checked against it.
pub fn grpo_objective_and_grad(
    params: &PolicyParams,
    old_params: &PolicyParams,
    ref_params: &PolicyParams,
    group: &GroupSample,
    config: &GrpoConfig,
) -> Result<GrpoObjective, TrainError> {
    let g = group.rollouts.len();
    if g != config.group_size || group.advantages.len() != g || group.old_logprobs.len() != g {
        return Err(TrainError::GroupMismatch(format!(
            "{} rollouts, {} advantages, {} old log-probs, group_size {}",
            g,
            group.advantages.len(),
            group.old_logprobs.len(),
            config.group_size
        )));
    }
    let eps = config.clip_eps;
    let beta = config.kl_beta;
    let mut grad = SparseGrad::new(params.vocab_size());
    let mut value = 0.0;
    let mut kl_sum = 0.0;
    let mut clipped = 0usize;
    let mut n_tokens = 0usize;

    for (i, rollout) in group.rollouts.iter().enumerate() {
        let t_len = rollout.tokens.len();
        if t_len == 0 || rollout.token_logprobs.len() != t_len {
            return Err(TrainError::GroupMismatch(format!("rollout {i} is empty or inconsistent")));
        }
        let lp = token_logprobs(params, &group.prompt, &rollout.tokens)?;
        let lp_old = token_logprobs(old_params, &group.prompt, &rollout.tokens)?;
        let lp_ref = token_logprobs(ref_params, &group.prompt, &rollout.tokens)?;
        let drift = lp_old.iter().zip(&rollout.token_logprobs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if drift > 1e-6 {
            return Err(TrainError::GroupMismatch(format!("rollout {i} was not sampled from old_params")));
        }
        let adv = group.advantages[i];
        let w = 1.0 / (g as f64 * t_len as f64);
        let mut coeffs = Vec::with_capacity(t_len);
        let mut kl_rollout = 0.0;
        for t in 0..t_len {
            let ratio = math::exp(lp[t] - lp_old[t]);
            let unclipped = ratio * adv;
            let clipped_term = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
            let (surrogate, d_surrogate) = if unclipped <= clipped_term {
                (unclipped, unclipped)
            } else {
                clipped += 1;
                (clipped_term, 0.0)
            };
            let kl = kl_term(lp[t], lp_ref[t]);
            let ref_ratio = math::exp(lp_ref[t] - lp[t]);
            // d k / d lp = 1 - ref_ratio
            value += w * (surrogate - beta * kl);
            coeffs.push(w * (d_surrogate - beta * (1.0 - ref_ratio)));
            kl_rollout += kl;
        }
        kl_sum += kl_rollout / t_len as f64;
        n_tokens += t_len;
        accumulate_logprob_grad(params, &group.prompt, &rollout.tokens, &coeffs, &mut grad)?;
    }
    Ok(GrpoObjective {
        value,
        grad,
        clip_fraction: clipped as f64 / n_tokens as f64,
        mean_kl: kl_sum / g as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainMetrics {
    pub step: usize,
    pub mean_reward: f64,
    pub format_pass_rate: f64,
    pub mean_kl: f64,
    pub clip_fraction: f64,
    /// Negated objective at the first inner update.
    pub loss: f64,
    /// Seconds; left at 0 here, filled in by callers that own a clock.
    pub wall_time: f64,
}

/// Draws `G` rollouts for `case` from `params` and scores them.
/// Rollout `i` uses the stream `(seed, step, i)`.
pub fn sample_group(
    params: &PolicyParams,
    case: &Case,
    reward: &RewardConfig,
    embedder: &dyn Embedder,
    config: &GrpoConfig,
    step: usize,
) -> Result<GroupSample, TrainError> {
    let mut rollouts = Vec::with_capacity(config.group_size);
    let mut rewards = Vec::with_capacity(config.group_size);
    for i in 0..config.group_size {
        let mut r = rng::stream(config.seed, Domain::GrpoRollout, step as u64, i as u64);
        let rollout = sample_sequence(params, &case.prompt, case.id(), config.max_len, &mut r);
        let text = params.vocab.render(&rollout.tokens);
        rewards.push(composite_reward(&text, &case.record, reward, embedder)?);
        rollouts.push(rollout);
    }
    let totals: Vec<f64> = rewards.iter().map(|r| r.total).collect();
    let advantages = compute_advantages(&totals)?;
    Ok(GroupSample {
        query_id: case.id().into(),
        prompt: case.prompt.clone(),
        old_logprobs: rollouts.iter().map(|r| r.total_logprob).collect(),
        rollouts,
        rewards,
        advantages,
    })
}

/// One sampling round: pick a query, freeze the current policy as the old
/// policy, sample and score a group, then take `inner_epochs` gradient
/// ascent steps on the clipped objective.
pub fn grpo_step(
    params: &PolicyParams,
    ref_params: &PolicyParams,
    cases: &[Case],
    bleu: &BleuConfig,
    embedder: &dyn Embedder,
    config: &GrpoConfig,
    step: usize,
) -> Result<(PolicyParams, TrainMetrics, GroupSample), TrainError> {
    config.validate()?;
    if cases.is_empty() {
        return Err(TrainError::EmptySplit);
    }
    let pick = rng::stream(config.seed, Domain::GrpoQuery, step as u64, 0).random_range(0..cases.len());
    let reward = RewardConfig { weights: config.weights, bleu: bleu.clone() };
    let old = params.clone();
    let group = sample_group(&old, &cases[pick], &reward, embedder, config, step)?;

    let mut current = old.clone();
    let mut first: Option<(f64, f64)> = None;
    let mut clip_total = 0.0;
    for _ in 0..config.inner_epochs {
        let obj = grpo_objective_and_grad(&current, &old, ref_params, &group, config)?;
        first.get_or_insert((obj.value, obj.mean_kl));
        clip_total += obj.clip_fraction;
        current.apply(&obj.grad, config.lr);
    }
    let (objective, mean_kl) = first.expect("at least one inner epoch");
    let metrics = TrainMetrics {
        step,
        mean_reward: group.mean_reward(),
        format_pass_rate: group.format_pass_rate(),
        mean_kl,
        clip_fraction: clip_total / config.inner_epochs as f64,
        loss: -objective,
        wall_time: 0.0,
    };
    Ok((current, metrics, group))
}
