//! Analytic gradients against central finite differences.

mod common;

use common::{prompt, small_params};
use diaglab_core::policy::{logprob_grad, sample_sequence, sequence_logprob, PolicyParams, Rollout, SparseGrad};
use diaglab_core::rng::{stream, Domain};
use diaglab_core::rewards::StructuredOutput;
use diaglab_core::train::{compute_advantages, grpo_objective_and_grad, sft_loss_and_grad, GroupSample, GrpoConfig};
use rand::Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

/// Relative error between the analytic gradient and a full central-difference
/// gradient of `f`, measured as a vector norm.
fn fd_rel_error(params: &PolicyParams, analytic: &SparseGrad, f: impl Fn(&PolicyParams) -> f64) -> f64 {
    let v = params.vocab_size();
    let mut diff = 0.0;
    let mut scale = 0.0;
    let mut p = params.clone();
    for i in 0..params.weights.len() {
        let w = p.weights[i];
        p.weights[i] = w + H;
        let up = f(&p);
        p.weights[i] = w - H;
        let down = f(&p);
        p.weights[i] = w;
        let numeric = (up - down) / (2.0 * H);
        let a = analytic.get(i / v, i % v);
        diff += (a - numeric).powi(2);
        scale += a.powi(2).max(numeric.powi(2));
    }
    if scale == 0.0 {
        0.0
    } else {
        (diff / scale).sqrt()
    }
}

#[test]
fn logprob_gradient_matches_finite_differences() {
    for inst in 0..50u64 {
        let params = small_params(1 + (inst % 3) as usize, 0.8, inst);
        assert!(params.n_features() <= 20 && params.vocab_size() <= 10);
        let q = prompt("s", Some(if inst % 2 == 0 { "x" } else { "y" }));
        let r = sample_sequence(&params, &q, "q", 8, &mut stream(inst, Domain::Test, 0, 0));
        let g = logprob_grad(&params, &q, &r.tokens).unwrap();
        let err = fd_rel_error(&params, &g, |p| sequence_logprob(p, &q, &r.tokens).unwrap());
        assert!(err < TOL, "instance {inst}: relative error {err}");
    }
}

#[test]
fn sft_gradient_matches_finite_differences() {
    let targets = [
        StructuredOutput::new("a", "b a", "a").unwrap(),
        StructuredOutput::new("b", "a", "b b").unwrap(),
        StructuredOutput::new("a b", "a", "a").unwrap(),
    ];
    for inst in 0..50u64 {
        let params = small_params(2, 0.5, 1000 + inst);
        let prompts = [prompt("s", Some("x")), prompt("s", Some("y")), prompt("t", None)];
        let batch: Vec<_> = prompts.iter().zip(&targets).take(1 + (inst % 3) as usize).collect();
        let (_, grad) = sft_loss_and_grad(&params, &batch).unwrap();
        let err = fd_rel_error(&params, &grad, |p| sft_loss_and_grad(p, &batch).unwrap().0);
        assert!(err < TOL, "instance {inst}: relative error {err}");
    }
}

/// A group sampled from `old`, with random rewards.
fn random_group(old: &PolicyParams, g: usize, seed: u64) -> GroupSample {
    let q = prompt("s", Some("x"));
    let rollouts: Vec<Rollout> =
        (0..g).map(|i| sample_sequence(old, &q, "q", 8, &mut stream(seed, Domain::Test, 1, i as u64))).collect();
    let mut r = stream(seed, Domain::Test, 2, 0);
    let rewards: Vec<f64> = (0..g).map(|_| r.random::<f64>()).collect();
    GroupSample {
        query_id: "q".into(),
        prompt: q,
        old_logprobs: rollouts.iter().map(|r| r.total_logprob).collect(),
        rollouts,
        rewards: Vec::new(),
        advantages: compute_advantages(&rewards).unwrap(),
    }
}

/// Smallest distance from any token ratio to a clip edge.
fn edge_distance(params: &PolicyParams, old: &PolicyParams, group: &GroupSample, eps: f64) -> f64 {
    let mut d = f64::INFINITY;
    for r in &group.rollouts {
        let lp = diaglab_core::policy::token_logprobs(params, &group.prompt, &r.tokens).unwrap();
        let lo = diaglab_core::policy::token_logprobs(old, &group.prompt, &r.tokens).unwrap();
        for (a, b) in lp.iter().zip(&lo) {
            let rho = (a - b).exp();
            d = d.min((rho - (1.0 - eps)).abs()).min((rho - (1.0 + eps)).abs());
        }
    }
    d
}

#[test]
fn grpo_gradient_matches_finite_differences() {
    let mut checked = 0;
    let mut with_clipping = 0;
    let mut seed = 0u64;
    while checked < 50 {
        seed += 1;
        let g = 4 + (seed % 5) as usize;
        let cfg = GrpoConfig { group_size: g, clip_eps: 0.2, kl_beta: 0.05 + 0.1 * (seed % 3) as f64, ..GrpoConfig::default() };
        let old = small_params(2, 0.7, 2000 + seed);
        let reference = small_params(2, 0.7, 3000 + seed);
        // Move the current policy away from old so that some ratios leave
        // the trust region.
        let mut params = old.clone();
        let mut r = stream(seed, Domain::Test, 3, 0);
        for w in params.weights.iter_mut() {
            *w += 0.3 * (r.random::<f64>() - 0.5);
        }
        let group = random_group(&old, g, seed);
        // The objective has kinks at the clip edges; keep clear of them.
        if edge_distance(&params, &old, &group, cfg.clip_eps) < 1e-3 {
            continue;
        }
        let obj = grpo_objective_and_grad(&params, &old, &reference, &group, &cfg).unwrap();
        if obj.clip_fraction > 0.0 {
            with_clipping += 1;
        }
        let err = fd_rel_error(&params, &obj.grad, |p| {
            grpo_objective_and_grad(p, &old, &reference, &group, &cfg).unwrap().value
        });
        assert!(err < TOL, "seed {seed}: relative error {err}");
        checked += 1;
    }
    assert!(with_clipping >= 10, "only {with_clipping} instances exercised clipping");
}

#[test]
fn grpo_kl_only_gradient_matches_finite_differences() {
    // All-equal rewards: zero advantages, so only the KL term contributes.
    for seed in 0..10u64 {
        let cfg = GrpoConfig { group_size: 6, kl_beta: 0.5, ..GrpoConfig::default() };
        let old = small_params(1, 0.6, 4000 + seed);
        let reference = small_params(1, 0.6, 5000 + seed);
        let mut group = random_group(&old, 6, seed);
        group.advantages = compute_advantages(&[0.4; 6]).unwrap();
        let obj = grpo_objective_and_grad(&old, &old, &reference, &group, &cfg).unwrap();
        assert!(obj.grad.norm() > 0.0);
        let err = fd_rel_error(&old, &obj.grad, |p| grpo_objective_and_grad(p, &old, &reference, &group, &cfg).unwrap().value);
        assert!(err < TOL, "seed {seed}: relative error {err}");
    }
}
