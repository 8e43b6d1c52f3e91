//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test -p diaglab --test acceptance`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use diaglab_core::augment::{train_head, ClassifierHead, HeadConfig};
use diaglab_core::math::argmax;
use diaglab_core::pipeline::{prepare, roi_training_data, run_pipeline, InitMode, PipelineConfig};
use diaglab_core::policy::{
    logprob_grad, sample_sequence, sequence_logprob, token_logprobs, FeatureSpec, PolicyParams, Rollout, SparseGrad,
    Vocabulary, EOS,
};
use diaglab_core::rewards::{
    bleu, caption_reward, cosine, format_reward, BleuConfig, EmbeddingVector, NgramEmbedder, TAG_MARKERS,
};
use diaglab_core::rng::{stream, Domain};
use diaglab_core::synth::{generate_synthetic_corpus, synthetic_class_names, SyntheticConfig};
use diaglab_core::task::PromptMode;
use diaglab_core::train::{
    compute_advantages, grpo_objective_and_grad, kl_term, sft_loss_and_grad, GroupSample, GrpoConfig,
};
use diaglab_core::{AugmentedPrompt, Organ, RoiPrediction, StructuredOutput, TokenizerMode};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------- criterion 1

/// Marker scan: the markers present, in text order, must be the six tags,
/// with only whitespace outside the pairs.
fn format_oracle(text: &str) -> u8 {
    let mut found: Vec<(usize, &str)> = Vec::new();
    for m in TAG_MARKERS {
        for (pos, _) in text.match_indices(m) {
            found.push((pos, m));
        }
    }
    found.sort();
    if found.iter().map(|(_, m)| *m).collect::<Vec<_>>() != TAG_MARKERS {
        return 0;
    }
    let end = |k: usize| found[k].0 + found[k].1.len();
    let gaps = [&text[..found[0].0], &text[end(1)..found[2].0], &text[end(3)..found[4].0], &text[end(5)..]];
    u8::from(gaps.iter().all(|g| g.trim().is_empty()))
}

/// BLEU by enumerating every n-gram pair: geometric mean over the orders
/// with a non-empty candidate, zero if any such order has no match.
fn bleu_oracle(r: &[String], h: &[String], weights: &[f64]) -> f64 {
    let (mut acc, mut total_w) = (0.0, 0.0);
    for (k, w) in weights.iter().enumerate() {
        let n = k + 1;
        if h.len() < n {
            continue;
        }
        let hg: Vec<&[String]> = h.windows(n).collect();
        let rg: Vec<&[String]> = if r.len() >= n { r.windows(n).collect() } else { Vec::new() };
        let mut seen: Vec<&[String]> = Vec::new();
        let mut matches = 0;
        for g in &hg {
            if !seen.contains(g) {
                seen.push(g);
                matches += hg.iter().filter(|x| *x == g).count().min(rg.iter().filter(|x| *x == g).count());
            }
        }
        if matches == 0 {
            return 0.0;
        }
        acc += w * (matches as f64 / hg.len() as f64).ln();
        total_w += w;
    }
    if total_w == 0.0 {
        0.0
    } else {
        (acc / total_w).exp()
    }
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let format_cases: &[(&str, u8)] = &[
        ("<think>t</think><caption>c</caption><answer>a</answer>", 1),
        (" <think>t</think>\n<caption>c</caption>\t<answer>a</answer>\n", 1),
        ("<think></think><caption></caption><answer></answer>", 1),
        ("<think>a\nb</think><caption> c </caption><answer>x y</answer>", 1),
        ("<think>t</think><answer>a</answer>", 0),
        ("<caption>c</caption><answer>a</answer>", 0),
        ("<think>t</think><caption>c</caption>", 0),
        ("<think>t</think><caption>c</caption><answer>a", 0),
        ("<think>t<caption>c</caption><answer>a</answer>", 0),
        ("<think>t</think><think>u</think><caption>c</caption><answer>a</answer>", 0),
        ("<think>t</think><caption>c</caption><caption>d</caption><answer>a</answer>", 0),
        ("<think>t</think><caption>c</caption><answer>a</answer><answer>b</answer>", 0),
        ("<caption>c</caption><think>t</think><answer>a</answer>", 0),
        ("<think>t</think><answer>a</answer><caption>c</caption>", 0),
        ("<think>t<caption>c</caption></think><answer>a</answer>", 0),
        ("</think>t<think><caption>c</caption><answer>a</answer>", 0),
        ("note <think>t</think><caption>c</caption><answer>a</answer>", 0),
        ("<think>t</think><caption>c</caption><answer>a</answer> end", 0),
        ("<think>t</think> x <caption>c</caption><answer>a</answer>", 0),
        ("<think>t</think><caption>c</caption>.<answer>a</answer>", 0),
        ("<THINK>t</THINK><caption>c</caption><answer>a</answer>", 0),
        ("", 0),
        ("chronic gastritis", 0),
    ];
    for (text, want) in format_cases {
        check(format_oracle(text) == *want, format!("format oracle disagrees with the grammar on {text:?}"))?;
        check(format_reward(text) == *want, format!("format_reward({text:?}) != {want}"))?;
    }

    let ws = BleuConfig { mode: TokenizerMode::Whitespace, ..BleuConfig::default() };
    let ch = BleuConfig::default();
    let words = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
    let chars = |s: &str| s.chars().filter(|c| !c.is_whitespace()).map(String::from).collect::<Vec<_>>();
    let pairs = [
        ("a b c d", "a b c d"),
        ("a b c d e", "a b c x"),
        ("a b c d e f", "a b c d e x"),
        ("the cat sat on the mat", "the cat the cat on the mat"),
        ("a a a a", "a a a a a a"),
        ("x y z", "x y"),
        ("x y z", "x"),
        ("one two three four five", "two three four five one"),
        ("p q r s t u v", "p q r s t u w"),
        ("chronic gastritis", "chronic gastritis with erosion"),
        ("tubular adenoma", "tubular adenoma"),
    ];
    for (r, h) in pairs {
        for (cfg, tok) in [(&ws, &words as &dyn Fn(&str) -> Vec<String>), (&ch, &chars)] {
            let got = bleu(r, h, cfg).map_err(|e| e.to_string())?;
            let want = bleu_oracle(&tok(r), &tok(h), &cfg.weights);
            check((got - want).abs() < 1e-9, format!("bleu({r:?}, {h:?}) = {got}, oracle {want}"))?;
        }
    }
    // No matching 4-gram with four-gram candidates present: strictly zero.
    check(bleu("a b c d e", "a b c x", &ws).unwrap() == 0.0, "strict-zero case is not 0")?;
    check(bleu("a b c d", "a b c d", &ws).unwrap() == 1.0, "identity case is not 1")?;

    let v = |x: &[f64]| EmbeddingVector { values: x.to_vec() };
    let cos_cases = [
        (v(&[1.0, 0.0]), v(&[1.0, 0.0]), 1.0),
        (v(&[1.0, 0.0]), v(&[0.0, 1.0]), 0.0),
        (v(&[1.0, 1.0]), v(&[1.0, 0.0]), 0.5f64.sqrt()),
        (v(&[3.0, 4.0]), v(&[4.0, 3.0]), 24.0 / 25.0),
        (v(&[1.0, 2.0, 2.0]), v(&[2.0, 1.0, 2.0]), 8.0 / 9.0),
    ];
    for (a, b, want) in &cos_cases {
        let got = cosine(a, b).map_err(|e| e.to_string())?;
        check((got - want).abs() < 1e-9, format!("cosine {got} vs {want}"))?;
    }
    // Disjoint character n-grams and large buckets: cosine exactly 0.
    let e = NgramEmbedder { n_max: 3, dim: 1 << 16 };
    check(caption_reward("abc", "xyz", &e).unwrap() == 0.0, "disjoint caption cosine is not 0")?;
    check((caption_reward("mild atypia", "mild atypia", &e).unwrap() - 1.0).abs() < 1e-9, "identical caption cosine")?;

    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} format cases, {} BLEU pairs x 2 tokenizers, {} cosine cases in {:.3}s",
        format_cases.len(),
        pairs.len(),
        cos_cases.len() + 2,
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Outcome {
    let mut r = stream(2, Domain::Test, 0, 0);
    let (mut worst_mean, mut worst_std) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let rewards: Vec<f64> = (0..8).map(|_| r.random::<f64>()).collect();
        let a = compute_advantages(&rewards).map_err(|e| e.to_string())?;
        let m = mean(&a);
        let s = (a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
        worst_mean = worst_mean.max(m.abs());
        worst_std = worst_std.max((s - 1.0).abs());
    }
    check(worst_mean < 1e-12, format!("max |mean| {worst_mean:e}"))?;
    check(worst_std < 1e-6, format!("max |std - 1| {worst_std:e}"))?;
    for c in [0.0, 0.5, 1.0] {
        check(compute_advantages(&[c; 8]).unwrap() == vec![0.0; 8], "all-equal group gives non-zero advantages")?;
    }
    Ok(format!("1000 groups: max |mean| {worst_mean:.1e}, max |std-1| {worst_std:.1e}; equal groups all zero"))
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3() -> Outcome {
    let mut r = stream(3, Domain::Test, 0, 0);
    for _ in 0..10_000 {
        let x = -20.0 * r.random::<f64>();
        let y = -20.0 * r.random::<f64>();
        let k = kl_term(x, y);
        check(k >= 0.0, format!("kl({x}, {y}) = {k}"))?;
        check(kl_term(x, x) == 0.0, format!("kl({x}, {x}) != 0"))?;
    }
    let ln2 = 2f64.ln();
    let (a, b) = (kl_term(0.0, ln2), kl_term(0.0, -ln2));
    check((a - 0.30685).abs() < 1e-5, format!("rho=2 gives {a}"))?;
    check((b - 0.19315).abs() < 1e-5, format!("rho=0.5 gives {b}"))?;
    Ok(format!("10000 pairs non-negative, zero at equality; rho=2 -> {a:.5}, rho=0.5 -> {b:.5}"))
}

// ---------------------------------------------------------------- criterion 4

const H: f64 = 1e-5;

fn small_params(extra: usize, scale: f64, seed: u64) -> PolicyParams {
    let mut tokens: Vec<String> = TAG_MARKERS.iter().map(|s| s.to_string()).collect();
    tokens.push(EOS.into());
    tokens.extend(["a", "b", "c"].iter().take(extra).map(|s| s.to_string()));
    let vocab = Vocabulary::new(tokens).unwrap();
    let spec = FeatureSpec::new(["s|x".to_string(), "s|y".to_string()], vocab.len(), 8, 4).unwrap();
    PolicyParams::random(vocab, spec, scale, seed).unwrap()
}

fn prompt(site: &str, label: Option<&str>) -> AugmentedPrompt {
    AugmentedPrompt {
        text: format!("Site: {site}."),
        site: site.into(),
        aux: label.map(|l| RoiPrediction { label: l.into(), confidence: 0.9 }),
    }
}

fn fd_rel_error(params: &PolicyParams, analytic: &SparseGrad, f: impl Fn(&PolicyParams) -> f64) -> f64 {
    let v = params.vocab_size();
    let (mut diff, mut scale) = (0.0, 0.0);
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

fn near_clip_edge(params: &PolicyParams, old: &PolicyParams, group: &GroupSample, eps: f64) -> bool {
    group.rollouts.iter().any(|r| {
        let lp = token_logprobs(params, &group.prompt, &r.tokens).unwrap();
        let lo = token_logprobs(old, &group.prompt, &r.tokens).unwrap();
        lp.iter().zip(&lo).any(|(a, b)| {
            let rho = (a - b).exp();
            (rho - (1.0 - eps)).abs() < 1e-3 || (rho - (1.0 + eps)).abs() < 1e-3
        })
    })
}

fn criterion_4() -> Outcome {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut max_f = 0;
    let mut max_v = 0;
    let mut note = |p: &PolicyParams| {
        max_f = max_f.max(p.n_features());
        max_v = max_v.max(p.vocab_size());
    };

    for inst in 0..50u64 {
        let params = small_params(1 + (inst % 3) as usize, 0.8, inst);
        note(&params);
        let q = prompt("s", Some(if inst % 2 == 0 { "x" } else { "y" }));
        let r = sample_sequence(&params, &q, "q", 8, &mut stream(inst, Domain::Test, 0, 0));
        let g = logprob_grad(&params, &q, &r.tokens).unwrap();
        worst = worst.max(fd_rel_error(&params, &g, |p| sequence_logprob(p, &q, &r.tokens).unwrap()));
    }

    let targets = [
        StructuredOutput::new("a", "b a", "a").unwrap(),
        StructuredOutput::new("b", "a", "b b").unwrap(),
        StructuredOutput::new("a b", "a", "a").unwrap(),
    ];
    let prompts = [prompt("s", Some("x")), prompt("s", Some("y")), prompt("t", None)];
    for inst in 0..50u64 {
        let params = small_params(2, 0.5, 1000 + inst);
        note(&params);
        let batch: Vec<_> = prompts.iter().zip(&targets).take(1 + (inst % 3) as usize).collect();
        let (_, grad) = sft_loss_and_grad(&params, &batch).unwrap();
        worst = worst.max(fd_rel_error(&params, &grad, |p| sft_loss_and_grad(p, &batch).unwrap().0));
    }

    let (mut grpo_checked, mut clipped, mut seed) = (0, 0, 0u64);
    while grpo_checked < 50 {
        seed += 1;
        let g = 4 + (seed % 5) as usize;
        let cfg = GrpoConfig { group_size: g, kl_beta: 0.05 + 0.1 * (seed % 3) as f64, ..GrpoConfig::default() };
        let old = small_params(2, 0.7, 2000 + seed);
        let reference = small_params(2, 0.7, 3000 + seed);
        let mut params = old.clone();
        let mut r = stream(seed, Domain::Test, 3, 0);
        for w in params.weights.iter_mut() {
            *w += 0.3 * (r.random::<f64>() - 0.5);
        }
        note(&params);
        let q = prompt("s", Some("x"));
        let rollouts: Vec<Rollout> =
            (0..g).map(|i| sample_sequence(&old, &q, "q", 8, &mut stream(seed, Domain::Test, 1, i as u64))).collect();
        let rewards: Vec<f64> = (0..g).map(|_| r.random::<f64>()).collect();
        let group = GroupSample {
            query_id: "q".into(),
            prompt: q,
            old_logprobs: rollouts.iter().map(|r| r.total_logprob).collect(),
            rollouts,
            rewards: Vec::new(),
            advantages: compute_advantages(&rewards).unwrap(),
        };
        // The clipped objective has kinks at the clip edges.
        if near_clip_edge(&params, &old, &group, cfg.clip_eps) {
            continue;
        }
        let obj = grpo_objective_and_grad(&params, &old, &reference, &group, &cfg).unwrap();
        clipped += usize::from(obj.clip_fraction > 0.0);
        worst = worst.max(fd_rel_error(&params, &obj.grad, |p| {
            grpo_objective_and_grad(p, &old, &reference, &group, &cfg).unwrap().value
        }));
        grpo_checked += 1;
    }

    let elapsed = started.elapsed();
    check(worst < 1e-4, format!("worst relative error {worst:e}"))?;
    check(max_f <= 20 && max_v <= 10, format!("instance too large: |F| {max_f}, |V| {max_v}"))?;
    check(clipped >= 10, format!("only {clipped} GRPO instances had active clipping"))?;
    check(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;
    Ok(format!(
        "50 logprob + 50 SFT + 50 GRPO ({clipped} with clipping, beta > 0), |F| <= {max_f}, |V| <= {max_v}: \
         worst rel err {worst:.1e} in {:.2}s",
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5() -> Outcome {
    let started = Instant::now();
    let cfg = PipelineConfig::default();
    check(cfg.n_records == 200 && cfg.sft_n == 60 && cfg.test_n == 50, "corpus sizes")?;
    check(cfg.sft.epochs <= 5 && cfg.grpo.steps <= 500 && cfg.grpo.max_len <= 32, "training budget")?;
    check(cfg.grpo.group_size == 8 && cfg.grpo.clip_eps == 0.2 && cfg.grpo.kl_beta == 0.001, "GRPO settings")?;
    let w = &cfg.grpo.weights;
    check(w.format == 1.0 / 3.0 && w.caption == 1.0 / 3.0 && w.answer == 1.0 / 3.0, "reward weights")?;
    let run = prepare(&cfg).map_err(|e| e.to_string())?;
    check(run.split.grpo.len() == 90, format!("grpo split has {} cases", run.split.grpo.len()))?;
    let out = run_pipeline(&cfg, &NgramEmbedder::default()).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let vocab = out.params.vocab_size();
    let r = &out.report;
    check(vocab <= 64, format!("vocabulary {vocab}"))?;
    check(r.n_cases == 50, format!("{} held-out cases", r.n_cases))?;
    check(r.format_pass_rate >= 0.95, format!("format_pass_rate {}", r.format_pass_rate))?;
    check(r.reward_mean >= 0.85, format!("mean reward {}", r.reward_mean))?;
    check(elapsed < Duration::from_secs(300), format!("took {elapsed:?}"))?;
    Ok(format!(
        "vocab {vocab}, held-out format_pass_rate {:.3}, mean reward {:.3} in {:.1}s",
        r.format_pass_rate,
        r.reward_mean,
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- criterion 6

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn criterion_6() -> Outcome {
    let e = NgramEmbedder::default();
    let mut warm = Vec::new();
    let mut cold = Vec::new();
    for seed in SEEDS {
        let base = PipelineConfig { seed, ..PipelineConfig::default() };
        warm.push(run_pipeline(&base, &e).map_err(|e| e.to_string())?.report.reward_mean);
        let c = PipelineConfig { init: InitMode::ColdStart { scale: 0.1 }, ..base };
        cold.push(run_pipeline(&c, &e).map_err(|e| e.to_string())?.report.reward_mean);
    }
    let wins = warm.iter().zip(&cold).filter(|(w, c)| w > c).count();
    let detail = format!(
        "warm {:.3} vs cold {:.3} mean reward, warm ahead on {wins}/5 seeds",
        mean(&warm),
        mean(&cold)
    );
    check(mean(&warm) > mean(&cold), detail.clone())?;
    // One-sided sign test at 5 seeds: only 5/5 reaches p < 0.05.
    check(wins == SEEDS.len(), detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7() -> Outcome {
    let e = NgramEmbedder::default();
    let mut with_label = Vec::new();
    let mut site_only = Vec::new();
    for seed in SEEDS {
        let base = PipelineConfig { seed, ..PipelineConfig::default() };
        with_label.push(run_pipeline(&base, &e).map_err(|e| e.to_string())?.report.answer_bleu_mean);
        let s = PipelineConfig { prompt_mode: PromptMode::SiteOnly, ..base };
        site_only.push(run_pipeline(&s, &e).map_err(|e| e.to_string())?.report.answer_bleu_mean);
    }
    let detail = format!(
        "answer BLEU with label {:.3} vs site only {:.3} (per seed {:?} vs {:?})",
        mean(&with_label),
        mean(&site_only),
        with_label.iter().map(|x| (x * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        site_only.iter().map(|x| (x * 1000.0).round() / 1000.0).collect::<Vec<_>>()
    );
    check(with_label.iter().zip(&site_only).all(|(a, b)| a >= b), detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- criterion 8

fn head_checks(dim: usize) -> Result<(f64, f64), String> {
    let corpus = generate_synthetic_corpus(200, 8, &SyntheticConfig { feature_dim: dim, ..SyntheticConfig::default() })
        .map_err(|e| e.to_string())?;
    let records: Vec<_> = corpus.records.iter().collect();
    let mut worst_acc = 1.0f64;
    let mut worst_sum = 0.0f64;
    for organ in [Organ::Gastric, Organ::Intestinal] {
        let data = roi_training_data(&corpus, &records, organ);
        let trained =
            train_head(&data, organ, synthetic_class_names(organ), &HeadConfig::default()).map_err(|e| e.to_string())?;
        let head: &ClassifierHead = &trained.head;
        check(head.dim == dim, format!("head dim {} != {dim}", head.dim))?;
        worst_acc = worst_acc.min(trained.train_accuracy);
        for (x, _) in &data {
            let p = head.probabilities(x).map_err(|e| e.to_string())?;
            worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
            let logits = head.logits(x).map_err(|e| e.to_string())?;
            for shift in [-1e3, -3.5, 0.0, 7.25, 1e3] {
                let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
                check(argmax(&shifted) == argmax(&logits), "argmax changed under a logit shift")?;
            }
        }
    }
    check(worst_acc >= 0.99, format!("D={dim}: training accuracy {worst_acc}"))?;
    check(worst_sum < 1e-9, format!("D={dim}: softmax row sum off by {worst_sum:e}"))?;
    Ok((worst_acc, worst_sum))
}

fn criterion_8() -> Outcome {
    let mut parts = Vec::new();
    for dim in [1536, 8] {
        let (acc, sum) = head_checks(dim)?;
        parts.push(format!("D={dim}: accuracy {acc:.4}, max |row sum - 1| {sum:.1e}"));
    }
    Ok(parts.join("; ") + "; argmax shift-invariant")
}

// ---------------------------------------------------------------- criterion 9

fn diaglab(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_diaglab"))
        .current_dir(dir)
        .env_remove("DIAGLAB_SEED")
        .args(args)
        .args(["--seed", "13", "--set", "feature_dim=16", "--set", "steps=40", "--set", "checkpoint_every=10"])
        .output()
        .map_err(|e| format!("spawning diaglab {args:?}: {e}"))?;
    check(out.status.success(), format!("diaglab {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn pipeline_files(dir: &Path) -> Result<(), String> {
    let run = ["--corpus", "corpus.txt", "--split", "split.txt", "--prompts", "prompts.txt"];
    diaglab(dir, &["gen-corpus", "--n", "120", "--out", "corpus.txt"])?;
    diaglab(dir, &["split", "--corpus", "corpus.txt", "--sft-n", "30", "--test-n", "30", "--out", "split.txt"])?;
    for organ in ["gastric", "intestinal"] {
        let out = format!("{organ}.head");
        diaglab(
            dir,
            &[
                "train-classifier", "--corpus", "corpus.txt", "--features", "corpus.features.txt", "--labels",
                "corpus.labels.txt", "--split", "split.txt", "--organ", organ, "--out", &out,
            ],
        )?;
    }
    diaglab(
        dir,
        &[
            "augment", "--corpus", "corpus.txt", "--features", "corpus.features.txt", "--head", "gastric.head",
            "--head", "intestinal.head", "--out", "prompts.txt",
        ],
    )?;
    diaglab(dir, &[&["sft"][..], &run, &["--out-dir", "sft"]].concat())?;
    diaglab(dir, &[&["grpo"][..], &run, &["--out-dir", "grpo"]].concat())?;
    diaglab(dir, &[&["grpo"][..], &run, &["--out-dir", "cold", "--cold-start"]].concat())?;
    diaglab(dir, &[&["eval"][..], &run, &["--policy", "grpo/policy.ckpt", "--out", "eval.txt"]].concat())
}

fn all_files(root: &Path) -> Vec<std::path::PathBuf> {
    fn walk(dir: &Path, out: &mut Vec<std::path::PathBuf>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, out);
            } else {
                out.push(path);
            }
        }
    }
    let mut out = Vec::new();
    walk(root, &mut out);
    let mut rel: Vec<_> = out.iter().map(|p| p.strip_prefix(root).unwrap().to_path_buf()).collect();
    rel.sort();
    rel
}

fn criterion_9() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline_files(a.path())?;
    pipeline_files(b.path())?;
    let files = all_files(a.path());
    check(files == all_files(b.path()), "runs produced different file sets")?;
    let mut checkpoints = 0;
    let mut logs = 0;
    for f in &files {
        let read = |root: &Path| std::fs::read(root.join(f)).map_err(|e| format!("{}: {e}", f.display()));
        let (x, y) = (read(a.path())?, read(b.path())?);
        check(x == y, format!("{} differs between runs", f.display()))?;
        let name = f.to_string_lossy();
        checkpoints += usize::from(name.ends_with(".ckpt") || name.ends_with(".head"));
        logs += usize::from(name.ends_with("metrics.log"));
    }
    check(logs == 3 && checkpoints >= 10, format!("only {logs} logs and {checkpoints} checkpoints compared"))?;
    Ok(format!("{} files byte-identical across two runs ({logs} metrics logs, {checkpoints} checkpoints)", files.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("reward oracles", criterion_1),
        ("advantage standardization", criterion_2),
        ("KL estimator", criterion_3),
        ("gradient checks", criterion_4),
        ("end-to-end convergence", criterion_5),
        ("warm-start ablation", criterion_6),
        ("prompt-augmentation ablation", criterion_7),
        ("classifier head", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
