//! Linear-softmax autoregressive token policy.
//!
//! At each position the policy activates exactly three sparse features: the
//! query class (site and classifier label), the previous token (or a begin
//! marker), and a position bucket. Logits are the sum of the three matching
//! rows of `W` (`|F| × |V|`), and the next-token distribution is their
//! softmax. Log-probabilities and their gradients with respect to `W` are
//! exact.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::augment::AugmentedPrompt;
use crate::math;
use crate::rewards::{StructuredOutput, TAG_MARKERS};
use crate::rng::{self, Domain};
use crate::text::{detokenize, tokenize, TokenizerMode};

pub const EOS: &str = "</s>";
pub const DEFAULT_MAX_LEN: usize = 64;
pub const DEFAULT_BUCKET_WIDTH: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("feature index {index} out of range for {features} features")]
    IndexOutOfRange { index: usize, features: usize },
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Accepts distinct, non-empty, whitespace-free tokens that include the
    /// six tag markers and [`EOS`]; at least 8 entries.
    pub fn new(tokens: Vec<String>) -> Result<Self, PolicyError> {
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(PolicyError::InvalidVocabulary(format!("bad token {t:?}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(PolicyError::InvalidVocabulary(format!("duplicate token {t:?}")));
            }
        }
        for required in TAG_MARKERS.iter().chain(core::iter::once(&EOS)) {
            if !index.contains_key(*required) {
                return Err(PolicyError::InvalidVocabulary(format!("missing {required}")));
            }
        }
        if tokens.len() < 8 {
            return Err(PolicyError::InvalidVocabulary(format!("{} tokens, need at least 8", tokens.len())));
        }
        Ok(Self { tokens, index })
    }

    /// Tags, then EOS, then every whitespace-mode token of the given outputs
    /// in sorted order.
    pub fn from_outputs<'a, I>(outputs: I) -> Result<Self, PolicyError>
    where
        I: IntoIterator<Item = &'a StructuredOutput>,
    {
        let mut words = alloc::collections::BTreeSet::new();
        for o in outputs {
            for seg in [&o.think, &o.caption, &o.answer] {
                words.extend(tokenize(seg, TokenizerMode::Whitespace).tokens);
            }
        }
        let mut tokens: Vec<String> = TAG_MARKERS.iter().map(|t| t.to_string()).collect();
        tokens.push(EOS.to_string());
        tokens.extend(words.into_iter().filter(|w| !TAG_MARKERS.contains(&w.as_str()) && w != EOS));
        Self::new(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn eos(&self) -> usize {
        self.index[EOS]
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<usize>, PolicyError> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).ok_or_else(|| PolicyError::UnknownToken(t.as_ref().to_string())))
            .collect()
    }

    /// Serializes a structured output as
    /// `<think> words </think> <caption> words </caption> <answer> words </answer> EOS`.
    pub fn encode_output(&self, output: &StructuredOutput) -> Result<Vec<usize>, PolicyError> {
        let mut out = Vec::new();
        let segs = [(&output.think, 0), (&output.caption, 2), (&output.answer, 4)];
        for (body, tag) in segs {
            out.push(self.id(TAG_MARKERS[tag]).expect("tag in vocab"));
            out.extend(self.encode(&tokenize(body, TokenizerMode::Whitespace).tokens)?);
            out.push(self.id(TAG_MARKERS[tag + 1]).expect("tag in vocab"));
        }
        out.push(self.eos());
        Ok(out)
    }

    /// Renders token ids as text, stopping at EOS. Tags are emitted verbatim;
    /// runs of words between tags are joined with [`detokenize`].
    pub fn render(&self, ids: &[usize]) -> String {
        let mut out = String::new();
        let mut words: Vec<&str> = Vec::new();
        for &id in ids {
            let t = self.token(id);
            if t == EOS {
                break;
            }
            if TAG_MARKERS.contains(&t) {
                out.push_str(&detokenize(&words));
                words.clear();
                out.push_str(t);
            } else {
                words.push(t);
            }
        }
        out.push_str(&detokenize(&words));
        out
    }
}

/// Layout of the sparse feature space.
///
/// Rows: `[0]` unknown query class, `[1..=Q]` known query keys (sorted),
/// then `|V| + 1` previous-token rows (the last is the begin marker), then
/// `n_buckets` position buckets of width `bucket_width` (the last bucket
/// absorbs every later position).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpec {
    query_keys: Vec<String>,
    pub vocab_size: usize,
    pub bucket_width: usize,
    pub n_buckets: usize,
}

/// The three active feature rows at one position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveFeatures(pub [usize; 3]);

/// Query-class key: `site|label`, with an empty label when the prompt has no
/// classifier output.
pub fn query_key(prompt: &AugmentedPrompt) -> String {
    format!("{}|{}", prompt.site, prompt.aux_label().unwrap_or(""))
}

impl FeatureSpec {
    pub fn new(
        query_keys: impl IntoIterator<Item = String>,
        vocab_size: usize,
        max_len: usize,
        bucket_width: usize,
    ) -> Result<Self, PolicyError> {
        if bucket_width == 0 || max_len == 0 {
            return Err(PolicyError::InvalidParams("bucket width and max_len must be positive".into()));
        }
        let mut keys: Vec<String> = query_keys.into_iter().collect();
        keys.sort();
        keys.dedup();
        let n_buckets = max_len.div_ceil(bucket_width);
        Ok(Self { query_keys: keys, vocab_size, bucket_width, n_buckets })
    }

    /// Rebuilds a spec from its stored descriptor. Keys must be strictly
    /// increasing.
    pub fn from_parts(
        query_keys: Vec<String>,
        vocab_size: usize,
        bucket_width: usize,
        n_buckets: usize,
    ) -> Result<Self, PolicyError> {
        if bucket_width == 0 || n_buckets == 0 {
            return Err(PolicyError::InvalidParams("bucket width and bucket count must be positive".into()));
        }
        if query_keys.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PolicyError::InvalidParams("query keys must be sorted and distinct".into()));
        }
        Ok(Self { query_keys, vocab_size, bucket_width, n_buckets })
    }

    pub fn query_keys(&self) -> &[String] {
        &self.query_keys
    }

    pub fn n_features(&self) -> usize {
        1 + self.query_keys.len() + self.vocab_size + 1 + self.n_buckets
    }

    /// Row of the query-class feature; 0 for keys not seen at construction.
    pub fn query_class(&self, prompt: &AugmentedPrompt) -> usize {
        let key = query_key(prompt);
        self.query_keys.binary_search(&key).map(|i| i + 1).unwrap_or(0)
    }

    pub fn prev_token_row(&self, prev: Option<usize>) -> usize {
        1 + self.query_keys.len() + prev.unwrap_or(self.vocab_size)
    }

    pub fn bucket_row(&self, position: usize) -> usize {
        let b = (position / self.bucket_width).min(self.n_buckets - 1);
        1 + self.query_keys.len() + self.vocab_size + 1 + b
    }

    fn active(&self, query_class: usize, prefix: &[usize]) -> ActiveFeatures {
        ActiveFeatures([
            query_class,
            self.prev_token_row(prefix.last().copied()),
            self.bucket_row(prefix.len()),
        ])
    }

    /// Active features for the next token after `prefix` (position
    /// `prefix.len()`).
    pub fn featurize(&self, query: &AugmentedPrompt, prefix: &[usize]) -> ActiveFeatures {
        self.active(self.query_class(query), prefix)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub vocab: Vocabulary,
    pub spec: FeatureSpec,
    /// Row-major `|F| × |V|`.
    pub weights: Vec<f64>,
}

/// One sampled output with its log-probabilities under the sampling policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub query_id: String,
    pub tokens: Vec<usize>,
    pub token_logprobs: Vec<f64>,
    pub total_logprob: f64,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Gradient with respect to `W`, stored only for rows that were touched.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseGrad {
    pub cols: usize,
    pub rows: BTreeMap<usize, Vec<f64>>,
}

impl SparseGrad {
    pub fn new(cols: usize) -> Self {
        Self { cols, rows: BTreeMap::new() }
    }

    pub fn add_row(&mut self, row: usize, scale: f64, values: &[f64]) {
        let cols = self.cols;
        let r = self.rows.entry(row).or_insert_with(|| vec![0.0; cols]);
        for (a, v) in r.iter_mut().zip(values) {
            *a += scale * v;
        }
    }

    pub fn add(&mut self, other: &SparseGrad, scale: f64) {
        for (&row, values) in &other.rows {
            self.add_row(row, scale, values);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for r in self.rows.values_mut() {
            r.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.rows.get(&row).map(|r| r[col]).unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.rows.values().flatten().map(|v| v * v).sum())
    }
}

impl PolicyParams {
    pub fn zeros(vocab: Vocabulary, spec: FeatureSpec) -> Result<Self, PolicyError> {
        if spec.vocab_size != vocab.len() {
            return Err(PolicyError::InvalidParams(format!(
                "feature spec built for {} tokens, vocabulary has {}",
                spec.vocab_size,
                vocab.len()
            )));
        }
        let n = spec.n_features() * vocab.len();
        Ok(Self { vocab, spec, weights: vec![0.0; n] })
    }

    /// Gaussian initialization with standard deviation `scale`.
    pub fn random(vocab: Vocabulary, spec: FeatureSpec, scale: f64, seed: u64) -> Result<Self, PolicyError> {
        let mut p = Self::zeros(vocab, spec)?;
        let mut rng = rng::stream(seed, Domain::PolicyInit, 0, 0);
        for w in p.weights.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = scale * z;
        }
        Ok(p)
    }

    pub fn n_features(&self) -> usize {
        self.spec.n_features()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.spec.vocab_size != self.vocab.len() {
            return Err(PolicyError::InvalidParams("vocabulary size mismatch".into()));
        }
        if self.weights.len() != self.n_features() * self.vocab_size() {
            return Err(PolicyError::InvalidParams(format!(
                "expected {} weights, found {}",
                self.n_features() * self.vocab_size(),
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(PolicyError::InvalidParams("non-finite weight".into()));
        }
        Ok(())
    }

    pub fn row(&self, f: usize) -> &[f64] {
        let v = self.vocab_size();
        &self.weights[f * v..(f + 1) * v]
    }

    pub fn row_mut(&mut self, f: usize) -> &mut [f64] {
        let v = self.vocab_size();
        &mut self.weights[f * v..(f + 1) * v]
    }

    /// `W += step · grad`.
    pub fn apply(&mut self, grad: &SparseGrad, step: f64) {
        for (&f, g) in &grad.rows {
            for (w, d) in self.row_mut(f).iter_mut().zip(g) {
                *w += step * d;
            }
        }
    }

    fn logits(&self, features: &ActiveFeatures) -> Vec<f64> {
        let mut out = self.row(features.0[0]).to_vec();
        for &f in &features.0[1..] {
            for (o, w) in out.iter_mut().zip(self.row(f)) {
                *o += w;
            }
        }
        out
    }
}

/// Next-token probabilities for the given active features.
pub fn token_distribution(params: &PolicyParams, features: &ActiveFeatures) -> Result<Vec<f64>, PolicyError> {
    let n = params.n_features();
    if let Some(&index) = features.0.iter().find(|&&f| f >= n) {
        return Err(PolicyError::IndexOutOfRange { index, features: n });
    }
    let mut p = params.logits(features);
    math::softmax_in_place(&mut p);
    Ok(p)
}

/// Ancestral sampling until EOS or `max_len` tokens.
pub fn sample_sequence<R: Rng + ?Sized>(
    params: &PolicyParams,
    query: &AugmentedPrompt,
    query_id: &str,
    max_len: usize,
    rng: &mut R,
) -> Rollout {
    let qc = params.spec.query_class(query);
    let eos = params.vocab.eos();
    let mut tokens = Vec::new();
    let mut token_logprobs = Vec::new();
    while tokens.len() < max_len.max(1) {
        let features = params.spec.active(qc, &tokens);
        let logits = params.logits(&features);
        let lse = math::log_sum_exp(&logits);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = logits.len() - 1;
        for (i, l) in logits.iter().enumerate() {
            acc += math::exp(l - lse);
            if u < acc {
                pick = i;
                break;
            }
        }
        tokens.push(pick);
        token_logprobs.push(logits[pick] - lse);
        if pick == eos {
            break;
        }
    }
    let total_logprob = token_logprobs.iter().sum();
    Rollout { query_id: query_id.to_string(), tokens, token_logprobs, total_logprob }
}

/// Argmax decoding (lowest token id on ties) until EOS or `max_len`.
pub fn greedy_sequence(params: &PolicyParams, query: &AugmentedPrompt, max_len: usize) -> Vec<usize> {
    let qc = params.spec.query_class(query);
    let eos = params.vocab.eos();
    let mut tokens = Vec::new();
    while tokens.len() < max_len.max(1) {
        let logits = params.logits(&params.spec.active(qc, &tokens));
        let pick = math::argmax(&logits);
        tokens.push(pick);
        if pick == eos {
            break;
        }
    }
    tokens
}

fn check_tokens(params: &PolicyParams, tokens: &[usize]) -> Result<(), PolicyError> {
    match tokens.iter().find(|&&t| t >= params.vocab_size()) {
        Some(t) => Err(PolicyError::UnknownToken(format!("#{t}"))),
        None => Ok(()),
    }
}

/// Per-position log-probabilities of `tokens`.
pub fn token_logprobs(params: &PolicyParams, query: &AugmentedPrompt, tokens: &[usize]) -> Result<Vec<f64>, PolicyError> {
    check_tokens(params, tokens)?;
    let qc = params.spec.query_class(query);
    Ok((0..tokens.len())
        .map(|t| {
            let logits = params.logits(&params.spec.active(qc, &tokens[..t]));
            logits[tokens[t]] - math::log_sum_exp(&logits)
        })
        .collect())
}

pub fn sequence_logprob(params: &PolicyParams, query: &AugmentedPrompt, tokens: &[usize]) -> Result<f64, PolicyError> {
    Ok(token_logprobs(params, query, tokens)?.iter().sum())
}

/// Adds `Σ_t coeff[t] · ∇_W log π(tokens[t] | prefix)` into `grad`.
pub fn accumulate_logprob_grad(
    params: &PolicyParams,
    query: &AugmentedPrompt,
    tokens: &[usize],
    coeffs: &[f64],
    grad: &mut SparseGrad,
) -> Result<(), PolicyError> {
    check_tokens(params, tokens)?;
    debug_assert_eq!(tokens.len(), coeffs.len());
    let qc = params.spec.query_class(query);
    for t in 0..tokens.len() {
        let c = coeffs[t];
        if c == 0.0 {
            continue;
        }
        let features = params.spec.active(qc, &tokens[..t]);
        let mut dir = params.logits(&features);
        math::softmax_in_place(&mut dir);
        dir.iter_mut().for_each(|p| *p = -*p);
        dir[tokens[t]] += 1.0;
        for &f in &features.0 {
            grad.add_row(f, c, &dir);
        }
    }
    Ok(())
}

/// Gradient of [`sequence_logprob`] with respect to `W`.
pub fn logprob_grad(params: &PolicyParams, query: &AugmentedPrompt, tokens: &[usize]) -> Result<SparseGrad, PolicyError> {
    let mut grad = SparseGrad::new(params.vocab_size());
    accumulate_logprob_grad(params, query, tokens, &vec![1.0; tokens.len()], &mut grad)?;
    Ok(grad)
}
