//! Classifier-head and policy checkpoints.
//!
//! Both are line-oriented text with a versioned first line. Every other line
//! is a key followed by tab-separated (escaped) values; weight matrices
//! follow their key line with one row per line, values space separated.
//!
//! ```text
//! diaglab-head v1
//! organ   gastric
//! D       1536
//! C       3
//! class_names     <name>  <name>  <name>
//! weights                     (then D rows of C values)
//! bias    <C values>
//! ```
//!
//! ```text
//! diaglab-policy v1
//! step    <completed grpo steps>
//! vocab   <token> ...
//! query_keys      <key> ...
//! bucket_width    8
//! n_buckets       8
//! weights <F>     <V>         (then F rows of V values)
//! ```

use std::path::Path;

use diaglab_core::augment::ClassifierHead;
use diaglab_core::corpus::Organ;
use diaglab_core::policy::{FeatureSpec, PolicyParams, Vocabulary};

use crate::codec::{escape, join_floats, parse_floats, unescape};
use crate::error::{read_text, write_text, FormatError};

pub const HEAD_HEADER: &str = "diaglab-head v1";
pub const POLICY_HEADER: &str = "diaglab-policy v1";

fn kv_line(key: &str, values: impl IntoIterator<Item = String>) -> String {
    let mut s = key.to_string();
    for v in values {
        s.push('\t');
        s.push_str(&escape(&v));
    }
    s.push('\n');
    s
}

/// Cursor over the lines of a checkpoint.
struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self { iter: text.lines().enumerate() }
    }

    fn next_line(&mut self) -> Result<(usize, &'a str), FormatError> {
        match self.iter.next() {
            Some((i, l)) => Ok((i + 1, l)),
            None => Err(FormatError::Invalid("checkpoint ends early".into())),
        }
    }

    fn header(&mut self, want: &str) -> Result<(), FormatError> {
        let (n, l) = self.next_line()?;
        if l != want {
            return Err(FormatError::MalformedLine { line: n, reason: format!("expected header {want:?}") });
        }
        Ok(())
    }

    /// Next line, which must start with `key`; returns its unescaped values.
    fn key(&mut self, key: &str) -> Result<(usize, Vec<String>), FormatError> {
        let (n, l) = self.next_line()?;
        let mut parts = l.split('\t');
        if parts.next() != Some(key) {
            return Err(FormatError::MalformedLine { line: n, reason: format!("expected key {key}") });
        }
        let values = parts
            .map(|p| unescape(p).map_err(|reason| FormatError::MalformedLine { line: n, reason }))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((n, values))
    }

    fn scalar<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, FormatError> {
        let (n, v) = self.key(key)?;
        match v.as_slice() {
            [one] => one
                .parse()
                .map_err(|_| FormatError::MalformedLine { line: n, reason: format!("bad value for {key}") }),
            _ => Err(FormatError::MalformedLine { line: n, reason: format!("{key} takes one value") }),
        }
    }

    fn row(&mut self, width: usize) -> Result<Vec<f64>, FormatError> {
        let (n, l) = self.next_line()?;
        let row = parse_floats(n, l)?;
        if row.len() != width {
            return Err(FormatError::MalformedLine { line: n, reason: format!("expected {width} values") });
        }
        Ok(row)
    }

    fn end(&mut self) -> Result<(), FormatError> {
        match self.iter.find(|(_, l)| !l.trim().is_empty()) {
            Some((i, _)) => Err(FormatError::MalformedLine { line: i + 1, reason: "trailing content".into() }),
            None => Ok(()),
        }
    }
}

pub fn format_head(head: &ClassifierHead) -> String {
    let c = head.classes();
    let mut s = format!("{HEAD_HEADER}\n");
    s += &kv_line("organ", [head.organ.as_str().to_string()]);
    s += &kv_line("D", [head.dim.to_string()]);
    s += &kv_line("C", [c.to_string()]);
    s += &kv_line("class_names", head.class_names.iter().cloned());
    s += "weights\n";
    for row in head.weights.chunks(c) {
        s += &join_floats(row);
        s.push('\n');
    }
    s += &kv_line("bias", [join_floats(&head.bias)]);
    s
}

pub fn parse_head(text: &str) -> Result<ClassifierHead, FormatError> {
    let mut lines = Lines::new(text);
    lines.header(HEAD_HEADER)?;
    let organ_raw: String = lines.scalar("organ")?;
    let organ = Organ::parse(&organ_raw).ok_or_else(|| FormatError::Invalid(format!("unknown organ {organ_raw}")))?;
    let dim: usize = lines.scalar("D")?;
    let c: usize = lines.scalar("C")?;
    let (n, class_names) = lines.key("class_names")?;
    if class_names.len() != c {
        return Err(FormatError::MalformedLine { line: n, reason: format!("expected {c} class names") });
    }
    lines.key("weights")?;
    let mut weights = Vec::with_capacity(dim * c);
    for _ in 0..dim {
        weights.extend(lines.row(c)?);
    }
    let (n, bias_raw) = lines.key("bias")?;
    let bias = parse_floats(n, &bias_raw.join(" "))?;
    lines.end()?;
    let head = ClassifierHead { organ, dim, weights, bias, class_names };
    head.validate().map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok(head)
}

pub fn read_head(path: &Path) -> Result<ClassifierHead, FormatError> {
    parse_head(&read_text(path)?).map_err(|e| e.in_file(path))
}

pub fn write_head(head: &ClassifierHead, path: &Path) -> Result<(), FormatError> {
    write_text(path, &format_head(head))
}

/// Policy parameters plus the number of GRPO steps already taken.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyCheckpoint {
    pub params: PolicyParams,
    pub step: usize,
}

pub fn format_policy(ckpt: &PolicyCheckpoint) -> String {
    let p = &ckpt.params;
    let v = p.vocab_size();
    let mut s = format!("{POLICY_HEADER}\n");
    s += &kv_line("step", [ckpt.step.to_string()]);
    s += &kv_line("vocab", p.vocab.tokens().iter().cloned());
    s += &kv_line("query_keys", p.spec.query_keys().iter().cloned());
    s += &kv_line("bucket_width", [p.spec.bucket_width.to_string()]);
    s += &kv_line("n_buckets", [p.spec.n_buckets.to_string()]);
    s += &kv_line("weights", [p.n_features().to_string(), v.to_string()]);
    for row in p.weights.chunks(v) {
        s += &join_floats(row);
        s.push('\n');
    }
    s
}

pub fn parse_policy(text: &str) -> Result<PolicyCheckpoint, FormatError> {
    let invalid = |e: diaglab_core::policy::PolicyError| FormatError::Invalid(e.to_string());
    let mut lines = Lines::new(text);
    lines.header(POLICY_HEADER)?;
    let step: usize = lines.scalar("step")?;
    let (_, tokens) = lines.key("vocab")?;
    let vocab = Vocabulary::new(tokens).map_err(invalid)?;
    let (_, keys) = lines.key("query_keys")?;
    let bucket_width: usize = lines.scalar("bucket_width")?;
    let n_buckets: usize = lines.scalar("n_buckets")?;
    let spec = FeatureSpec::from_parts(keys, vocab.len(), bucket_width, n_buckets).map_err(invalid)?;
    let (n, dims) = lines.key("weights")?;
    let expected = [spec.n_features().to_string(), vocab.len().to_string()];
    if dims != expected {
        return Err(FormatError::MalformedLine {
            line: n,
            reason: format!("weights shape {dims:?} does not match descriptor {expected:?}"),
        });
    }
    let mut params = PolicyParams::zeros(vocab, spec).map_err(invalid)?;
    let v = params.vocab_size();
    for f in 0..params.n_features() {
        let row = lines.row(v)?;
        params.row_mut(f).copy_from_slice(&row);
    }
    lines.end()?;
    params.validate().map_err(invalid)?;
    Ok(PolicyCheckpoint { params, step })
}

pub fn read_policy(path: &Path) -> Result<PolicyCheckpoint, FormatError> {
    parse_policy(&read_text(path)?).map_err(|e| e.in_file(path))
}

pub fn write_policy(ckpt: &PolicyCheckpoint, path: &Path) -> Result<(), FormatError> {
    write_text(path, &format_policy(ckpt))
}
