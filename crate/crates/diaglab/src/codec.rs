//! Line codec shared by the text file formats.
//!
//! A record is one line of tab-separated `key=value` fields. Values escape
//! backslash, tab, newline and carriage return as `\\`, `\t`, `\n`, `\r`, so
//! any UTF-8 string survives a round trip and a record never spans lines.

use std::fmt::Write as _;

use crate::error::FormatError;

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out
}

pub fn unescape(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => return Err(format!("unknown escape \\{other}")),
            None => return Err("dangling backslash".into()),
        }
    }
    Ok(out)
}

/// Builder for one output line.
#[derive(Debug, Default)]
pub struct LineWriter {
    buf: String,
}

impl LineWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        if !self.buf.is_empty() {
            self.buf.push('\t');
        }
        let _ = write!(self.buf, "{key}={}", escape(&value.to_string()));
        self
    }

    pub fn opt_field<T: std::fmt::Display>(self, key: &str, value: Option<T>) -> Self {
        match value {
            Some(v) => self.field(key, v),
            None => self,
        }
    }

    pub fn finish(mut self) -> String {
        self.buf.push('\n');
        self.buf
    }
}

/// Parsed fields of one line, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Fields {
    line: usize,
    pairs: Vec<(String, String)>,
}

impl Fields {
    pub fn parse(line_no: usize, line: &str) -> Result<Self, FormatError> {
        let bad = |reason: String| FormatError::MalformedLine { line: line_no, reason };
        let mut pairs: Vec<(String, String)> = Vec::new();
        for part in line.split('\t') {
            let (k, v) = part.split_once('=').ok_or_else(|| bad(format!("field without '=': {part:?}")))?;
            if k.is_empty() {
                return Err(bad("empty key".into()));
            }
            if pairs.iter().any(|(pk, _)| pk == k) {
                return Err(bad(format!("repeated key {k}")));
            }
            pairs.push((k.to_string(), unescape(v).map_err(bad)?));
        }
        Ok(Self { line: line_no, pairs })
    }

    pub fn line(&self) -> usize {
        self.line
    }

    pub fn malformed(&self, reason: impl Into<String>) -> FormatError {
        FormatError::MalformedLine { line: self.line, reason: reason.into() }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, FormatError> {
        self.get(key).ok_or_else(|| self.malformed(format!("missing key {key}")))
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<T, FormatError> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| self.malformed(format!("bad value for {key}: {raw:?}")))
    }

    pub fn parse_opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, FormatError> {
        match self.get(key) {
            None => Ok(None),
            Some(_) => self.parse_value(key).map(Some),
        }
    }

    /// Rejects keys outside `allowed`.
    pub fn only(&self, allowed: &[&str]) -> Result<(), FormatError> {
        match self.pairs.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            Some((k, _)) => Err(self.malformed(format!("unknown key {k}"))),
            None => Ok(()),
        }
    }
}

/// Numbered non-blank lines (1-based), with a trailing `\r` removed.
pub fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Space-separated floats written with the shortest round-trip
/// representation.
pub fn join_floats(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s
}

pub fn parse_floats(line: usize, s: &str) -> Result<Vec<f64>, FormatError> {
    s.split_ascii_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| FormatError::MalformedLine { line, reason: format!("not a number: {t:?}") })
        })
        .collect()
}
