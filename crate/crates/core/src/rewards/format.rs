use alloc::format;
use alloc::string::{String, ToString};

use super::RewardError;

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const CAPTION_OPEN: &str = "<caption>";
pub const CAPTION_CLOSE: &str = "</caption>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

pub const TAG_MARKERS: [&str; 6] =
    [THINK_OPEN, THINK_CLOSE, CAPTION_OPEN, CAPTION_CLOSE, ANSWER_OPEN, ANSWER_CLOSE];

/// A generated report split into its reasoning, findings and diagnosis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuredOutput {
    pub think: String,
    pub caption: String,
    pub answer: String,
    pub raw: String,
}

impl StructuredOutput {
    /// Builds an output from segment bodies, rendering `raw` canonically.
    /// Returns `None` if a body contains a tag marker.
    pub fn new(think: &str, caption: &str, answer: &str) -> Option<Self> {
        let raw = format!(
            "{THINK_OPEN}{think}{THINK_CLOSE}{CAPTION_OPEN}{caption}{CAPTION_CLOSE}{ANSWER_OPEN}{answer}{ANSWER_CLOSE}"
        );
        parse_structured_output(&raw).ok()
    }
}

fn has_marker(s: &str) -> bool {
    TAG_MARKERS.iter().any(|m| s.contains(m))
}

/// Consumes `open body close` from the front of `rest` (after leading
/// whitespace) and returns the body and the remainder.
fn segment<'a>(rest: &'a str, open: &str, close: &str) -> Option<(&'a str, &'a str)> {
    let rest = rest.trim_start().strip_prefix(open)?;
    let end = rest.find(close)?;
    let body = &rest[..end];
    if has_marker(body) {
        return None;
    }
    Some((body, &rest[end + close.len()..]))
}

fn segments(text: &str) -> Option<(&str, &str, &str)> {
    let (think, rest) = segment(text, THINK_OPEN, THINK_CLOSE)?;
    let (caption, rest) = segment(rest, CAPTION_OPEN, CAPTION_CLOSE)?;
    let (answer, rest) = segment(rest, ANSWER_OPEN, ANSWER_CLOSE)?;
    rest.trim().is_empty().then_some((think, caption, answer))
}

/// 1 iff `text` is exactly `<think>…</think><caption>…</caption><answer>…</answer>`
/// with optional whitespace between and around the segments, each pair once
/// and in that order, and no tag marker inside any body.
pub fn format_reward(text: &str) -> u8 {
    u8::from(segments(text).is_some())
}

pub fn parse_structured_output(text: &str) -> Result<StructuredOutput, RewardError> {
    let (think, caption, answer) = segments(text).ok_or(RewardError::InvalidFormat)?;
    Ok(StructuredOutput {
        think: think.trim().to_string(),
        caption: caption.trim().to_string(),
        answer: answer.trim().to_string(),
        raw: text.to_string(),
    })
}
