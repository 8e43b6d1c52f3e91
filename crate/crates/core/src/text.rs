//! Tokenization shared by the BLEU metric and the policy vocabulary.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TokenizerMode {
    /// Whitespace-separated words, with punctuation split off.
    Whitespace,
    /// One token per non-whitespace character. Suits CJK report text.
    #[default]
    Character,
}

impl TokenizerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenizerMode::Whitespace => "whitespace",
            TokenizerMode::Character => "character",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "whitespace" => Some(TokenizerMode::Whitespace),
            "character" => Some(TokenizerMode::Character),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub mode: TokenizerMode,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Characters split off as standalone tokens in whitespace mode. Hyphens and
/// apostrophes stay inside words ("low-grade").
pub fn is_separable_punct(c: char) -> bool {
    matches!(
        c,
        ',' | '.' | ';' | ':' | '!' | '?' | '(' | ')' | '[' | ']' | '"'
            | '，' | '。' | '；' | '：' | '！' | '？' | '（' | '）' | '、'
    )
}

fn attaches_left(token: &str) -> bool {
    matches!(
        token,
        "," | "." | ";" | ":" | "!" | "?" | ")" | "]" | "，" | "。" | "；" | "：" | "！" | "？" | "）" | "、"
    )
}

fn attaches_right(token: &str) -> bool {
    matches!(token, "(" | "[" | "（")
}

pub fn tokenize(text: &str, mode: TokenizerMode) -> TokenSequence {
    let tokens = match mode {
        TokenizerMode::Character => text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| c.to_string())
            .collect(),
        TokenizerMode::Whitespace => {
            let mut out = Vec::new();
            for word in text.split_whitespace() {
                let mut current = String::new();
                for c in word.chars() {
                    if is_separable_punct(c) {
                        if !current.is_empty() {
                            out.push(core::mem::take(&mut current));
                        }
                        out.push(c.to_string());
                    } else {
                        current.push(c);
                    }
                }
                if !current.is_empty() {
                    out.push(current);
                }
            }
            out
        }
    };
    TokenSequence { tokens, mode }
}

/// Joins whitespace-mode tokens back into text: single spaces between words,
/// no space before closing punctuation or after opening brackets.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut prev: Option<&str> = None;
    for t in tokens {
        let t = t.as_ref();
        if let Some(p) = prev {
            if !attaches_left(t) && !attaches_right(p) {
                out.push(' ');
            }
        }
        out.push_str(t);
        prev = Some(t);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ws(s: &str) -> Vec<String> {
        tokenize(s, TokenizerMode::Whitespace).tokens
    }

    #[test]
    fn whitespace_runs() {
        assert_eq!(ws("a b  c"), ["a", "b", "c"]);
    }

    #[test]
    fn empty_character_input() {
        assert!(tokenize("", TokenizerMode::Character).is_empty());
    }

    #[test]
    fn punctuation_is_split_off() {
        assert_eq!(ws("ab, c"), ["ab", ",", "c"]);
        assert_eq!(ws("low-grade (mild)."), ["low-grade", "(", "mild", ")", "."]);
    }

    #[test]
    fn character_mode_skips_whitespace() {
        assert_eq!(tokenize("胃 窦炎", TokenizerMode::Character).tokens, ["胃", "窦", "炎"]);
    }

    #[test]
    fn detokenize_restores_simple_punctuation() {
        for s in ["ab, c", "tubular adenoma (low-grade).", "a b c"] {
            assert_eq!(detokenize(&ws(s)), s);
        }
    }
}
