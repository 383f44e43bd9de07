//! Tokenization shared by every component.
//!
//! Tokens are maximal runs of alphanumeric characters, lowercased. Everything
//! else (whitespace, punctuation, symbols) separates tokens. Each token keeps
//! the byte span it came from so segments can be cut out of the original text.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Human-readable description recorded in corpus manifests.
pub const TOKEN_PATTERN: &str = "alphanumeric runs, lowercased; all other characters separate";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub span: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self { lowercase: true }
    }
}

impl TokenizerConfig {
    pub fn tokenize_with_spans(&self, text: &str) -> Vec<Token> {
        let mut out = Vec::new();
        let mut start: Option<usize> = None;
        for (i, ch) in text.char_indices() {
            if ch.is_alphanumeric() {
                if start.is_none() {
                    start = Some(i);
                }
            } else if let Some(s) = start.take() {
                out.push(self.make_token(text, s..i));
            }
        }
        if let Some(s) = start {
            out.push(self.make_token(text, s..text.len()));
        }
        out
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        self.tokenize_with_spans(text)
            .into_iter()
            .map(|t| t.text)
            .collect()
    }

    fn make_token(&self, text: &str, span: Range<usize>) -> Token {
        let raw = &text[span.clone()];
        let text = if self.lowercase {
            raw.to_lowercase()
        } else {
            raw.to_string()
        };
        Token { text, span }
    }
}

/// Tokenize with the default configuration.
pub fn tokenize(text: &str) -> Vec<String> {
    TokenizerConfig::default().tokenize(text)
}

/// Collapse every whitespace run to a single space and trim the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Split text into sentences on `.`, `!`, `?` and newlines. Returned slices
/// keep their terminators stripped and are never empty after trimming.
pub fn split_sentences(text: &str) -> Vec<&str> {
    text.split(['.', '!', '?', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Smoothed inverse document frequency, `ln((1 + N) / (1 + df)) + 1`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    pub n_docs: usize,
    pub weights: BTreeMap<String, f64>,
}

impl IdfTable {
    pub fn from_token_lists<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut df: HashMap<&str, usize> = HashMap::new();
        let mut n_docs = 0;
        for tokens in docs {
            n_docs += 1;
            let distinct: HashSet<&str> = tokens.iter().map(String::as_str).collect();
            for t in distinct {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let weights = df
            .into_iter()
            .map(|(t, d)| (t.to_string(), smooth_idf(n_docs, d)))
            .collect();
        Self { n_docs, weights }
    }

    /// Weight of a term; terms never seen in the corpus get the maximum
    /// weight a term with `df = 0` would have.
    pub fn get(&self, term: &str) -> f64 {
        self.weights
            .get(term)
            .copied()
            .unwrap_or_else(|| smooth_idf(self.n_docs, 0))
    }

    pub fn known(&self, term: &str) -> Option<f64> {
        self.weights.get(term).copied()
    }
}

fn smooth_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}
