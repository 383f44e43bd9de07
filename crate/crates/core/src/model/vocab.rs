//! Input vocabulary of the student encoder.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::data::{FragmentPool, INDEX_PREFIX, RETRIEVE_PREFIX};
use crate::text::TokenizerConfig;

pub const INDEX_TOKEN: &str = "[I]";
pub const RETRIEVE_TOKEN: &str = "[R]";
/// The task tokens occupy the first ids.
pub const TASK_TOKENS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    pub tokenizer: TokenizerConfig,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokenizer: TokenizerConfig,
    tokens: Vec<String>,
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Self {
        let index = r
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            tokens: r.tokens,
            index,
            tokenizer: r.tokenizer,
        }
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        Self {
            tokenizer: v.tokenizer,
            tokens: v.tokens,
        }
    }
}

impl Vocab {
    /// The two task tokens followed by `words` in first-seen order.
    pub fn new<'a, I>(tokenizer: TokenizerConfig, words: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
            tokenizer,
        };
        v.push(INDEX_TOKEN);
        v.push(RETRIEVE_TOKEN);
        for w in words {
            v.push(w);
        }
        v
    }

    /// Corpus tokens plus every token of the pool's fragment texts.
    pub fn build(corpus: &Corpus, pool: &FragmentPool) -> Self {
        let mut v = Self::new(corpus.tokenizer, std::iter::empty());
        for toks in corpus.token_lists() {
            for t in toks {
                v.push(t);
            }
        }
        for e in &pool.entries {
            for t in corpus.tokenizer.tokenize(&e.text) {
                v.push(&t);
            }
        }
        v
    }

    fn push(&mut self, t: &str) {
        if !self.index.contains_key(t) {
            self.index.insert(t.to_string(), self.tokens.len() as u32);
            self.tokens.push(t.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    /// Token ids of an input text. A leading task prefix maps to its reserved
    /// token; unknown words are skipped.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let (prefix, rest) = if let Some(r) = text.strip_prefix(INDEX_PREFIX) {
            (Some(INDEX_TOKEN), r)
        } else if let Some(r) = text.strip_prefix(RETRIEVE_PREFIX) {
            (Some(RETRIEVE_TOKEN), r)
        } else {
            (None, text)
        };
        let mut out = Vec::new();
        if let Some(p) = prefix {
            out.push(self.index[p]);
        }
        out.extend(
            self.tokenizer
                .tokenize(rest)
                .iter()
                .filter_map(|t| self.get(t)),
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefixes_are_reserved() {
        let v = Vocab::new(TokenizerConfig::default(), ["i", "cat"]);
        assert_eq!(v.encode("[I] cat dog"), vec![0, 3]);
        assert_eq!(v.encode("[R] i"), vec![1, 2]);
        assert_eq!(v.encode("I cat"), vec![2, 3]);
        assert!(v.encode("zebra").is_empty());
    }

    #[test]
    fn serde_roundtrip() {
        let v = Vocab::new(TokenizerConfig::default(), ["a", "b"]);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocab>(&s).unwrap(), v);
    }
}
