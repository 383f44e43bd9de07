//! Pointwise relevance scorer used by the probes as the independent judge.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Bm25Index, DenseIndex};
use crate::corpus::Document;
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    Bm25,
    DenseCosine,
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "bm25" => Ok(Self::Bm25),
            "dense" | "dense-cosine" => Ok(Self::DenseCosine),
            other => Err(Error::Config(format!(
                "unknown scorer {other:?} (expected bm25 or dense-cosine)"
            ))),
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bm25 => f.write_str("bm25"),
            Self::DenseCosine => f.write_str("dense-cosine"),
        }
    }
}

pub enum ReferenceScorer<'a> {
    Bm25(&'a Bm25Index),
    Dense(&'a DenseIndex),
}

impl ReferenceScorer<'_> {
    pub fn kind(&self) -> ScorerKind {
        match self {
            Self::Bm25(_) => ScorerKind::Bm25,
            Self::Dense(_) => ScorerKind::DenseCosine,
        }
    }

    /// Relevance of any text to the query; higher is more relevant.
    pub fn score_text(&self, query: &str, text: &str) -> f64 {
        match self {
            Self::Bm25(idx) => idx.score_text(query, text),
            Self::Dense(idx) => idx.cosine(query, text),
        }
    }

    pub fn score(&self, query: &str, doc: &Document) -> f64 {
        self.score_text(query, &doc.text)
    }

    /// Scores of indexed documents, reusing the stored representations.
    pub fn score_indexed(&self, query: &str, docs: &[usize]) -> Vec<f64> {
        match self {
            Self::Bm25(idx) => {
                let all: std::collections::HashMap<usize, f64> =
                    idx.score_all(query).into_iter().collect();
                docs.iter().map(|d| all.get(d).copied().unwrap_or(0.0)).collect()
            }
            Self::Dense(idx) => match idx.embed(query) {
                None => vec![0.0; docs.len()],
                Some(q) => docs
                    .iter()
                    .map(|&d| super::dense::dot(&q, idx.vector(d)))
                    .collect(),
            },
        }
    }

    pub fn n_docs(&self) -> usize {
        match self {
            Self::Bm25(idx) => idx.ids().len(),
            Self::Dense(idx) => idx.n_docs(),
        }
    }
}
