//! Teacher retrievers and the ranked-list exchange type.

mod bm25;
mod dense;
mod reference;

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use bm25::{Bm25Index, Bm25Params};
pub use dense::{sign_projection, DenseIndex};
pub use reference::{ReferenceScorer, ScorerKind};

use crate::corpus::{Corpus, DocId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    /// Internal index of the document.
    pub doc: usize,
    pub doc_id: DocId,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Ordered retrieval result for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_key: String,
    pub entries: Vec<RankedEntry>,
}

/// Score order used everywhere: higher score first, then lower index.
pub fn score_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

impl RankedList {
    pub fn empty(query_key: impl Into<String>) -> Self {
        Self {
            query_key: query_key.into(),
            entries: Vec::new(),
        }
    }

    /// Sort `(doc, score)` pairs by score descending, index ascending, and
    /// keep the first `k`.
    pub fn top_k(
        query_key: impl Into<String>,
        mut scored: Vec<(usize, f64)>,
        ids: &[DocId],
        k: usize,
    ) -> Self {
        if scored.len() > k && k > 0 {
            scored.select_nth_unstable_by(k - 1, score_order);
            scored.truncate(k);
        }
        scored.sort_by(score_order);
        scored.truncate(k);
        Self::from_ordered(query_key, scored, ids)
    }

    /// Build a list keeping the given order. Callers guarantee scores are
    /// non-increasing and documents distinct.
    pub fn from_ordered(
        query_key: impl Into<String>,
        ordered: Vec<(usize, f64)>,
        ids: &[DocId],
    ) -> Self {
        let entries = ordered
            .into_iter()
            .enumerate()
            .map(|(i, (doc, score))| RankedEntry {
                doc,
                doc_id: ids[doc].clone(),
                score,
                rank: i + 1,
            })
            .collect();
        Self {
            query_key: query_key.into(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn docs(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.doc).collect()
    }

    pub fn contains_within(&self, doc: usize, k: usize) -> bool {
        self.entries.iter().take(k).any(|e| e.doc == doc)
    }

    /// `(score desc, index asc)` order, consecutive ranks, no duplicates.
    pub fn is_well_formed(&self) -> bool {
        let ranks_ok = self.entries.iter().enumerate().all(|(i, e)| e.rank == i + 1);
        let mut seen = std::collections::HashSet::new();
        let unique = self.entries.iter().all(|e| seen.insert(e.doc));
        let monotone = self.entries.windows(2).all(|w| w[0].score >= w[1].score);
        ranks_ok && unique && monotone
    }

    /// TREC run lines, `qid Q0 docid rank score tag`.
    pub fn to_trec(&self, corpus: &Corpus, tag: &str) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{} Q0 {} {} {:.6} {}",
                self.query_key,
                corpus.document(e.doc).key(),
                e.rank,
                e.score,
                tag
            );
        }
        out
    }
}

/// Anything that answers a text query with a ranked list over a corpus.
pub trait Retriever: Sync {
    fn name(&self) -> &str;

    fn ids(&self) -> &[DocId];

    fn n_docs(&self) -> usize {
        self.ids().len()
    }

    fn search(&self, query_key: &str, query: &str, k: usize) -> RankedList;
}
