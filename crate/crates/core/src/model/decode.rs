//! Trie-constrained beam search for both task modes.
//!
//! Each step normalizes the model's distribution over the symbols the trie
//! allows at that point, so a path score is the log-probability of the id (or
//! id list) among valid outputs.

use std::cmp::Ordering;

use log::warn;

use super::network::{log_softmax, TinyGenModel};
use super::symbols::{COMMA, EOS, N_SYMBOLS};
use super::trie::DocidTrie;
use crate::data::Task;
use crate::error::{contract, Result};
use crate::retrieval::{RankedList, Retriever};
use crate::corpus::DocId;

/// Model plus the per-parameter-snapshot symbol projection.
pub struct Decoder<'a> {
    model: &'a TinyGenModel,
    trie: &'a DocidTrie,
    sym_proj: Vec<f64>,
    /// In list decoding, never emit an id twice.
    pub distinct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub list: RankedList,
    /// Whether decoding ran out of positions before EOS.
    pub truncated: bool,
    /// The decoded symbol string, before deduplication.
    pub raw: String,
}

struct Hyp {
    score: f64,
    syms: Vec<u8>,
    node: usize,
    /// Completed ids with the cumulative score after their separator.
    closed: Vec<(usize, f64)>,
}

fn hyp_order(a: &Hyp, b: &Hyp) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.syms.cmp(&b.syms))
}

impl<'a> Decoder<'a> {
    pub fn new(model: &'a TinyGenModel, trie: &'a DocidTrie) -> Self {
        Self {
            model,
            trie,
            sym_proj: model.symbol_projection(),
            distinct: true,
        }
    }

    pub fn with_distinct(mut self, distinct: bool) -> Self {
        self.distinct = distinct;
        self
    }

    /// Log-probabilities renormalized over `allowed`.
    fn masked(&self, base: &[f64], prev: u8, pos: usize, allowed: &[u8], hidden: &mut [f64]) -> Vec<f64> {
        let mut logits = [0.0; N_SYMBOLS];
        self.model
            .step_from_parts(base, &self.sym_proj, prev, pos, hidden, &mut logits);
        let sub: Vec<f64> = allowed.iter().map(|&s| logits[s as usize]).collect();
        log_softmax(&sub)
    }

    fn allowed(&self, node: usize, task: Task) -> Vec<u8> {
        let mut out: Vec<u8> = self.trie.next_digits(node).collect();
        if node != DocidTrie::ROOT && self.trie.terminal(node).is_some() {
            if task == Task::Retrieve {
                out.push(COMMA);
            }
            out.push(EOS);
        }
        out
    }

    /// List-grammar symbols at `node`, excluding subtrees whose ids have all
    /// been emitted already when `distinct` is set.
    fn allowed_list(&self, node: usize, closed: &[(usize, f64)]) -> Vec<u8> {
        if !self.distinct {
            return self.allowed(node, Task::Retrieve);
        }
        let mut used: std::collections::HashMap<usize, usize> = Default::default();
        for &(doc, _) in closed {
            for n in self.trie.ancestors(doc) {
                *used.entry(n).or_insert(0) += 1;
            }
        }
        let free = |n: usize| self.trie.size(n) > used.get(&n).copied().unwrap_or(0);
        let mut out: Vec<u8> = self
            .trie
            .next_digits(node)
            .filter(|&d| free(self.trie.child(node, d).expect("listed digit")))
            .collect();
        if let Some(doc) = self.trie.terminal(node) {
            if node != DocidTrie::ROOT && closed.iter().all(|&(d, _)| d != doc) {
                if closed.len() + 1 < self.trie.ids().len() {
                    out.push(COMMA);
                }
                out.push(EOS);
            }
        }
        out
    }

    pub fn generate(&self, query_key: &str, query: &str, task: Task, beam: usize, k: usize) -> Result<Decoded> {
        if beam == 0 {
            return Err(contract("beam must be at least 1"));
        }
        let input = format!("{}{query}", task.prefix());
        let enc = self.model.encode_tokens(&self.model.vocab.encode(&input));
        let base = self.model.hidden_base(&enc);
        match task {
            Task::Index => {
                if beam < k {
                    return Err(contract(format!("beam {beam} smaller than k {k}")));
                }
                Ok(self.index_search(query_key, &base, beam, k))
            }
            Task::Retrieve => Ok(self.list_search(query_key, &base, beam, k)),
        }
    }

    fn index_search(&self, query_key: &str, base: &[f64], beam: usize, k: usize) -> Decoded {
        let p = self.model.config.max_positions;
        let mut hidden = vec![0.0; self.model.config.h];
        let mut active = vec![Hyp { score: 0.0, syms: Vec::new(), node: DocidTrie::ROOT, closed: Vec::new() }];
        let mut finished: Vec<(usize, f64)> = Vec::new();
        for pos in 0..p {
            if active.is_empty() {
                break;
            }
            let mut next = Vec::new();
            for hyp in &active {
                let prev = hyp.syms.last().copied().unwrap_or(super::symbols::BOS);
                let allowed = self.allowed(hyp.node, Task::Index);
                let lp = self.masked(base, prev, pos, &allowed, &mut hidden);
                for (&s, &l) in allowed.iter().zip(&lp) {
                    let score = hyp.score + l;
                    if s == EOS {
                        finished.push((self.trie.terminal(hyp.node).expect("EOS only at terminals"), score));
                    } else {
                        let mut syms = hyp.syms.clone();
                        syms.push(s);
                        let node = self.trie.child(hyp.node, s).expect("digit from trie");
                        next.push(Hyp { score, syms, node, closed: Vec::new() });
                    }
                }
            }
            next.sort_by(hyp_order);
            next.truncate(beam);
            active = next;
            if finished.len() >= k {
                finished.sort_by(crate::retrieval::score_order);
                let kth = finished[k - 1].1;
                if active.iter().all(|h| h.score < kth) {
                    break;
                }
            }
        }
        finished.sort_by(crate::retrieval::score_order);
        finished.truncate(k);
        if finished.len() < k {
            log::debug!("index decoding produced {} of {k} ids", finished.len());
        }
        let raw = finished
            .first()
            .map(|(d, _)| self.trie.ids()[*d].id_string.clone())
            .unwrap_or_default();
        Decoded {
            list: RankedList::from_ordered(query_key, finished, self.trie.ids()),
            truncated: false,
            raw,
        }
    }

    /// Beam search over the list grammar. Hypotheses ending in EOS finish
    /// only when they win a beam slot; the chosen output is the finished
    /// hypothesis with the best mean log-probability per symbol.
    fn list_search(&self, query_key: &str, base: &[f64], beam: usize, k: usize) -> Decoded {
        let p = self.model.config.max_positions;
        let mut hidden = vec![0.0; self.model.config.h];
        let mut active = vec![Hyp { score: 0.0, syms: Vec::new(), node: DocidTrie::ROOT, closed: Vec::new() }];
        let mut best: Option<Hyp> = None;
        let mut n_finished = 0;
        let normalized = |h: &Hyp| h.score / h.syms.len() as f64;
        for pos in 0..p {
            if active.is_empty() || n_finished >= beam {
                break;
            }
            let mut next = Vec::new();
            for hyp in &active {
                let prev = hyp.syms.last().copied().unwrap_or(super::symbols::BOS);
                let allowed = self.allowed_list(hyp.node, &hyp.closed);
                let lp = self.masked(base, prev, pos, &allowed, &mut hidden);
                for (&s, &l) in allowed.iter().zip(&lp) {
                    let mut syms = hyp.syms.clone();
                    syms.push(s);
                    let mut closed = hyp.closed.clone();
                    let score = hyp.score + l;
                    let node = match s {
                        COMMA | EOS => {
                            closed.push((self.trie.terminal(hyp.node).expect("separator only at terminals"), score));
                            DocidTrie::ROOT
                        }
                        d => self.trie.child(hyp.node, d).expect("digit from trie"),
                    };
                    next.push(Hyp { score, syms, node, closed });
                }
            }
            next.sort_by(hyp_order);
            next.truncate(beam);
            active = Vec::with_capacity(next.len());
            for h in next {
                if h.syms.last() == Some(&EOS) {
                    n_finished += 1;
                    let better = best.as_ref().is_none_or(|b| {
                        normalized(&h) > normalized(b)
                            || (normalized(&h) == normalized(b) && h.syms < b.syms)
                    });
                    if better {
                        best = Some(h);
                    }
                } else {
                    active.push(h);
                }
            }
        }
        let (chosen, truncated) = match best {
            Some(b) => (b, false),
            None => {
                let mut h = active.into_iter().min_by(hyp_order).expect("at least one hypothesis");
                if let Some(doc) = self.trie.terminal(h.node) {
                    h.closed.push((doc, h.score));
                }
                warn!(
                    "list decoding for {query_key:?} hit {p} positions without EOS; truncated"
                );
                (h, true)
            }
        };
        let raw = super::symbols::decode_symbols(&chosen.syms);
        let mut seen = std::collections::HashSet::new();
        let entries: Vec<(usize, f64)> = chosen
            .closed
            .into_iter()
            .filter(|(d, _)| seen.insert(*d))
            .take(k)
            .collect();
        Decoded {
            list: RankedList::from_ordered(query_key, entries, self.trie.ids()),
            truncated,
            raw,
        }
    }
}

/// Decode one query.
pub fn generate(
    model: &TinyGenModel,
    query: &str,
    task: Task,
    trie: &DocidTrie,
    beam: usize,
    k: usize,
) -> Result<RankedList> {
    Ok(Decoder::new(model, trie).generate("", query, task, beam, k)?.list)
}

/// The student as a retriever in one task mode.
pub struct StudentRetriever {
    model: TinyGenModel,
    trie: DocidTrie,
    sym_proj: Vec<f64>,
    pub task: Task,
    pub beam: usize,
    pub distinct: bool,
    name: String,
}

impl StudentRetriever {
    pub fn new(model: TinyGenModel, ids: &[DocId], task: Task, beam: usize) -> Result<Self> {
        let trie = DocidTrie::build(ids)?;
        let sym_proj = model.symbol_projection();
        Ok(Self {
            model,
            trie,
            sym_proj,
            task,
            beam: beam.max(1),
            distinct: true,
            name: Self::name_for(task).into(),
        })
    }

    fn name_for(task: Task) -> &'static str {
        match task {
            Task::Index => "student-index",
            Task::Retrieve => "student-retrieve",
        }
    }

    pub fn model(&self) -> &TinyGenModel {
        &self.model
    }

    pub fn with_task(mut self, task: Task) -> Self {
        self.task = task;
        self.name = Self::name_for(task).into();
        self
    }

    pub fn decode(&self, query_key: &str, query: &str, k: usize) -> Result<Decoded> {
        let decoder = Decoder {
            model: &self.model,
            trie: &self.trie,
            sym_proj: self.sym_proj.clone(),
            distinct: self.distinct,
        };
        let beam = match self.task {
            Task::Index => self.beam.max(k),
            Task::Retrieve => self.beam,
        };
        decoder.generate(query_key, query, self.task, beam, k)
    }
}

impl Retriever for StudentRetriever {
    fn name(&self) -> &str {
        &self.name
    }

    fn ids(&self) -> &[DocId] {
        self.trie.ids()
    }

    fn search(&self, query_key: &str, query: &str, k: usize) -> RankedList {
        match self.decode(query_key, query, k) {
            Ok(d) => d.list,
            Err(e) => {
                warn!("decoding {query_key:?} failed: {e}");
                RankedList::empty(query_key)
            }
        }
    }
}
