//! Exclusivity, completeness and relevance-ordering probes over any
//! retriever.

use std::collections::HashSet;
use std::fmt::Write as _;

use log::warn;
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, Corpus};
use crate::error::{contract, Result};
use crate::retrieval::{ReferenceScorer, Retriever};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub configuration: String,
    pub metric: String,
    pub value: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probe_name: String,
    pub system: String,
    pub rows: Vec<ProbeRow>,
    pub sample_count: usize,
}

impl ProbeReport {
    pub fn value(&self, configuration: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.configuration == configuration && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("probe\tsystem\tconfiguration\tmetric\tvalue\tcount\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.6}\t{}",
                self.probe_name, self.system, r.configuration, r.metric, r.value, r.count
            );
        }
        out
    }
}

/// Query text made of a document's first `n` tokens.
pub fn leading_tokens(corpus: &Corpus, doc: usize, n: usize) -> String {
    let toks = corpus.tokens(doc);
    toks[..n.min(toks.len())].join(" ")
}

/// Hits@1 of self-retrieval with each document's first `L` tokens, per
/// cutoff; plus pseudo-query Hits@1 when `(text, owner)` pairs are given.
/// `docs` restricts the probed documents (all when `None`).
pub fn exclusivity_probe(
    system: &dyn Retriever,
    corpus: &Corpus,
    cutoffs: &[usize],
    pseudo_queries: Option<&[(String, usize)]>,
    docs: Option<&[usize]>,
) -> Result<ProbeReport> {
    if cutoffs.contains(&0) {
        return Err(contract("cutoff lengths must be positive"));
    }
    let all: Vec<usize> = (0..corpus.len()).collect();
    let docs = docs.unwrap_or(&all);
    if docs.is_empty() {
        return Err(contract("no documents to probe"));
    }
    let mut rows = Vec::new();
    for &l in cutoffs {
        let hits: usize = docs
            .par_iter()
            .map(|&d| {
                let q = leading_tokens(corpus, d, l);
                let list = system.search(&d.to_string(), &q, 1);
                usize::from(list.entries.first().is_some_and(|e| e.doc == d))
            })
            .sum();
        rows.push(ProbeRow {
            configuration: format!("cutoff={l}"),
            metric: "hits@1".into(),
            value: hits as f64 / docs.len() as f64,
            count: docs.len(),
        });
    }
    if let Some(pqs) = pseudo_queries {
        if !pqs.is_empty() {
            let hits: usize = pqs
                .par_iter()
                .enumerate()
                .map(|(i, (q, owner))| {
                    let list = system.search(&format!("pq{i}"), q, 1);
                    usize::from(list.entries.first().is_some_and(|e| e.doc == *owner))
                })
                .sum();
            rows.push(ProbeRow {
                configuration: "pseudo_query".into(),
                metric: "hits@1".into(),
                value: hits as f64 / pqs.len() as f64,
                count: pqs.len(),
            });
        }
    }
    Ok(ProbeReport {
        probe_name: "exclusivity".into(),
        system: system.name().into(),
        rows,
        sample_count: docs.len(),
    })
}

/// For each `(query, owner)`, find the owner's chunks ranked highest by the
/// reference scorer and query the system with them. Hits are counted on the
/// best chunk; `any_top` rows count a success from any of the top chunks.
pub fn completeness_probe(
    system: &dyn Retriever,
    corpus: &Corpus,
    queries: &[(String, usize)],
    reference: &ReferenceScorer<'_>,
    chunk_len: usize,
    overlap: usize,
    top_chunks: usize,
) -> Result<ProbeReport> {
    if top_chunks == 0 {
        return Err(contract("top_chunks must be at least 1"));
    }
    for (_, owner) in queries {
        if *owner >= corpus.len() {
            return Err(contract(format!("query owner {owner} outside the corpus")));
        }
    }
    let outcomes: Vec<Option<[bool; 4]>> = queries
        .par_iter()
        .enumerate()
        .map(|(qi, (q, owner))| -> Result<Option<[bool; 4]>> {
            if corpus.tokens(*owner).is_empty() {
                warn!("owner {owner} of query {qi} has no tokens; skipped");
                return Ok(None);
            }
            let chunks =
                corpus::chunk_with(&corpus.tokenizer, corpus.document(*owner), chunk_len, overlap)?;
            let mut scored: Vec<(usize, f64)> = chunks
                .iter()
                .enumerate()
                .map(|(i, c)| (i, reference.score_text(q, &c.text)))
                .collect();
            scored.sort_by(crate::retrieval::score_order);
            let mut out = [false; 4];
            for (rank, (ci, _)) in scored.iter().take(top_chunks).enumerate() {
                let list = system.search(&format!("{qi}.{ci}"), &chunks[*ci].text, 10);
                let h1 = list.contains_within(*owner, 1);
                let h10 = list.contains_within(*owner, 10);
                if rank == 0 {
                    out[0] = h1;
                    out[1] = h10;
                }
                out[2] |= h1;
                out[3] |= h10;
            }
            Ok(Some(out))
        })
        .collect::<Result<_>>()?;
    let done: Vec<[bool; 4]> = outcomes.into_iter().flatten().collect();
    if done.is_empty() {
        return Err(contract("no completeness query could be evaluated"));
    }
    let frac = |j: usize| done.iter().filter(|o| o[j]).count() as f64 / done.len() as f64;
    let row = |configuration: &str, metric: &str, j| ProbeRow {
        configuration: configuration.into(),
        metric: metric.into(),
        value: frac(j),
        count: done.len(),
    };
    let any = format!("any_top{top_chunks}");
    Ok(ProbeReport {
        probe_name: "completeness".into(),
        system: system.name().into(),
        rows: vec![
            row("best_chunk", "hits@1", 0),
            row("best_chunk", "hits@10", 1),
            row(&any, "hits@1", 2),
            row(&any, "hits@10", 3),
        ],
        sample_count: done.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosCurve {
    pub system: String,
    pub n_random: usize,
    /// `ros(p)` for `p = 1..=p_max`.
    pub values: Vec<f64>,
    /// Queries whose list reached each position.
    pub counts: Vec<usize>,
}

impl RosCurve {
    pub fn p_max(&self) -> usize {
        self.values.len()
    }

    pub fn mean_abs_deviation(&self, other: &RosCurve) -> f64 {
        let n = self.values.len().min(other.values.len());
        if n == 0 {
            return 0.0;
        }
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / n as f64
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("position\tros\tqueries\n");
        for (i, (v, c)) in self.values.iter().zip(&self.counts).enumerate() {
            let _ = writeln!(out, "{}\t{v:.6}\t{c}", i + 1);
        }
        out
    }
}

/// Per-query counts `ros_q(p)`; `None` where the list is shorter than `p`.
pub fn ros_for_query(
    system: &dyn Retriever,
    reference: &ReferenceScorer<'_>,
    corpus_len: usize,
    query_key: &str,
    query: &str,
    p_max: usize,
    n_random: usize,
    seed: u64,
) -> Vec<Option<usize>> {
    let list = system.search(query_key, query, p_max);
    let returned: Vec<usize> = list.docs();
    let excluded: HashSet<usize> = returned.iter().copied().collect();
    let pool: Vec<usize> = (0..corpus_len).filter(|d| !excluded.contains(d)).collect();
    let mut rng = seed::rng(seed);
    let mut random: Vec<usize> = sample(&mut rng, pool.len(), n_random.min(pool.len()))
        .into_iter()
        .map(|i| pool[i])
        .collect();
    random.sort_unstable();
    let random_scores = reference.score_indexed(query, &random);
    let returned_scores = reference.score_indexed(query, &returned);
    (0..p_max)
        .map(|p| {
            returned_scores
                .get(p)
                .map(|s| random_scores.iter().filter(|r| *r > s).count())
        })
        .collect()
}

/// Mean over queries of the number of random documents the reference scores
/// strictly above the system's result at each position. A position no query
/// reaches is reported as `n_random`.
pub fn ros_probe(
    system: &dyn Retriever,
    reference: &ReferenceScorer<'_>,
    queries: &[(String, String)],
    corpus: &Corpus,
    p_max: usize,
    n_random: usize,
    seed: u64,
) -> Result<RosCurve> {
    if p_max == 0 || n_random == 0 {
        return Err(contract("p_max and n_random must be at least 1"));
    }
    if corpus.len() < p_max + n_random {
        return Err(contract(format!(
            "corpus of {} documents is smaller than p_max + n_random = {}",
            corpus.len(),
            p_max + n_random
        )));
    }
    if reference.n_docs() != corpus.len() {
        return Err(contract("reference scorer was built over a different corpus"));
    }
    if queries.is_empty() {
        return Err(contract("no ros queries"));
    }
    let per_query: Vec<Vec<Option<usize>>> = queries
        .par_iter()
        .enumerate()
        .map(|(i, (key, q))| {
            ros_for_query(
                system,
                reference,
                corpus.len(),
                key,
                q,
                p_max,
                n_random,
                seed::derive_index(seed, i as u64),
            )
        })
        .collect();
    let mut values = Vec::with_capacity(p_max);
    let mut counts = Vec::with_capacity(p_max);
    for p in 0..p_max {
        let v: Vec<usize> = per_query.iter().filter_map(|q| q[p]).collect();
        counts.push(v.len());
        values.push(if v.is_empty() {
            n_random as f64
        } else {
            v.iter().sum::<usize>() as f64 / v.len() as f64
        });
    }
    Ok(RosCurve {
        system: system.name().into(),
        n_random,
        values,
        counts,
    })
}

/// Mean size of the intersection of the system's and the teacher's top-`k`.
pub fn teacher_overlap(
    system: &dyn Retriever,
    teacher: &dyn Retriever,
    queries: &[(String, String)],
    k: usize,
) -> f64 {
    if queries.is_empty() {
        return 0.0;
    }
    let total: usize = queries
        .par_iter()
        .map(|(key, q)| {
            let t: HashSet<usize> = teacher.search(key, q, k).docs().into_iter().collect();
            system
                .search(key, q, k)
                .docs()
                .iter()
                .filter(|d| t.contains(d))
                .count()
        })
        .sum();
    total as f64 / queries.len() as f64
}
