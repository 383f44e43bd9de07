//! Brute-force reference implementations and random fixtures. They share
//! nothing with the library beyond tokenization and the per-term sign
//! pattern, which define the inputs rather than the computation under test.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dsilab::retrieval::sign_projection;
use dsilab::text::tokenize;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random documents over a small vocabulary, so terms repeat and ties occur.
pub fn random_texts(rng: &mut ChaCha8Rng, n_docs: usize, vocab: usize) -> Vec<String> {
    (0..n_docs)
        .map(|_| {
            let len = rng.random_range(1..=30);
            (0..len)
                .map(|_| format!("w{}", rng.random_range(0..vocab)))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// Query of 1 to 5 terms, one in five drawn from outside the vocabulary.
pub fn random_query(rng: &mut ChaCha8Rng, vocab: usize) -> String {
    let len = rng.random_range(1..=5);
    (0..len)
        .map(|_| {
            if rng.random_bool(0.2) {
                format!("zz{}", rng.random_range(0..3))
            } else {
                format!("w{}", rng.random_range(0..vocab))
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn sort_scored(mut scored: Vec<(usize, f64)>, k: usize) -> Vec<usize> {
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(d, _)| d).collect()
}

/// BM25 by scanning every document: distinct query terms in first
/// occurrence order, idf `ln(1 + (N - df + 0.5) / (df + 0.5))`.
pub fn bm25_ranking(texts: &[String], query: &str, k1: f64, b: f64, k: usize) -> Vec<usize> {
    let docs: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut terms: Vec<String> = Vec::new();
    for t in tokenize(query) {
        if !terms.contains(&t) {
            terms.push(t);
        }
    }
    let mut scored = Vec::new();
    for (d, doc) in docs.iter().enumerate() {
        let mut score = 0.0;
        let mut matched = false;
        for term in &terms {
            let tf = doc.iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let df = docs.iter().filter(|x| x.contains(term)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let len = doc.len() as f64;
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * (len / avg)));
        }
        if matched {
            scored.push((d, score));
        }
    }
    sort_scored(scored, k)
}

fn unit(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

fn projected(
    tokens: &[String],
    idf: &BTreeMap<String, f64>,
    dim: usize,
    seed: u64,
) -> Option<Vec<f64>> {
    let mut tf: BTreeMap<&str, f64> = BTreeMap::new();
    for t in tokens {
        if idf.contains_key(t) {
            *tf.entry(t).or_insert(0.0) += 1.0;
        }
    }
    if tf.is_empty() {
        return None;
    }
    let mut v = vec![0.0; dim];
    for (term, count) in tf {
        let w = count * idf[term];
        for (x, s) in v.iter_mut().zip(sign_projection(seed, term, dim)) {
            *x += w * s;
        }
    }
    unit(&mut v).then_some(v)
}

/// Dense stand-in by brute force: smoothed tf-idf, sign projection, cosine
/// against every document.
pub fn dense_ranking(texts: &[String], query: &str, dim: usize, seed: u64, k: usize) -> Vec<usize> {
    let docs: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
    let n = docs.len() as f64;
    let vocab: BTreeSet<&String> = docs.iter().flatten().collect();
    let idf: BTreeMap<String, f64> = vocab
        .into_iter()
        .map(|t| {
            let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
            (t.clone(), ((1.0 + n) / (1.0 + df)).ln() + 1.0)
        })
        .collect();
    let Some(q) = projected(&tokenize(query), &idf, dim, seed) else {
        return Vec::new();
    };
    let scored = docs
        .iter()
        .enumerate()
        .map(|(d, tokens)| {
            let v = projected(tokens, &idf, dim, seed).unwrap_or_else(|| {
                let mut e = vec![0.0; dim];
                e[0] = 1.0;
                e
            });
            (d, q.iter().zip(&v).map(|(a, b)| a * b).sum())
        })
        .collect();
    sort_scored(scored, k)
}

/// A random judged query: a ranking over `d0..d{n}` and graded judgments.
pub struct MetricFixture {
    pub ranking: Vec<String>,
    pub judged: BTreeMap<String, u32>,
}

pub fn random_metric_fixture(rng: &mut ChaCha8Rng) -> MetricFixture {
    let pool: Vec<String> = (0..30).map(|i| format!("d{i}")).collect();
    let len = rng.random_range(0..=15);
    let ranking: Vec<String> = pool.choose_multiple(rng, len).cloned().collect();
    let n_judged = rng.random_range(0..=12);
    let judged = pool
        .choose_multiple(rng, n_judged)
        .map(|d| (d.clone(), rng.random_range(0..=3)))
        .collect();
    MetricFixture { ranking, judged }
}

fn grade_of(f: &MetricFixture, doc: &str) -> u32 {
    *f.judged.get(doc).unwrap_or(&0)
}

pub fn hits_recount(f: &MetricFixture, k: usize) -> f64 {
    for doc in f.ranking.iter().take(k) {
        if grade_of(f, doc) >= 1 {
            return 1.0;
        }
    }
    0.0
}

pub fn precision_recount(f: &MetricFixture, threshold: u32) -> f64 {
    let mut relevant = 0;
    for doc in f.ranking.iter().take(10) {
        if grade_of(f, doc) >= threshold {
            relevant += 1;
        }
    }
    f64::from(relevant) / 10.0
}

/// NDCG@10 written from the formula: gains as integer powers, natural-log
/// discounts, ideal ordering by exhaustive grade counting.
pub fn ndcg10_formula(f: &MetricFixture) -> f64 {
    let discount = |rank: usize| std::f64::consts::LN_2 / ((rank + 1) as f64).ln();
    let gain = |g: u32| ((1u64 << g) - 1) as f64;
    let mut dcg = 0.0;
    for (i, doc) in f.ranking.iter().take(10).enumerate() {
        dcg += gain(grade_of(f, doc)) * discount(i + 1);
    }
    let mut ideal = Vec::new();
    for g in (1..=3).rev() {
        for _ in f.judged.values().filter(|&&x| x == g) {
            ideal.push(g);
        }
    }
    let mut idcg = 0.0;
    for (i, g) in ideal.iter().take(10).enumerate() {
        idcg += gain(*g) * discount(i + 1);
    }
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}
