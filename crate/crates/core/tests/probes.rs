//! Probe values against recounts and hand-worked fixtures.

use proptest::prelude::*;

use dsilab::probes::{completeness_probe, exclusivity_probe, ros_probe};
use dsilab::retrieval::{RankedList, ReferenceScorer};
use dsilab::synth::{SynthConfig, SynthCorpus};
use dsilab::text::tokenize;
use dsilab::{Bm25Index, Bm25Params, Corpus, DenseIndex, DocId, Retriever};

fn corpus_of<S: AsRef<str>>(texts: &[S]) -> Corpus {
    Corpus::from_texts(texts.iter().map(|t| (None, t.as_ref()))).unwrap()
}

/// Returns a fixed list per query text.
struct Fixed {
    ids: Vec<DocId>,
    lists: Vec<(&'static str, Vec<usize>)>,
}

impl Retriever for Fixed {
    fn name(&self) -> &str {
        "fixed"
    }

    fn ids(&self) -> &[DocId] {
        &self.ids
    }

    fn search(&self, key: &str, query: &str, k: usize) -> RankedList {
        let docs = &self.lists.iter().find(|(q, _)| *q == query).expect("known query").1;
        let ordered = docs.iter().take(k).enumerate().map(|(i, &d)| (d, -(i as f64))).collect();
        RankedList::from_ordered(key, ordered, &self.ids)
    }
}

#[test]
fn exclusivity_matches_recount() {
    let synth = SynthCorpus::topical(&SynthConfig { n_topics: 2, docs_per_topic: 10, seed: 4, ..Default::default() });
    let c = corpus_of(&synth.texts);
    let bm25 = Bm25Index::build(&c, Bm25Params::default()).unwrap();
    let cutoffs = [2, 4, 16];
    let pseudo: Vec<(String, usize)> = synth.queries(30, 8);
    let report = exclusivity_probe(&bm25, &c, &cutoffs, Some(&pseudo), None).unwrap();
    for &l in &cutoffs {
        let mut hits = 0;
        for (d, text) in synth.texts.iter().enumerate() {
            let lead = tokenize(text)[..l].join(" ");
            if bm25.search("x", &lead, 1).docs() == [d] {
                hits += 1;
            }
        }
        assert_eq!(report.value(&format!("cutoff={l}"), "hits@1"), Some(hits as f64 / 20.0));
    }
    let pq_hits = pseudo.iter().filter(|(q, o)| bm25.search("x", q, 1).docs() == [*o]).count();
    assert_eq!(report.value("pseudo_query", "hits@1"), Some(pq_hits as f64 / 30.0));
    assert_eq!(report.sample_count, 20);
    assert!(exclusivity_probe(&bm25, &c, &[0], None, None).is_err());
}

#[test]
fn completeness_hand_trace() {
    // d1 duplicates d0, so BM25 breaks the tie toward d0 and d1's best chunk
    // hits at rank 2. d4 has no tokens and is skipped.
    let texts = [
        "alpha beta gamma delta epsilon zeta",
        "alpha beta gamma delta epsilon zeta",
        "kappa lambda mu nu xi omicron",
        "rho sigma tau upsilon phi chi",
        "... !!!",
    ];
    let c = corpus_of(&texts);
    let bm25 = Bm25Index::build(&c, Bm25Params::default()).unwrap();
    let reference = Bm25Index::build(&c, Bm25Params::default()).unwrap();
    let queries: Vec<(String, usize)> = vec![
        ("alpha gamma".into(), 0),
        ("epsilon".into(), 1),
        ("mu".into(), 2),
        ("phi tau".into(), 3),
        ("anything".into(), 4),
    ];
    let r = completeness_probe(&bm25, &c, &queries, &ReferenceScorer::Bm25(&reference), 3, 1, 2).unwrap();
    assert_eq!(r.sample_count, 4);
    assert_eq!(r.value("best_chunk", "hits@1"), Some(0.75));
    assert_eq!(r.value("best_chunk", "hits@10"), Some(1.0));
    assert_eq!(r.value("any_top2", "hits@1"), Some(0.75));
    assert_eq!(r.value("any_top2", "hits@10"), Some(1.0));
}

#[test]
fn completeness_of_reference_itself_on_disjoint_corpus() {
    let synth = SynthCorpus::disjoint(30, 80, 10, 2);
    let c = corpus_of(&synth.texts);
    let dense = DenseIndex::build(&c, 128, 3).unwrap();
    let queries: Vec<(String, usize)> = synth.queries(30, 1);
    let r = completeness_probe(&dense, &c, &queries, &ReferenceScorer::Dense(&dense), 16, 4, 3).unwrap();
    assert_eq!(r.value("best_chunk", "hits@10"), Some(1.0));
}

#[test]
fn ros_hand_trace() {
    // BM25 without length normalization scores by term frequency:
    // d0 = 3, d2 = d4 = 2, d1 = 1, d3 = 0 for the query "a". With five
    // documents, p_max 2 and n_random 3, the random set is the complement of
    // the returned list.
    let texts = ["a a a", "a", "a a", "b", "a a"];
    let c = corpus_of(&texts);
    let reference = Bm25Index::build(&c, Bm25Params { k1: 0.9, b: 0.0 }).unwrap();
    let system = Fixed {
        ids: c.ids().to_vec(),
        lists: vec![("a", vec![1, 3]), ("a ", vec![2, 0])],
    };
    let queries = vec![("q1".to_string(), "a".to_string()), ("q2".to_string(), "a ".to_string())];
    // q1: randoms {d0, d2, d4} all beat d1 and d3, so 3 and 3.
    // q2: randoms {d1, d3, d4}; d4 only ties d2 and nothing beats d0, so 0 and 0.
    let curve = ros_probe(&system, &ReferenceScorer::Bm25(&reference), &queries, &c, 2, 3, 5).unwrap();
    assert_eq!(curve.values, vec![1.5, 1.5]);
    assert_eq!(curve.counts, vec![2, 2]);
}

#[test]
fn ros_excludes_short_lists_and_reports_empty_positions() {
    let texts = ["a a a", "a", "a a", "b", "a a", "c"];
    let c = corpus_of(&texts);
    let reference = Bm25Index::build(&c, Bm25Params { k1: 0.9, b: 0.0 }).unwrap();
    let system = Fixed {
        ids: c.ids().to_vec(),
        lists: vec![("a", vec![0]), ("a ", vec![3, 5])],
    };
    let queries = vec![("q1".to_string(), "a".to_string()), ("q2".to_string(), "a ".to_string())];
    let curve = ros_probe(&system, &ReferenceScorer::Bm25(&reference), &queries, &c, 3, 3, 5).unwrap();
    assert_eq!(curve.counts, vec![2, 1, 0]);
    // q1 position 1 is the global best: 0. q2 returns two zero-score
    // documents; every random draw from {d0, d1, d2, d4} beats them.
    assert_eq!(curve.values[0], 1.5);
    assert_eq!(curve.values[1], 3.0);
    assert_eq!(curve.values[2], 3.0);
}

#[test]
fn ros_contract_errors() {
    let c = corpus_of(&["a", "b", "c"]);
    let reference = Bm25Index::build(&c, Bm25Params::default()).unwrap();
    let r = ReferenceScorer::Bm25(&reference);
    let q = vec![("q".to_string(), "a".to_string())];
    assert!(ros_probe(&reference, &r, &q, &c, 2, 2, 0).is_err());
    assert!(ros_probe(&reference, &r, &q, &c, 0, 1, 0).is_err());
    assert!(ros_probe(&reference, &r, &[], &c, 1, 1, 0).is_err());
}

fn topical(seed: u64) -> (SynthCorpus, Corpus) {
    let synth = SynthCorpus::topical(&SynthConfig { n_topics: 4, docs_per_topic: 8, doc_tokens: 60, seed, ..Default::default() });
    let c = corpus_of(&synth.texts);
    (synth, c)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reference_as_system_is_never_outscored(seed in 0u64..10_000, p_max in 1usize..8, n_random in 1usize..12) {
        let (synth, c) = topical(seed);
        let reference = DenseIndex::build(&c, 64, seed).unwrap();
        let r = ReferenceScorer::Dense(&reference);
        let queries: Vec<(String, String)> = synth.queries(10, seed).into_iter().enumerate()
            .map(|(i, (q, _))| (format!("q{i}"), q)).collect();
        let own = ros_probe(&reference, &r, &queries, &c, p_max, n_random, seed).unwrap();
        let bm25 = Bm25Index::build(&c, Bm25Params::default()).unwrap();
        let other = ros_probe(&bm25, &r, &queries, &c, p_max, n_random, seed).unwrap();
        prop_assert_eq!(own.values[0], 0.0);
        for p in 0..p_max {
            prop_assert!(own.values[p] <= other.values[p]);
            prop_assert!((0.0..=n_random as f64).contains(&other.values[p]));
        }
        prop_assert_eq!(&other, &ros_probe(&bm25, &r, &queries, &c, p_max, n_random, seed).unwrap());
    }
}
