//! Library retrievers and metrics against the brute-force oracles.

mod oracle;

use dsilab::metrics::{hits_at_k, ndcg_at_10, precision_at_10};
use dsilab::{Bm25Index, Bm25Params, Corpus, DenseIndex, Retriever};

const FIXTURES: u64 = 120;

fn corpus_of(texts: &[String]) -> Corpus {
    Corpus::from_texts(texts.iter().map(|t| (None, t.as_str()))).unwrap()
}

#[test]
fn bm25_matches_brute_force() {
    for seed in 0..FIXTURES {
        let mut rng = oracle::rng(seed);
        let texts = oracle::random_texts(&mut rng, 2 + (seed as usize % 25), 12);
        let params = if seed % 2 == 0 {
            Bm25Params::default()
        } else {
            Bm25Params { k1: 1.2, b: 0.75 }
        };
        let index = Bm25Index::build(&corpus_of(&texts), params).unwrap();
        for _ in 0..5 {
            let q = oracle::random_query(&mut rng, 12);
            let k = 1 + seed as usize % 12;
            assert_eq!(
                index.search("q", &q, k).docs(),
                oracle::bm25_ranking(&texts, &q, params.k1, params.b, k),
                "fixture {seed}, query {q:?}"
            );
        }
    }
}

#[test]
fn dense_matches_brute_force() {
    for seed in 0..FIXTURES {
        let mut rng = oracle::rng(1000 + seed);
        let texts = oracle::random_texts(&mut rng, 2 + (seed as usize % 25), 15);
        let dim = [16, 32, 64][seed as usize % 3];
        let index = DenseIndex::build(&corpus_of(&texts), dim, seed).unwrap();
        for _ in 0..5 {
            let q = oracle::random_query(&mut rng, 15);
            let k = 1 + seed as usize % 12;
            assert_eq!(
                index.search("q", &q, k).docs(),
                oracle::dense_ranking(&texts, &q, dim, seed, k),
                "fixture {seed}, query {q:?}"
            );
        }
    }
}

#[test]
fn metrics_match_recounts() {
    let mut rng = oracle::rng(7);
    for i in 0..200 {
        let f = oracle::random_metric_fixture(&mut rng);
        for k in [1, 3, 10] {
            assert_eq!(hits_at_k(&f.ranking, &f.judged, k), oracle::hits_recount(&f, k), "fixture {i}");
        }
        for t in [1, 2] {
            assert_eq!(
                precision_at_10(&f.ranking, &f.judged, t),
                oracle::precision_recount(&f, t),
                "fixture {i}"
            );
        }
        let got = ndcg_at_10(&f.ranking, &f.judged);
        assert!((got - oracle::ndcg10_formula(&f)).abs() <= 1e-9, "fixture {i}");
    }
}
