//! Seeded synthetic corpora: topical prose with per-document names, and a
//! disjoint-vocabulary variant. Used by the bundled fixtures and tests.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::seed;

const FUNCTION_WORDS: &[&str] = &[
    "the", "a", "of", "in", "and", "is", "was", "for", "with", "on", "to", "by", "as", "at",
    "from", "that", "its", "which", "were", "also",
];

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z",
    "br", "cr", "dr", "gr", "pl", "st", "tr", "sh", "ch", "th",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou", "ea", "io"];
const CODAS: &[&str] = &["", "", "n", "r", "s", "l", "m", "t", "x", "nd", "rk"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_topics: usize,
    pub docs_per_topic: usize,
    /// Tokens per document, within about one sentence.
    pub doc_tokens: usize,
    pub topic_vocab: usize,
    pub background_vocab: usize,
    /// Distinct name words owned by each document.
    pub names_per_doc: usize,
    /// Token mix: function words, topic words, names; the rest background.
    pub p_function: f64,
    pub p_topic: f64,
    pub p_name: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_topics: 10,
            docs_per_topic: 10,
            doc_tokens: 160,
            topic_vocab: 40,
            background_vocab: 400,
            names_per_doc: 4,
            p_function: 0.35,
            p_topic: 0.35,
            p_name: 0.12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCorpus {
    pub texts: Vec<String>,
    pub topic_of: Vec<usize>,
    pub topic_words: Vec<Vec<String>>,
    pub names: Vec<Vec<String>>,
    pub background: Vec<String>,
}

struct WordMaker {
    rng: seed::Rng,
    seen: std::collections::HashSet<String>,
}

impl WordMaker {
    fn new(seed: u64) -> Self {
        let mut seen = std::collections::HashSet::new();
        for w in FUNCTION_WORDS {
            seen.insert(w.to_string());
        }
        Self { rng: seed::rng(seed), seen }
    }

    fn word(&mut self) -> String {
        loop {
            let syllables = self.rng.random_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS.choose(&mut self.rng).expect("non-empty"));
                w.push_str(VOWELS.choose(&mut self.rng).expect("non-empty"));
            }
            w.push_str(CODAS.choose(&mut self.rng).expect("non-empty"));
            if self.seen.insert(w.clone()) {
                return w;
            }
        }
    }

    fn words(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.word()).collect()
    }
}

/// Zipf-like pick: index `i` weighted by `1 / (i + 1)`.
fn zipf<'a>(rng: &mut seed::Rng, words: &'a [String]) -> &'a str {
    let h: f64 = (1..=words.len()).map(|i| 1.0 / i as f64).sum();
    let mut u = rng.random::<f64>() * h;
    for (i, w) in words.iter().enumerate() {
        u -= 1.0 / (i + 1) as f64;
        if u <= 0.0 {
            return w;
        }
    }
    words.last().expect("non-empty")
}

impl SynthCorpus {
    /// Topical prose. Document order is shuffled so ids carry no topic.
    pub fn topical(config: &SynthConfig) -> Self {
        let mut maker = WordMaker::new(seed::derive(config.seed, "synth-words"));
        let background = maker.words(config.background_vocab);
        let topic_words: Vec<Vec<String>> = (0..config.n_topics)
            .map(|_| maker.words(config.topic_vocab))
            .collect();
        let n = config.n_topics * config.docs_per_topic;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng(seed::derive(config.seed, "synth-order")));
        let mut texts = vec![String::new(); n];
        let mut topic_of = vec![0; n];
        let mut names = vec![Vec::new(); n];
        for (slot, &pos) in order.iter().enumerate() {
            let topic = slot / config.docs_per_topic;
            let own = maker.words(config.names_per_doc);
            let mut rng = seed::rng(seed::derive_index(config.seed, slot as u64));
            let mut tokens = 0;
            let mut sentences = Vec::new();
            while tokens < config.doc_tokens {
                let len = rng.random_range(8..=14);
                let mut words = Vec::with_capacity(len);
                for _ in 0..len {
                    let u: f64 = rng.random();
                    let w = if u < config.p_function {
                        FUNCTION_WORDS.choose(&mut rng).expect("non-empty").to_string()
                    } else if u < config.p_function + config.p_topic {
                        zipf(&mut rng, &topic_words[topic]).to_string()
                    } else if u < config.p_function + config.p_topic + config.p_name {
                        own.choose(&mut rng).expect("non-empty").clone()
                    } else {
                        zipf(&mut rng, &background).to_string()
                    };
                    words.push(w);
                }
                tokens += len;
                let mut s = words.join(" ");
                if let Some(first) = s.get(..1) {
                    s = first.to_uppercase() + &s[1..];
                }
                s.push('.');
                sentences.push(s);
            }
            texts[pos] = sentences.join(" ");
            topic_of[pos] = topic;
            names[pos] = own;
        }
        Self { texts, topic_of, topic_words, names, background }
    }

    /// Every document uses its own vocabulary only.
    pub fn disjoint(n_docs: usize, doc_tokens: usize, words_per_doc: usize, seed: u64) -> Self {
        let mut maker = WordMaker::new(seed::derive(seed, "disjoint-words"));
        let mut texts = Vec::with_capacity(n_docs);
        let mut names = Vec::with_capacity(n_docs);
        for d in 0..n_docs {
            let own = maker.words(words_per_doc);
            let mut rng = seed::rng(seed::derive_index(seed, d as u64));
            let words: Vec<&str> = (0..doc_tokens)
                .map(|_| own.choose(&mut rng).expect("non-empty").as_str())
                .collect();
            texts.push(words.join(" "));
            names.push(own);
        }
        Self {
            texts,
            topic_of: (0..n_docs).collect(),
            topic_words: Vec::new(),
            names,
            background: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    /// Short query about one document: topic words plus one of its names.
    /// Returns `(text, owner)` pairs.
    pub fn queries(&self, n: usize, seed: u64) -> Vec<(String, usize)> {
        let mut rng = seed::rng(seed);
        (0..n)
            .map(|_| {
                let owner = rng.random_range(0..self.len());
                let mut words: Vec<String> = Vec::new();
                if let Some(topic) = self.topic_words.get(self.topic_of[owner]) {
                    for _ in 0..3 {
                        words.push(zipf(&mut rng, topic).to_string());
                    }
                }
                words.push(self.names[owner].choose(&mut rng).expect("non-empty").clone());
                words.shuffle(&mut rng);
                (words.join(" "), owner)
            })
            .collect()
    }

    /// JSONL corpus lines with keys `d0`, `d1`, ...
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.texts.iter().enumerate() {
            out.push_str(&serde_json::json!({"docid": format!("d{i}"), "text": t}).to_string());
            out.push('\n');
        }
        out
    }
}
