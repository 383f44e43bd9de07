use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RankedList, Retriever};
use crate::binio;
use crate::corpus::{Corpus, DocId};
use crate::error::{contract, Error, Result};
use crate::text::TokenizerConfig;

const POSTINGS_MAGIC: &[u8; 8] = b"DSIBM25\x01";
const MANIFEST_MAGIC: &str = "dsilab-bm25-v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    /// Pyserini defaults.
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Index {
    pub postings: BTreeMap<String, Vec<Posting>>,
    pub doc_lengths: Vec<u32>,
    pub avg_doc_len: f64,
    pub n_docs: usize,
    pub params: Bm25Params,
    ids: Vec<DocId>,
    tokenizer: TokenizerConfig,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    magic: String,
    params: Bm25Params,
    n_docs: usize,
    n_terms: usize,
    avg_doc_len: f64,
    ids: Vec<DocId>,
    tokenizer: TokenizerConfig,
}

impl Bm25Index {
    pub fn build(corpus: &Corpus, params: Bm25Params) -> Result<Self> {
        if corpus.is_empty() {
            return Err(contract("cannot index an empty corpus"));
        }
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(corpus.len());
        for (doc, tokens) in corpus.token_lists().enumerate() {
            doc_lengths.push(tokens.len() as u32);
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_insert(0) += 1;
            }
            for (term, count) in tf {
                postings.entry(term.to_string()).or_default().push(Posting {
                    doc: doc as u32,
                    tf: count,
                });
            }
        }
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_len = total as f64 / corpus.len() as f64;
        Ok(Self {
            postings,
            doc_lengths,
            avg_doc_len,
            n_docs: corpus.len(),
            params,
            ids: corpus.ids().to_vec(),
            tokenizer: corpus.tokenizer,
        })
    }

    fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.n_docs as f64;
        let df = self.df(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    pub fn term_weight(&self, idf: f64, tf: f64, doc_len: f64) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let norm = if self.avg_doc_len > 0.0 {
            doc_len / self.avg_doc_len
        } else {
            0.0
        };
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm))
    }

    /// Distinct query terms in first-occurrence order.
    fn query_terms(&self, query: &str) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        self.tokenizer
            .tokenize(query)
            .into_iter()
            .filter(|t| seen.insert(t.clone()))
            .collect()
    }

    /// Scores of every document sharing at least one term with the query.
    pub fn score_all(&self, query: &str) -> Vec<(usize, f64)> {
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for term in self.query_terms(query) {
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            let idf = self.idf(&term);
            for p in list {
                let w = self.term_weight(
                    idf,
                    f64::from(p.tf),
                    f64::from(self.doc_lengths[p.doc as usize]),
                );
                *acc.entry(p.doc).or_insert(0.0) += w;
            }
        }
        acc.into_iter().map(|(d, s)| (d as usize, s)).collect()
    }

    /// BM25 score of an arbitrary text as if it were a document of this
    /// collection (corpus statistics, the text's own term counts).
    pub fn score_text(&self, query: &str, text: &str) -> f64 {
        let tokens = self.tokenizer.tokenize(text);
        let mut tf: HashMap<&str, u32> = HashMap::new();
        for t in &tokens {
            *tf.entry(t.as_str()).or_insert(0) += 1;
        }
        let len = tokens.len() as f64;
        let mut score = 0.0;
        for term in self.query_terms(query) {
            if let Some(&c) = tf.get(term.as_str()) {
                score += self.term_weight(self.idf(&term), f64::from(c), len);
            }
        }
        score
    }

    pub fn ids(&self) -> &[DocId] {
        &self.ids
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = Manifest {
            magic: MANIFEST_MAGIC.into(),
            params: self.params,
            n_docs: self.n_docs,
            n_terms: self.postings.len(),
            avg_doc_len: self.avg_doc_len,
            ids: self.ids.clone(),
            tokenizer: self.tokenizer,
        };
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)? + "\n",
        )?;
        let mut w = BufWriter::new(File::create(dir.join("postings.bin"))?);
        w.write_all(POSTINGS_MAGIC)?;
        binio::write_u64(&mut w, self.doc_lengths.len() as u64)?;
        for &l in &self.doc_lengths {
            binio::write_u32(&mut w, l)?;
        }
        binio::write_u64(&mut w, self.postings.len() as u64)?;
        for (term, list) in &self.postings {
            binio::write_str(&mut w, term)?;
            binio::write_u32(&mut w, list.len() as u32)?;
            for p in list {
                binio::write_u32(&mut w, p.doc)?;
                binio::write_u32(&mut w, p.tf)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        if !manifest_path.exists() {
            return Err(Error::MissingArtifact(manifest_path));
        }
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
        if manifest.magic != MANIFEST_MAGIC {
            return Err(Error::Format {
                path: manifest_path,
                message: format!("expected magic {MANIFEST_MAGIC}, got {}", manifest.magic),
            });
        }
        let bin_path = dir.join("postings.bin");
        if !bin_path.exists() {
            return Err(Error::MissingArtifact(bin_path));
        }
        let fmt_err = |e: std::io::Error| Error::Format {
            path: bin_path.clone(),
            message: e.to_string(),
        };
        let mut r = BufReader::new(File::open(&bin_path)?);
        binio::expect_magic(&mut r, POSTINGS_MAGIC).map_err(fmt_err)?;
        let n = binio::read_u64(&mut r).map_err(fmt_err)? as usize;
        let doc_lengths = (0..n)
            .map(|_| binio::read_u32(&mut r))
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(fmt_err)?;
        let n_terms = binio::read_u64(&mut r).map_err(fmt_err)? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..n_terms {
            let term = binio::read_str(&mut r).map_err(fmt_err)?;
            let len = binio::read_u32(&mut r).map_err(fmt_err)? as usize;
            let mut list = Vec::with_capacity(len);
            for _ in 0..len {
                let doc = binio::read_u32(&mut r).map_err(fmt_err)?;
                let tf = binio::read_u32(&mut r).map_err(fmt_err)?;
                list.push(Posting { doc, tf });
            }
            postings.insert(term, list);
        }
        if n != manifest.n_docs || n_terms != manifest.n_terms || manifest.ids.len() != n {
            return Err(Error::Format {
                path: bin_path,
                message: "manifest and postings disagree".into(),
            });
        }
        Ok(Self {
            postings,
            doc_lengths,
            avg_doc_len: manifest.avg_doc_len,
            n_docs: n,
            params: manifest.params,
            ids: manifest.ids,
            tokenizer: manifest.tokenizer,
        })
    }
}

impl Retriever for Bm25Index {
    fn name(&self) -> &str {
        "bm25"
    }

    fn ids(&self) -> &[DocId] {
        &self.ids
    }

    fn search(&self, query_key: &str, query: &str, k: usize) -> RankedList {
        RankedList::top_k(query_key, self.score_all(query), &self.ids, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus::from_texts(texts.iter().map(|t| (None, *t))).unwrap()
    }

    #[test]
    fn single_doc_idf() {
        let idx = Bm25Index::build(&corpus(&["apple"]), Bm25Params::default()).unwrap();
        assert!((idx.idf("apple") - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((idx.idf("apple") - 0.28768).abs() < 1e-5);
    }

    #[test]
    fn unique_term_match() {
        let c = corpus(&["apple pie", "banana bread"]);
        let idx = Bm25Index::build(&c, Bm25Params::default()).unwrap();
        let l = idx.search("q", "banana", 10);
        assert_eq!(l.docs(), vec![1]);
    }

    #[test]
    fn absent_terms_score_nothing() {
        let c = corpus(&["apple pie", "banana bread"]);
        let idx = Bm25Index::build(&c, Bm25Params::default()).unwrap();
        assert!(idx.search("q", "cherry", 10).is_empty());
        assert!(idx.search("q", "  ,, ", 10).is_empty());
        let with = idx.score_text("apple cherry", "apple pie");
        let without = idx.score_text("apple", "apple pie");
        assert_eq!(with, without);
    }

    #[test]
    fn postings_cover_vocabulary() {
        let c = corpus(&["a b c", "b c d", "e"]);
        let idx = Bm25Index::build(&c, Bm25Params::default()).unwrap();
        assert_eq!(idx.postings.len(), 5);
        assert!((idx.avg_doc_len - 7.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn score_text_matches_indexed_score() {
        let c = corpus(&["the cat sat on the mat", "a dog barked", "cat and dog"]);
        let idx = Bm25Index::build(&c, Bm25Params::default()).unwrap();
        for (d, s) in idx.score_all("cat dog mat") {
            let direct = idx.score_text("cat dog mat", &c.document(d).text);
            assert!((direct - s).abs() < 1e-12);
        }
    }

    #[test]
    fn save_load_roundtrip() {
        let c = corpus(&["alpha beta", "beta gamma gamma"]);
        let idx = Bm25Index::build(&c, Bm25Params { k1: 1.2, b: 0.75 }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        idx.save(dir.path()).unwrap();
        let back = Bm25Index::load(dir.path()).unwrap();
        assert_eq!(back, idx);
    }

    #[test]
    fn load_rejects_bad_magic() {
        let c = corpus(&["alpha"]);
        let idx = Bm25Index::build(&c, Bm25Params::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        idx.save(dir.path()).unwrap();
        fs::write(dir.path().join("postings.bin"), b"NOTMAGIC....").unwrap();
        assert!(matches!(
            Bm25Index::load(dir.path()),
            Err(Error::Format { .. })
        ));
    }
}
