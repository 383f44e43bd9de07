//! Dense stand-in teacher: TF-IDF vectors squashed through a seeded random
//! sign projection, compared by cosine.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{RankedList, Retriever};
use crate::binio;
use crate::corpus::{Corpus, DocId};
use crate::error::{contract, Error, Result};
use crate::seed;
use crate::text::{IdfTable, TokenizerConfig};

const VECTORS_MAGIC: &[u8; 8] = b"DSIDENS\x01";
const MANIFEST_MAGIC: &str = "dsilab-dense-v1";
pub const MIN_DIMENSION: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    /// Row-major `n x dimension`, every row unit length.
    pub doc_vectors: Vec<f64>,
    pub projection_seed: u64,
    pub idf_table: IdfTable,
    pub dimension: usize,
    ids: Vec<DocId>,
    tokenizer: TokenizerConfig,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    magic: String,
    dimension: usize,
    projection_seed: u64,
    n_docs: usize,
    ids: Vec<DocId>,
    tokenizer: TokenizerConfig,
    idf_table: IdfTable,
}

/// The `±1` pattern a term contributes, derived from `(seed, term)` alone so
/// nothing but the seed needs storing.
pub fn sign_projection(seed: u64, term: &str, dimension: usize) -> Vec<f64> {
    let mut rng = seed::rng(seed::derive(seed, term));
    let mut out = Vec::with_capacity(dimension);
    let mut bits = 0u64;
    for j in 0..dimension {
        if j % 64 == 0 {
            bits = rng.next_u64();
        }
        out.push(if bits & 1 == 1 { 1.0 } else { -1.0 });
        bits >>= 1;
    }
    out
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    true
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl DenseIndex {
    pub fn build(corpus: &Corpus, dimension: usize, seed: u64) -> Result<Self> {
        if dimension < MIN_DIMENSION {
            return Err(contract(format!(
                "dense dimension must be at least {MIN_DIMENSION}, got {dimension}"
            )));
        }
        if corpus.is_empty() {
            return Err(contract("cannot index an empty corpus"));
        }
        let idf_table = corpus.idf();
        let mut index = Self {
            doc_vectors: Vec::with_capacity(corpus.len() * dimension),
            projection_seed: seed,
            idf_table,
            dimension,
            ids: corpus.ids().to_vec(),
            tokenizer: corpus.tokenizer,
        };
        let mut cache: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for tokens in corpus.token_lists() {
            let weights = index.tfidf(tokens);
            let mut v = vec![0.0; dimension];
            for (term, w) in &weights {
                let signs = cache
                    .entry(term.clone())
                    .or_insert_with(|| sign_projection(seed, term, dimension));
                for (x, s) in v.iter_mut().zip(signs.iter()) {
                    *x += w * s;
                }
            }
            if !normalize(&mut v) {
                // A document with no tokens: park it on the first axis.
                v[0] = 1.0;
            }
            index.doc_vectors.extend(v);
        }
        Ok(index)
    }

    /// Raw TF-IDF weights of known terms, keyed in term order.
    pub fn tfidf(&self, tokens: &[String]) -> BTreeMap<String, f64> {
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for t in tokens {
            if self.idf_table.known(t).is_some() {
                *tf.entry(t.clone()).or_insert(0.0) += 1.0;
            }
        }
        for (t, w) in tf.iter_mut() {
            *w *= self.idf_table.get(t);
        }
        tf
    }

    /// Unit vector for arbitrary text, `None` when it has no known terms.
    pub fn embed(&self, text: &str) -> Option<Vec<f64>> {
        let tokens = self.tokenizer.tokenize(text);
        let weights = self.tfidf(&tokens);
        if weights.is_empty() {
            return None;
        }
        let mut v = vec![0.0; self.dimension];
        for (term, w) in &weights {
            let signs = sign_projection(self.projection_seed, term, self.dimension);
            for (x, s) in v.iter_mut().zip(&signs) {
                *x += w * s;
            }
        }
        normalize(&mut v).then_some(v)
    }

    pub fn n_docs(&self) -> usize {
        self.ids.len()
    }

    pub fn vector(&self, doc: usize) -> &[f64] {
        &self.doc_vectors[doc * self.dimension..(doc + 1) * self.dimension]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_docs()).map(|d| self.vector(d).to_vec()).collect()
    }

    pub fn score_all(&self, query: &str) -> Vec<(usize, f64)> {
        match self.embed(query) {
            None => Vec::new(),
            Some(q) => (0..self.n_docs())
                .map(|d| (d, dot(&q, self.vector(d))))
                .collect(),
        }
    }

    /// Cosine between the query and an arbitrary text; 0 when either side
    /// has no known terms.
    pub fn cosine(&self, query: &str, text: &str) -> f64 {
        match (self.embed(query), self.embed(text)) {
            (Some(q), Some(t)) => dot(&q, &t),
            _ => 0.0,
        }
    }

    pub fn ids(&self) -> &[DocId] {
        &self.ids
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = Manifest {
            magic: MANIFEST_MAGIC.into(),
            dimension: self.dimension,
            projection_seed: self.projection_seed,
            n_docs: self.n_docs(),
            ids: self.ids.clone(),
            tokenizer: self.tokenizer,
            idf_table: self.idf_table.clone(),
        };
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)? + "\n",
        )?;
        let mut w = BufWriter::new(File::create(dir.join("vectors.bin"))?);
        w.write_all(VECTORS_MAGIC)?;
        binio::write_u64(&mut w, self.n_docs() as u64)?;
        binio::write_u64(&mut w, self.dimension as u64)?;
        binio::write_f64s(&mut w, &self.doc_vectors)?;
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
        let bin_path = dir.join("vectors.bin");
        if !bin_path.exists() {
            return Err(Error::MissingArtifact(bin_path));
        }
        let fmt_err = |e: std::io::Error| Error::Format {
            path: bin_path.clone(),
            message: e.to_string(),
        };
        let mut r = BufReader::new(File::open(&bin_path)?);
        binio::expect_magic(&mut r, VECTORS_MAGIC).map_err(fmt_err)?;
        let n = binio::read_u64(&mut r).map_err(fmt_err)? as usize;
        let d = binio::read_u64(&mut r).map_err(fmt_err)? as usize;
        if n != manifest.n_docs || d != manifest.dimension || manifest.ids.len() != n {
            return Err(Error::Format {
                path: bin_path,
                message: "manifest and vectors disagree".into(),
            });
        }
        let doc_vectors = binio::read_f64s(&mut r, n * d).map_err(fmt_err)?;
        Ok(Self {
            doc_vectors,
            projection_seed: manifest.projection_seed,
            idf_table: manifest.idf_table,
            dimension: d,
            ids: manifest.ids,
            tokenizer: manifest.tokenizer,
        })
    }
}

impl Retriever for DenseIndex {
    fn name(&self) -> &str {
        "dense"
    }

    fn ids(&self) -> &[DocId] {
        &self.ids
    }

    fn search(&self, query_key: &str, query: &str, k: usize) -> RankedList {
        RankedList::top_k(query_key, self.score_all(query), &self.ids, k)
    }
}
