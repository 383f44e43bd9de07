//! Documents, identifier assignment and segmentation.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::kmeans;
use crate::text::{self, Token, TokenizerConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub internal_index: usize,
    pub text: String,
    pub external_key: Option<String>,
}

impl Document {
    /// Key used in run and qrels files: the ingest key, or the decimal index
    /// when the record had none.
    pub fn key(&self) -> String {
        self.external_key
            .clone()
            .unwrap_or_else(|| self.internal_index.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdScheme {
    Naive,
    Semantic,
}

impl fmt::Display for IdScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IdScheme::Naive => f.write_str("naive"),
            IdScheme::Semantic => f.write_str("semantic"),
        }
    }
}

/// A document identifier: a non-empty string of decimal digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DocId {
    pub id_string: String,
    pub scheme: IdScheme,
}

impl DocId {
    pub fn new(id_string: impl Into<String>, scheme: IdScheme) -> Result<Self> {
        let id_string = id_string.into();
        if id_string.is_empty() || !id_string.bytes().all(|b| b.is_ascii_digit()) {
            return Err(contract(format!(
                "docid {id_string:?} is not a non-empty digit string"
            )));
        }
        Ok(Self { id_string, scheme })
    }

    pub fn as_str(&self) -> &str {
        &self.id_string
    }
}

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id_string)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub source_doc: usize,
    pub start_token: usize,
    pub token_length: usize,
    pub text: String,
}

#[derive(Debug, Deserialize)]
struct IngestRecord {
    #[serde(default)]
    docid: Option<String>,
    text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Corpus {
    documents: Vec<Document>,
    ids: Vec<DocId>,
    pub tokenizer: TokenizerConfig,
    #[serde(skip)]
    cache: CorpusCache,
}

#[derive(Debug, Clone, Default)]
struct CorpusCache {
    by_id: HashMap<String, usize>,
    by_key: HashMap<String, usize>,
    tokens: Vec<Vec<String>>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.documents == other.documents
            && self.ids == other.ids
            && self.tokenizer == other.tokenizer
    }
}

/// Result of semantic identifier assignment.
#[derive(Debug, Clone)]
pub struct SemanticAssignment {
    pub corpus: Corpus,
    /// Clusters whose embeddings could not be split by k-means and were split
    /// by index order instead.
    pub warnings: Vec<String>,
}

impl Corpus {
    /// Build a corpus from raw texts, keyed or not. Texts are
    /// whitespace-normalized; naive identifiers are assigned.
    pub fn from_texts<I, S>(texts: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Option<String>, S)>,
        S: AsRef<str>,
    {
        let mut documents = Vec::new();
        for (i, (key, raw)) in texts.into_iter().enumerate() {
            let text = text::normalize_whitespace(raw.as_ref());
            if text.is_empty() {
                return Err(Error::RejectedRecord {
                    line: i + 1,
                    reason: "empty text".into(),
                });
            }
            documents.push(Document {
                internal_index: i,
                text,
                external_key: key,
            });
        }
        Self::from_documents(documents, TokenizerConfig::default())
    }

    fn from_documents(documents: Vec<Document>, tokenizer: TokenizerConfig) -> Result<Self> {
        let ids = naive_ids(documents.len());
        let mut corpus = Self {
            documents,
            ids,
            tokenizer,
            cache: CorpusCache::default(),
        };
        corpus.rebuild_cache()?;
        Ok(corpus)
    }

    /// Read a JSONL corpus: one `{"docid": "...", "text": "..."}` object per
    /// line, `docid` optional. Blank lines are skipped.
    pub fn ingest<R: BufRead>(reader: R) -> Result<Self> {
        let mut documents = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: IngestRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            let text = text::normalize_whitespace(&record.text);
            if text.is_empty() {
                return Err(Error::RejectedRecord {
                    line: lineno,
                    reason: "empty text".into(),
                });
            }
            documents.push(Document {
                internal_index: documents.len(),
                text,
                external_key: record.docid,
            });
        }
        Self::from_documents(documents, TokenizerConfig::default())
    }

    /// Restore lookup tables after deserialization.
    pub fn rebuild_cache(&mut self) -> Result<()> {
        let mut by_id = HashMap::with_capacity(self.ids.len());
        for (i, id) in self.ids.iter().enumerate() {
            if by_id.insert(id.id_string.clone(), i).is_some() {
                return Err(Error::Consistency(format!("duplicate docid {id}")));
            }
        }
        let mut by_key = HashMap::with_capacity(self.documents.len());
        for doc in &self.documents {
            if by_key.insert(doc.key(), doc.internal_index).is_some() {
                return Err(Error::Consistency(format!(
                    "duplicate document key {}",
                    doc.key()
                )));
            }
        }
        let tokens = self
            .documents
            .iter()
            .map(|d| self.tokenizer.tokenize(&d.text))
            .collect();
        self.cache = CorpusCache {
            by_id,
            by_key,
            tokens,
        };
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn document(&self, index: usize) -> &Document {
        &self.documents[index]
    }

    pub fn ids(&self) -> &[DocId] {
        &self.ids
    }

    pub fn id(&self, index: usize) -> &DocId {
        &self.ids[index]
    }

    pub fn scheme(&self) -> IdScheme {
        self.ids.first().map_or(IdScheme::Naive, |id| id.scheme)
    }

    pub fn index_of_id(&self, id_string: &str) -> Option<usize> {
        self.cache.by_id.get(id_string).copied()
    }

    pub fn index_of_key(&self, key: &str) -> Option<usize> {
        self.cache.by_key.get(key).copied()
    }

    /// Cached tokens of a document.
    pub fn tokens(&self, index: usize) -> &[String] {
        &self.cache.tokens[index]
    }

    pub fn token_lists(&self) -> impl Iterator<Item = &[String]> {
        self.cache.tokens.iter().map(Vec::as_slice)
    }

    pub fn idf(&self) -> text::IdfTable {
        text::IdfTable::from_token_lists(self.token_lists())
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        self.tokenizer.tokenize(text)
    }

    /// Identifier of document `i` is the decimal string of `i`.
    pub fn assign_naive_ids(mut self) -> Result<Self> {
        if self.is_empty() {
            return Err(contract("cannot assign ids to an empty corpus"));
        }
        self.ids = naive_ids(self.len());
        self.rebuild_cache()?;
        Ok(self)
    }

    /// Hierarchical k-means identifiers. A cluster with more than
    /// `leaf_size` members is split into `branching` groups, each member
    /// getting the group digit appended; a cluster of at most `leaf_size`
    /// members appends a zero-padded position of width
    /// `ceil(log10(max(leaf_size, 2)))`.
    pub fn assign_semantic_ids(
        mut self,
        embeddings: &[Vec<f64>],
        branching: usize,
        leaf_size: usize,
        seed: u64,
    ) -> Result<SemanticAssignment> {
        if self.is_empty() {
            return Err(contract("cannot assign ids to an empty corpus"));
        }
        if !(2..=10).contains(&branching) {
            return Err(contract(format!(
                "branching must be in 2..=10 so each level is one digit, got {branching}"
            )));
        }
        if leaf_size < 1 {
            return Err(contract("leaf_size must be at least 1"));
        }
        if embeddings.len() != self.len() {
            return Err(contract(format!(
                "{} embedding rows for {} documents",
                embeddings.len(),
                self.len()
            )));
        }
        let width = leaf_width(leaf_size);
        let mut strings = vec![String::new(); self.len()];
        let mut warnings = Vec::new();
        let members: Vec<usize> = (0..self.len()).collect();
        let mut ctx = SemanticCtx {
            embeddings,
            branching,
            leaf_size,
            width,
            seed,
            out: &mut strings,
            warnings: &mut warnings,
        };
        ctx.assign(&members, String::new());
        for w in &warnings {
            log::warn!("{w}");
        }
        self.ids = strings
            .into_iter()
            .map(|s| DocId {
                id_string: s,
                scheme: IdScheme::Semantic,
            })
            .collect();
        self.rebuild_cache()?;
        Ok(SemanticAssignment {
            corpus: self,
            warnings,
        })
    }
}

fn naive_ids(n: usize) -> Vec<DocId> {
    (0..n)
        .map(|i| DocId {
            id_string: i.to_string(),
            scheme: IdScheme::Naive,
        })
        .collect()
}

pub fn leaf_width(leaf_size: usize) -> usize {
    // Smallest w with 10^w >= max(leaf_size, 2).
    let target = leaf_size.max(2);
    let mut w = 0;
    let mut p = 1usize;
    while p < target {
        p = p.saturating_mul(10);
        w += 1;
    }
    w
}

struct SemanticCtx<'a> {
    embeddings: &'a [Vec<f64>],
    branching: usize,
    leaf_size: usize,
    width: usize,
    seed: u64,
    out: &'a mut Vec<String>,
    warnings: &'a mut Vec<String>,
}

impl SemanticCtx<'_> {
    fn assign(&mut self, members: &[usize], prefix: String) {
        if members.len() <= self.leaf_size {
            for (pos, &m) in members.iter().enumerate() {
                self.out[m] = format!("{prefix}{pos:0width$}", width = self.width);
            }
            return;
        }
        let groups = self.split(members, &prefix);
        for (digit, group) in groups.into_iter().enumerate() {
            if !group.is_empty() {
                self.assign(&group, format!("{prefix}{digit}"));
            }
        }
    }

    fn split(&mut self, members: &[usize], prefix: &str) -> Vec<Vec<usize>> {
        let first = &self.embeddings[members[0]];
        let degenerate = members.iter().all(|&m| self.embeddings[m] == *first);
        if !degenerate {
            let points: Vec<&[f64]> = members
                .iter()
                .map(|&m| self.embeddings[m].as_slice())
                .collect();
            let level_seed = crate::seed::derive(self.seed, prefix);
            let km = kmeans::kmeans(
                &points,
                self.branching,
                kmeans::DEFAULT_MAX_ITERATIONS,
                level_seed,
            );
            let mut groups = vec![Vec::new(); self.branching];
            for (&m, &a) in members.iter().zip(&km.assignments) {
                groups[a].push(m);
            }
            if groups.iter().all(|g| g.len() < members.len()) {
                return groups;
            }
        }
        self.warnings.push(format!(
            "cluster {prefix:?} with {} members has degenerate embeddings; split by index order",
            members.len()
        ));
        let chunk = members.len().div_ceil(self.branching);
        members.chunks(chunk).map(<[usize]>::to_vec).collect()
    }
}

/// Split a document into segments of `segment_len` tokens starting every
/// `segment_len - overlap` tokens. The last segment ends at the final token
/// and may be shorter.
pub fn chunk_document(doc: &Document, segment_len: usize, overlap: usize) -> Result<Vec<Segment>> {
    chunk_with(&TokenizerConfig::default(), doc, segment_len, overlap)
}

pub fn chunk_with(
    tokenizer: &TokenizerConfig,
    doc: &Document,
    segment_len: usize,
    overlap: usize,
) -> Result<Vec<Segment>> {
    if segment_len == 0 {
        return Err(contract("segment_len must be positive"));
    }
    if overlap >= segment_len {
        return Err(contract(format!(
            "overlap {overlap} must be smaller than segment_len {segment_len}"
        )));
    }
    let tokens = tokenizer.tokenize_with_spans(&doc.text);
    Ok(chunk_tokens(&tokens, &doc.text, doc.internal_index, segment_len, overlap))
}

fn chunk_tokens(
    tokens: &[Token],
    source: &str,
    doc: usize,
    segment_len: usize,
    overlap: usize,
) -> Vec<Segment> {
    let n = tokens.len();
    if n == 0 {
        return Vec::new();
    }
    let stride = segment_len - overlap;
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + segment_len).min(n);
        let span = tokens[start].span.start..tokens[end - 1].span.end;
        out.push(Segment {
            source_doc: doc,
            start_token: start,
            token_length: end - start,
            text: source[span].to_string(),
        });
        if end == n {
            break;
        }
        start += stride;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> Document {
        Document {
            internal_index: 0,
            text: text.into(),
            external_key: None,
        }
    }

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn ingest_preserves_order_and_keys() {
        let input = "{\"docid\":\"a\",\"text\":\"first  doc\"}\n{\"text\":\"second\"}\n\n{\"docid\":\"c\",\"text\":\"third\"}\n";
        let c = Corpus::ingest(input.as_bytes()).unwrap();
        assert_eq!(c.len(), 3);
        let idx: Vec<usize> = c.documents().iter().map(|d| d.internal_index).collect();
        assert_eq!(idx, vec![0, 1, 2]);
        assert_eq!(c.document(0).text, "first doc");
        assert_eq!(c.document(0).external_key.as_deref(), Some("a"));
        assert_eq!(c.document(1).key(), "1");
        assert_eq!(c.index_of_key("c"), Some(2));
    }

    #[test]
    fn ingest_reports_line_of_missing_text() {
        let input = "{\"text\":\"ok\"}\n{\"docid\":\"x\"}\n";
        match Corpus::ingest(input.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingest_reports_malformed_json() {
        let input = "{\"text\":\"ok\"}\n{\"text\":\"ok2\"}\n{oops\n";
        assert!(matches!(
            Corpus::ingest(input.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn ingest_rejects_whitespace_only_text() {
        let input = "{\"text\":\"   \\t \"}\n";
        assert!(matches!(
            Corpus::ingest(input.as_bytes()),
            Err(Error::RejectedRecord { line: 1, .. })
        ));
    }

    #[test]
    fn ingest_rejects_duplicate_keys() {
        let input = "{\"docid\":\"a\",\"text\":\"x\"}\n{\"docid\":\"a\",\"text\":\"y\"}\n";
        assert!(matches!(
            Corpus::ingest(input.as_bytes()),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn naive_ids_are_decimal() {
        let c = Corpus::from_texts((0..12).map(|i| (None, format!("doc {i}"))))
            .unwrap()
            .assign_naive_ids()
            .unwrap();
        assert_eq!(c.id(0).as_str(), "0");
        assert_eq!(c.id(2).as_str(), "2");
        assert_eq!(c.id(11).as_str(), "11");
        assert_eq!(c.index_of_id("11"), Some(11));
        assert_eq!(c.scheme(), IdScheme::Naive);
    }

    #[test]
    fn naive_ids_injective_at_10k() {
        let c = Corpus::from_texts((0..10_000).map(|i| (None, format!("d{i}")))).unwrap();
        let set: std::collections::HashSet<&str> = c.ids().iter().map(DocId::as_str).collect();
        assert_eq!(set.len(), 10_000);
    }

    #[test]
    fn small_corpus_is_one_semantic_leaf() {
        let c = Corpus::from_texts((0..5).map(|i| (None, format!("doc {i}")))).unwrap();
        let emb: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 1.0]).collect();
        let out = c.assign_semantic_ids(&emb, 10, 100, 1).unwrap();
        let ids: Vec<&str> = out.corpus.ids().iter().map(DocId::as_str).collect();
        assert_eq!(ids, vec!["00", "01", "02", "03", "04"]);
        assert!(out.warnings.is_empty());
        assert_eq!(out.corpus.scheme(), IdScheme::Semantic);
    }

    #[test]
    fn degenerate_embeddings_fall_back_with_warning() {
        let c = Corpus::from_texts((0..6).map(|i| (None, format!("doc {i}")))).unwrap();
        let emb = vec![vec![0.5, 0.5]; 6];
        let out = c.assign_semantic_ids(&emb, 2, 2, 9).unwrap();
        assert!(!out.warnings.is_empty());
        let set: std::collections::HashSet<&str> =
            out.corpus.ids().iter().map(DocId::as_str).collect();
        assert_eq!(set.len(), 6);
    }

    #[test]
    fn semantic_rejects_bad_params() {
        let c = Corpus::from_texts([(None, "a"), (None, "b")]).unwrap();
        let emb = vec![vec![0.0], vec![1.0]];
        assert!(c.clone().assign_semantic_ids(&emb, 1, 1, 0).is_err());
        assert!(c.clone().assign_semantic_ids(&emb, 11, 1, 0).is_err());
        assert!(c.clone().assign_semantic_ids(&emb, 2, 0, 0).is_err());
        assert!(c.assign_semantic_ids(&emb[..1], 2, 1, 0).is_err());
    }

    #[test]
    fn leaf_widths() {
        assert_eq!(leaf_width(1), 1);
        assert_eq!(leaf_width(2), 1);
        assert_eq!(leaf_width(10), 1);
        assert_eq!(leaf_width(11), 2);
        assert_eq!(leaf_width(100), 2);
        assert_eq!(leaf_width(101), 3);
    }

    #[test]
    fn chunk_stride_arithmetic() {
        let segs = chunk_document(&doc(&words(10)), 4, 2).unwrap();
        let starts: Vec<usize> = segs.iter().map(|s| s.start_token).collect();
        assert_eq!(starts, vec![0, 2, 4, 6]);
        assert!(segs.iter().all(|s| s.token_length == 4));
        assert_eq!(segs[1].text, "w2 w3 w4 w5");
    }

    #[test]
    fn chunk_short_document() {
        let segs = chunk_document(&doc("one two three"), 8, 0).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].token_length, 3);
        assert_eq!(segs[0].text, "one two three");
    }

    #[test]
    fn chunk_final_segment_may_be_shorter() {
        let segs = chunk_document(&doc(&words(11)), 4, 2).unwrap();
        let last = segs.last().unwrap();
        assert_eq!(last.start_token, 8);
        assert_eq!(last.token_length, 3);
    }

    #[test]
    fn chunk_keeps_source_punctuation() {
        let segs = chunk_document(&doc("Alpha, beta. Gamma delta!"), 3, 1).unwrap();
        assert_eq!(segs[0].text, "Alpha, beta. Gamma");
        assert_eq!(segs[1].text, "Gamma delta");
    }

    #[test]
    fn chunk_rejects_overlap_ge_len() {
        assert!(chunk_document(&doc("a b c"), 3, 3).is_err());
        assert!(chunk_document(&doc("a b c"), 0, 0).is_err());
    }
}
