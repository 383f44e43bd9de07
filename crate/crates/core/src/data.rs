//! Training-data construction: segments and pseudo queries, teacher-based
//! key-fragment filtering, distillation targets and multi-task streams.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng as _;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, Corpus, DocId, Document, Segment};
use crate::error::{contract, Error, Result};
use crate::retrieval::Retriever;
use crate::seed;
use crate::text::{self, IdfTable};

pub const INDEX_PREFIX: &str = "[I] ";
pub const RETRIEVE_PREFIX: &str = "[R] ";
pub const ID_SEPARATOR: char = ',';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Index,
    Retrieve,
}

impl Task {
    pub fn prefix(self) -> &'static str {
        match self {
            Task::Index => INDEX_PREFIX,
            Task::Retrieve => RETRIEVE_PREFIX,
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "index" => Ok(Task::Index),
            "retrieve" => Ok(Task::Retrieve),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub task: Task,
    /// Task prefix followed by the fragment text.
    #[serde(rename = "input")]
    pub input_text: String,
    /// One docid, or a comma-joined docid list.
    pub target: String,
}

impl TrainingExample {
    pub fn index(text: &str, owner: &DocId) -> Self {
        Self {
            task: Task::Index,
            input_text: format!("{INDEX_PREFIX}{text}"),
            target: owner.id_string.clone(),
        }
    }

    pub fn retrieve(text: &str, signal: &DistillSignal) -> Self {
        Self {
            task: Task::Retrieve,
            input_text: format!("{RETRIEVE_PREFIX}{text}"),
            target: signal.target(),
        }
    }

    /// Check the target against the task's shape and the corpus id map.
    pub fn validate(&self, corpus: &Corpus) -> Result<()> {
        let parts: Vec<&str> = self.target.split(ID_SEPARATOR).collect();
        match self.task {
            Task::Index if parts.len() != 1 => {
                return Err(Error::Consistency(format!(
                    "index target {:?} is not a single docid",
                    self.target
                )))
            }
            _ => {}
        }
        let mut seen = HashSet::new();
        for p in &parts {
            if corpus.index_of_id(p).is_none() {
                return Err(Error::Consistency(format!("unknown docid {p:?} in target")));
            }
            if !seen.insert(*p) {
                return Err(Error::Consistency(format!(
                    "duplicate docid {p:?} in target {:?}",
                    self.target
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoQuery {
    pub source_doc: usize,
    pub source_start: usize,
    pub text: String,
    pub variant_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FragmentKind {
    Segment,
    PseudoQuery,
    UserQuery,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    pub text: String,
    pub owner: DocId,
    pub kind: FragmentKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FragmentPool {
    pub entries: Vec<Fragment>,
}

#[derive(Serialize, Deserialize)]
struct FragmentRecord {
    text: String,
    owner: String,
    kind: FragmentKind,
}

impl FragmentPool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn counts(&self) -> BTreeMap<FragmentKind, usize> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.kind).or_insert(0) += 1;
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.entries {
            let rec = FragmentRecord {
                text: e.text.clone(),
                owner: e.owner.id_string.clone(),
                kind: e.kind,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R, corpus: &Corpus) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: FragmentRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let idx = corpus.index_of_id(&rec.owner).ok_or_else(|| {
                Error::Consistency(format!("line {}: unknown owner {}", i + 1, rec.owner))
            })?;
            entries.push(Fragment {
                text: rec.text,
                owner: corpus.id(idx).clone(),
                kind: rec.kind,
            });
        }
        Ok(Self { entries })
    }
}

/// Owner docid plus the teacher's top-f list for one fragment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillSignal {
    pub owner: DocId,
    pub teacher_list: Vec<DocId>,
}

impl DistillSignal {
    /// Owner first, then the teacher list with the owner removed.
    pub fn target(&self) -> String {
        let mut parts = vec![self.owner.id_string.as_str()];
        parts.extend(
            self.teacher_list
                .iter()
                .filter(|id| **id != self.owner)
                .map(DocId::as_str),
        );
        parts.join(",")
    }
}

/// Distillation signals keyed by `(owner, fragment text)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SignalTable {
    map: HashMap<(String, String), DistillSignal>,
}

impl SignalTable {
    pub fn insert(&mut self, text: &str, signal: DistillSignal) {
        self.map
            .insert((signal.owner.id_string.clone(), text.to_string()), signal);
    }

    pub fn get(&self, owner: &DocId, text: &str) -> Option<&DistillSignal> {
        self.map.get(&(owner.id_string.clone(), text.to_string()))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// One `{"text", "owner", "teacher"}` object per line, sorted by key.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let mut keys: Vec<&(String, String)> = self.map.keys().collect();
        keys.sort();
        for key in keys {
            let s = &self.map[key];
            let rec = SignalRecord {
                text: key.1.clone(),
                owner: s.owner.id_string.clone(),
                teacher: s.teacher_list.iter().map(|d| d.id_string.clone()).collect(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R, corpus: &Corpus) -> Result<Self> {
        let lookup = |line: usize, id: &str| {
            corpus
                .index_of_id(id)
                .map(|i| corpus.id(i).clone())
                .ok_or_else(|| Error::Consistency(format!("line {line}: unknown docid {id}")))
        };
        let mut table = Self::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SignalRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let owner = lookup(i + 1, &rec.owner)?;
            let teacher_list = rec
                .teacher
                .iter()
                .map(|id| lookup(i + 1, id))
                .collect::<Result<Vec<_>>>()?;
            table.insert(&rec.text, DistillSignal { owner, teacher_list });
        }
        Ok(table)
    }
}

#[derive(Serialize, Deserialize)]
struct SignalRecord {
    text: String,
    owner: String,
    teacher: Vec<String>,
}

/// Extractive pseudo-query generator. Variant 0 is the segment sentence with
/// the largest IDF mass, cut to `max_len` tokens; further variants drop each
/// of its tokens independently with probability `dropout_p`.
pub fn generate_pseudo_queries(
    segment: &Segment,
    idf: &IdfTable,
    n_variants: usize,
    max_len: usize,
    dropout_p: f64,
    seed: u64,
) -> Result<Vec<PseudoQuery>> {
    if n_variants == 0 {
        return Err(contract("n_variants must be at least 1"));
    }
    if !(0.0..1.0).contains(&dropout_p) {
        return Err(contract(format!("dropout_p {dropout_p} not in [0, 1)")));
    }
    if max_len == 0 {
        return Err(contract("max_len must be positive"));
    }
    let mut best: Option<(f64, Vec<String>)> = None;
    for sentence in text::split_sentences(&segment.text) {
        let toks = text::tokenize(sentence);
        if toks.is_empty() {
            continue;
        }
        let mass: f64 = toks.iter().map(|t| idf.get(t)).sum();
        if best.as_ref().is_none_or(|(m, _)| mass > *m) {
            best = Some((mass, toks));
        }
    }
    let Some((_, mut base)) = best else {
        return Err(contract(format!(
            "segment of document {} at token {} has no tokens",
            segment.source_doc, segment.start_token
        )));
    };
    base.truncate(max_len);
    let anchor = idf_argmax(&base, idf);
    let seg_seed = seed::derive_index(
        seed::derive_index(seed, segment.source_doc as u64),
        segment.start_token as u64,
    );
    let mut out = vec![PseudoQuery {
        source_doc: segment.source_doc,
        source_start: segment.start_token,
        text: base.join(" "),
        variant_index: 0,
    }];
    for v in 1..n_variants {
        let mut rng = seed::rng(seed::derive_index(seg_seed, v as u64));
        let mut kept: Vec<&str> = base
            .iter()
            .filter(|_| rng.random::<f64>() >= dropout_p)
            .map(String::as_str)
            .collect();
        if kept.is_empty() {
            kept.push(&base[anchor]);
        }
        out.push(PseudoQuery {
            source_doc: segment.source_doc,
            source_start: segment.start_token,
            text: kept.join(" "),
            variant_index: v,
        });
    }
    Ok(out)
}

fn idf_argmax(tokens: &[String], idf: &IdfTable) -> usize {
    let mut best = 0;
    for (i, t) in tokens.iter().enumerate() {
        if idf.get(t) > idf.get(&tokens[best]) {
            best = i;
        }
    }
    best
}

fn check_owners(pool: &FragmentPool, teacher: &dyn Retriever) -> Result<()> {
    let ids: HashSet<&str> = teacher.ids().iter().map(DocId::as_str).collect();
    for e in &pool.entries {
        if !ids.contains(e.owner.as_str()) {
            return Err(Error::Consistency(format!(
                "fragment owner {} is unknown to the teacher",
                e.owner
            )));
        }
    }
    Ok(())
}

/// Keep a segment iff its owner is in the teacher's top `k_segment`, a
/// pseudo query iff its owner is in the top `k_pseudo`. User queries always
/// pass. Order is preserved.
pub fn filter_key_fragments(
    pool: &FragmentPool,
    teacher: &dyn Retriever,
    k_segment: usize,
    k_pseudo: usize,
) -> Result<FragmentPool> {
    check_owners(pool, teacher)?;
    let keep: Vec<bool> = pool
        .entries
        .par_iter()
        .map(|e| {
            let k = match e.kind {
                FragmentKind::UserQuery => return true,
                FragmentKind::Segment => k_segment,
                FragmentKind::PseudoQuery => k_pseudo,
            };
            let list = teacher.search("", &e.text, k);
            list.entries.iter().any(|r| r.doc_id == e.owner)
        })
        .collect();
    let entries = pool
        .entries
        .iter()
        .zip(keep)
        .filter_map(|(e, k)| k.then(|| e.clone()))
        .collect();
    Ok(FragmentPool { entries })
}

/// Teacher's top-`f` list for a fragment, owner kept separately.
pub fn build_distill_signal(
    fragment_text: &str,
    owner: &DocId,
    teacher: &dyn Retriever,
    f: usize,
) -> DistillSignal {
    let list = teacher.search("", fragment_text, f);
    DistillSignal {
        owner: owner.clone(),
        teacher_list: list.entries.into_iter().map(|e| e.doc_id).collect(),
    }
}

pub fn build_signals(pool: &FragmentPool, teacher: &dyn Retriever, f: usize) -> Result<SignalTable> {
    check_owners(pool, teacher)?;
    let signals: Vec<DistillSignal> = pool
        .entries
        .par_iter()
        .map(|e| build_distill_signal(&e.text, &e.owner, teacher, f))
        .collect();
    let mut table = SignalTable::default();
    for (e, s) in pool.entries.iter().zip(signals) {
        table.insert(&e.text, s);
    }
    Ok(table)
}

pub fn index_examples(pool: &FragmentPool) -> Vec<TrainingExample> {
    pool.entries
        .iter()
        .map(|e| TrainingExample::index(&e.text, &e.owner))
        .collect()
}

pub fn retrieve_examples(pool: &FragmentPool, signals: &SignalTable) -> Result<Vec<TrainingExample>> {
    pool.entries
        .iter()
        .map(|e| {
            signals
                .get(&e.owner, &e.text)
                .map(|s| TrainingExample::retrieve(&e.text, s))
                .ok_or_else(|| missing_signal(e))
        })
        .collect()
}

fn missing_signal(e: &Fragment) -> Error {
    Error::Consistency(format!(
        "no distillation signal for fragment of {}: {:?}",
        e.owner, e.text
    ))
}

/// One example per fragment, its task drawn index/retrieve with equal
/// probability from a stream seeded by `seed`.
pub fn mix_multitask(
    pool: &FragmentPool,
    signals: &SignalTable,
    seed: u64,
) -> Result<Vec<TrainingExample>> {
    let mut rng = seed::rng(seed);
    pool.entries
        .iter()
        .map(|e| {
            if rng.random_bool(0.5) {
                Ok(TrainingExample::index(&e.text, &e.owner))
            } else {
                signals
                    .get(&e.owner, &e.text)
                    .map(|s| TrainingExample::retrieve(&e.text, s))
                    .ok_or_else(|| missing_signal(e))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PipelineMode {
    /// Original pseudo-query data, index task only.
    #[serde(rename = "baseline")]
    Baseline,
    /// Constructed data, index task only.
    #[serde(rename = "merge")]
    Merge,
    /// Original data, retrieve task only.
    #[serde(rename = "distill")]
    Distill,
    /// Constructed data, index phase then retrieve phase.
    #[serde(rename = "d+m")]
    DPlusM,
    /// Constructed data, tasks mixed per example.
    #[serde(rename = "multi")]
    Multi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Original,
    Constructed,
}

impl PipelineMode {
    pub const ALL: [PipelineMode; 5] = [
        PipelineMode::Baseline,
        PipelineMode::Merge,
        PipelineMode::Distill,
        PipelineMode::DPlusM,
        PipelineMode::Multi,
    ];

    pub fn data_source(self) -> DataSource {
        match self {
            PipelineMode::Baseline | PipelineMode::Distill => DataSource::Original,
            _ => DataSource::Constructed,
        }
    }

    pub fn needs_signals(self) -> bool {
        !matches!(self, PipelineMode::Baseline | PipelineMode::Merge)
    }
}

impl FromStr for PipelineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "merge" => Ok(Self::Merge),
            "distill" => Ok(Self::Distill),
            "d+m" | "m+d" | "dm" => Ok(Self::DPlusM),
            "multi" => Ok(Self::Multi),
            other => Err(Error::Config(format!(
                "unknown pipeline mode {other:?} (baseline, merge, distill, d+m, multi)"
            ))),
        }
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Baseline => "baseline",
            Self::Merge => "merge",
            Self::Distill => "distill",
            Self::DPlusM => "d+m",
            Self::Multi => "multi",
        })
    }
}

/// Per-epoch example streams for a pipeline mode.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub mode: PipelineMode,
    pub pool: FragmentPool,
    pub signals: SignalTable,
    /// Index-only epochs before switching to retrieve in `d+m`.
    pub dm_index_epochs: usize,
    pub seed: u64,
}

impl Schedule {
    pub fn epoch(&self, epoch: usize) -> Result<Vec<TrainingExample>> {
        match self.mode {
            PipelineMode::Baseline | PipelineMode::Merge => Ok(index_examples(&self.pool)),
            PipelineMode::Distill => retrieve_examples(&self.pool, &self.signals),
            PipelineMode::DPlusM if epoch < self.dm_index_epochs => Ok(index_examples(&self.pool)),
            PipelineMode::DPlusM => retrieve_examples(&self.pool, &self.signals),
            PipelineMode::Multi => mix_multitask(
                &self.pool,
                &self.signals,
                seed::derive_index(self.seed, epoch as u64),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub segment_len: usize,
    pub overlap: usize,
    pub n_variants: usize,
    pub max_query_len: usize,
    pub dropout_p: f64,
    pub k_segment: usize,
    pub k_pseudo: usize,
    pub f: usize,
    /// Pseudo queries generated from each whole document (the original
    /// training data).
    pub doc_variants: usize,
    /// Append whole-document pseudo queries, unfiltered, to the constructed
    /// set alongside the user queries.
    pub include_original: bool,
    pub filter: bool,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            segment_len: 32,
            overlap: 8,
            n_variants: 2,
            max_query_len: 12,
            dropout_p: 0.25,
            k_segment: 1,
            k_pseudo: 5,
            f: 10,
            doc_variants: 4,
            include_original: true,
            filter: true,
            seed: 0,
        }
    }
}

/// User query with its owning document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OwnedQuery {
    pub text: String,
    pub owner: usize,
}

/// Externally supplied pseudo queries, keyed by document internal index.
pub type PseudoOverrides = BTreeMap<usize, Vec<String>>;

/// Read `doc_key<TAB>query_text` lines.
pub fn read_pseudo_overrides<R: BufRead>(r: R, corpus: &Corpus) -> Result<PseudoOverrides> {
    let mut out = PseudoOverrides::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (key, q) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: "expected doc_key<TAB>query_text".into(),
        })?;
        let doc = corpus.index_of_key(key).ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("unknown document key {key:?}"),
        })?;
        out.entry(doc).or_default().push(q.trim().to_string());
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub segment: usize,
    pub pseudo_query: usize,
    pub user_query: usize,
}

impl KindCounts {
    pub fn of(pool: &FragmentPool) -> Self {
        let mut c = Self::default();
        for e in &pool.entries {
            match e.kind {
                FragmentKind::Segment => c.segment += 1,
                FragmentKind::PseudoQuery => c.pseudo_query += 1,
                FragmentKind::UserQuery => c.user_query += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.segment + self.pseudo_query + self.user_query
    }
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub pool: FragmentPool,
    /// Counts of the unfiltered union of segments and pseudo queries.
    pub before_filter: KindCounts,
    pub after_filter: KindCounts,
}

fn doc_level_pseudo(
    corpus: &Corpus,
    doc: &Document,
    idf: &IdfTable,
    config: &DataConfig,
    overrides: Option<&PseudoOverrides>,
) -> Result<Vec<String>> {
    if let Some(qs) = overrides.and_then(|o| o.get(&doc.internal_index)) {
        return Ok(qs.clone());
    }
    let n = corpus.tokens(doc.internal_index).len();
    let whole = Segment {
        source_doc: doc.internal_index,
        start_token: 0,
        token_length: n,
        text: doc.text.clone(),
    };
    Ok(generate_pseudo_queries(
        &whole,
        idf,
        config.doc_variants,
        config.max_query_len,
        config.dropout_p,
        seed::derive(config.seed, "doc-pseudo"),
    )?
    .into_iter()
    .map(|q| q.text)
    .collect())
}

fn user_fragments(corpus: &Corpus, queries: &[OwnedQuery]) -> Result<Vec<Fragment>> {
    queries
        .iter()
        .map(|q| {
            if q.owner >= corpus.len() {
                return Err(Error::Consistency(format!(
                    "query owner {} outside corpus",
                    q.owner
                )));
            }
            Ok(Fragment {
                text: q.text.clone(),
                owner: corpus.id(q.owner).clone(),
                kind: FragmentKind::UserQuery,
            })
        })
        .collect()
}

/// Whole-document pseudo queries plus user queries, unfiltered.
pub fn build_original_set(
    corpus: &Corpus,
    config: &DataConfig,
    queries: &[OwnedQuery],
    overrides: Option<&PseudoOverrides>,
) -> Result<FragmentPool> {
    let idf = corpus.idf();
    let mut entries = Vec::new();
    for doc in corpus.documents() {
        for q in doc_level_pseudo(corpus, doc, &idf, config, overrides)? {
            entries.push(Fragment {
                text: q,
                owner: corpus.id(doc.internal_index).clone(),
                kind: FragmentKind::PseudoQuery,
            });
        }
    }
    entries.extend(user_fragments(corpus, queries)?);
    Ok(FragmentPool { entries })
}

/// Segments and their pseudo queries, filtered by the teacher, followed by
/// the original training queries.
pub fn build_training_set(
    corpus: &Corpus,
    teacher: &dyn Retriever,
    config: &DataConfig,
    queries: &[OwnedQuery],
    overrides: Option<&PseudoOverrides>,
) -> Result<TrainingSet> {
    let idf = corpus.idf();
    let pq_seed = seed::derive(config.seed, "segment-pseudo");
    let mut union = FragmentPool::default();
    for doc in corpus.documents() {
        let owner = corpus.id(doc.internal_index).clone();
        let segments =
            corpus::chunk_with(&corpus.tokenizer, doc, config.segment_len, config.overlap)?;
        let override_qs = overrides.and_then(|o| o.get(&doc.internal_index));
        for seg in &segments {
            union.entries.push(Fragment {
                text: seg.text.clone(),
                owner: owner.clone(),
                kind: FragmentKind::Segment,
            });
            if override_qs.is_none() {
                for q in generate_pseudo_queries(
                    seg,
                    &idf,
                    config.n_variants,
                    config.max_query_len,
                    config.dropout_p,
                    pq_seed,
                )? {
                    union.entries.push(Fragment {
                        text: q.text,
                        owner: owner.clone(),
                        kind: FragmentKind::PseudoQuery,
                    });
                }
            }
        }
        for q in override_qs.into_iter().flatten() {
            union.entries.push(Fragment {
                text: q.clone(),
                owner: owner.clone(),
                kind: FragmentKind::PseudoQuery,
            });
        }
    }
    let before_filter = KindCounts::of(&union);
    let mut pool = if config.filter {
        filter_key_fragments(&union, teacher, config.k_segment, config.k_pseudo)?
    } else {
        union
    };
    let after_filter = KindCounts::of(&pool);
    if config.include_original {
        let original = build_original_set(corpus, config, &[], overrides)?;
        pool.entries.extend(original.entries);
    }
    pool.entries.extend(user_fragments(corpus, queries)?);
    Ok(TrainingSet {
        pool,
        before_filter,
        after_filter,
    })
}

/// Pool for a mode: constructed or original, as the mode requires.
pub fn build_pool_for_mode(
    mode: PipelineMode,
    corpus: &Corpus,
    teacher: &dyn Retriever,
    config: &DataConfig,
    queries: &[OwnedQuery],
    overrides: Option<&PseudoOverrides>,
) -> Result<FragmentPool> {
    match mode.data_source() {
        DataSource::Original => build_original_set(corpus, config, queries, overrides),
        DataSource::Constructed => {
            Ok(build_training_set(corpus, teacher, config, queries, overrides)?.pool)
        }
    }
}

/// Shuffle in place with a seeded stream.
pub fn shuffle<T>(items: &mut [T], seed: u64) {
    let mut rng = seed::rng(seed);
    items.shuffle(&mut rng);
}

pub fn write_examples<W: Write>(examples: &[TrainingExample], mut w: W) -> Result<()> {
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_examples<R: BufRead>(r: R) -> Result<Vec<TrainingExample>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::IdScheme;
    use crate::retrieval::{Bm25Index, Bm25Params, RankedList};

    fn id(s: &str) -> DocId {
        DocId::new(s, IdScheme::Naive).unwrap()
    }

    fn seg(text: &str) -> Segment {
        Segment {
            source_doc: 0,
            start_token: 0,
            token_length: text::tokenize(text).len(),
            text: text.into(),
        }
    }

    /// Teacher returning a fixed list regardless of the query.
    struct Fixed {
        ids: Vec<DocId>,
        order: Vec<usize>,
    }

    impl Retriever for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn ids(&self) -> &[DocId] {
            &self.ids
        }
        fn search(&self, key: &str, _q: &str, k: usize) -> RankedList {
            let scored = self
                .order
                .iter()
                .take(k)
                .enumerate()
                .map(|(r, &d)| (d, -(r as f64)))
                .collect();
            RankedList::from_ordered(key, scored, &self.ids)
        }
    }

    fn fixed(n: usize, order: Vec<usize>) -> Fixed {
        Fixed {
            ids: (0..n).map(|i| id(&i.to_string())).collect(),
            order,
        }
    }

    #[test]
    fn single_sentence_pseudo_query_is_truncated_sentence() {
        let idf = IdfTable::default();
        let qs = generate_pseudo_queries(&seg("Alpha beta gamma delta"), &idf, 1, 3, 0.3, 1).unwrap();
        assert_eq!(qs.len(), 1);
        assert_eq!(qs[0].text, "alpha beta gamma");
    }

    #[test]
    fn picks_highest_idf_sentence() {
        let docs: Vec<Vec<String>> = vec![
            text::tokenize("the cat the dog"),
            text::tokenize("the cat"),
            text::tokenize("zebra quokka"),
        ];
        let idf = IdfTable::from_token_lists(docs.iter().map(Vec::as_slice));
        let qs = generate_pseudo_queries(&seg("The cat. Zebra quokka! The dog"), &idf, 1, 8, 0.0, 1)
            .unwrap();
        assert_eq!(qs[0].text, "zebra quokka");
    }

    #[test]
    fn zero_dropout_gives_identical_variants() {
        let idf = IdfTable::default();
        let qs = generate_pseudo_queries(&seg("one two three four"), &idf, 4, 10, 0.0, 5).unwrap();
        assert!(qs.iter().all(|q| q.text == qs[0].text));
        let vs: Vec<usize> = qs.iter().map(|q| q.variant_index).collect();
        assert_eq!(vs, vec![0, 1, 2, 3]);
    }

    #[test]
    fn pseudo_queries_are_deterministic_and_never_empty() {
        let idf = IdfTable::default();
        let s = seg("one two three four five six");
        let a = generate_pseudo_queries(&s, &idf, 20, 10, 0.95, 5).unwrap();
        let b = generate_pseudo_queries(&s, &idf, 20, 10, 0.95, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|q| !q.text.is_empty()));
    }

    #[test]
    fn pseudo_query_contract_errors() {
        let idf = IdfTable::default();
        assert!(generate_pseudo_queries(&seg("..."), &idf, 1, 5, 0.0, 0).is_err());
        assert!(generate_pseudo_queries(&seg("a b"), &idf, 0, 5, 0.0, 0).is_err());
        assert!(generate_pseudo_queries(&seg("a b"), &idf, 1, 5, 1.0, 0).is_err());
    }

    #[test]
    fn distill_target_dedups_owner() {
        let teacher = fixed(10, vec![4, 7, 9]);
        let s = build_distill_signal("q", &id("7"), &teacher, 3);
        assert_eq!(s.target(), "7,4,9");
        let s = build_distill_signal("q", &id("2"), &teacher, 3);
        assert_eq!(s.target(), "2,4,7,9");
    }

    #[test]
    fn distill_with_f10_has_eleven_or_ten_fields() {
        let teacher = fixed(20, (0..20).collect());
        let outside = build_distill_signal("q", &id("15"), &teacher, 10);
        assert_eq!(outside.target().split(',').count(), 11);
        let inside = build_distill_signal("q", &id("3"), &teacher, 10);
        assert_eq!(inside.target().split(',').count(), 10);
    }

    #[test]
    fn empty_teacher_result_gives_owner_only() {
        let teacher = fixed(3, vec![]);
        assert_eq!(build_distill_signal("q", &id("1"), &teacher, 10).target(), "1");
    }

    #[test]
    fn filter_drops_pseudo_query_ranked_sixth() {
        // Owner 5 sits at rank 6.
        let teacher = fixed(10, vec![0, 1, 2, 3, 4, 5, 6]);
        let pool = FragmentPool {
            entries: vec![
                Fragment { text: "pq".into(), owner: id("5"), kind: FragmentKind::PseudoQuery },
                Fragment { text: "pq".into(), owner: id("4"), kind: FragmentKind::PseudoQuery },
                Fragment { text: "seg".into(), owner: id("0"), kind: FragmentKind::Segment },
                Fragment { text: "seg".into(), owner: id("1"), kind: FragmentKind::Segment },
                Fragment { text: "uq".into(), owner: id("9"), kind: FragmentKind::UserQuery },
            ],
        };
        let out = filter_key_fragments(&pool, &teacher, 1, 5).unwrap();
        let owners: Vec<&str> = out.entries.iter().map(|e| e.owner.as_str()).collect();
        assert_eq!(owners, vec!["4", "0", "9"]);
    }

    #[test]
    fn filter_rejects_unknown_owner() {
        let teacher = fixed(2, vec![0]);
        let pool = FragmentPool {
            entries: vec![Fragment { text: "x".into(), owner: id("5"), kind: FragmentKind::Segment }],
        };
        assert!(matches!(
            filter_key_fragments(&pool, &teacher, 1, 5),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn filter_keeps_unique_vocabulary_segment() {
        let c = Corpus::from_texts([(None, "apple pie"), (None, "banana bread")]).unwrap();
        let bm25 = Bm25Index::build(&c, Bm25Params::default()).unwrap();
        let pool = FragmentPool {
            entries: vec![Fragment {
                text: "banana bread".into(),
                owner: c.id(1).clone(),
                kind: FragmentKind::Segment,
            }],
        };
        assert_eq!(filter_key_fragments(&pool, &bm25, 1, 5).unwrap().len(), 1);
    }

    fn small_pool() -> (FragmentPool, SignalTable) {
        let teacher = fixed(50, (0..10).collect());
        let pool = FragmentPool {
            entries: (0..50)
                .map(|i| Fragment {
                    text: format!("text {i}"),
                    owner: id(&i.to_string()),
                    kind: FragmentKind::PseudoQuery,
                })
                .collect(),
        };
        let signals = build_signals(&pool, &teacher, 10).unwrap();
        (pool, signals)
    }

    #[test]
    fn mixing_is_seeded_and_well_formed() {
        let (pool, signals) = small_pool();
        let a = mix_multitask(&pool, &signals, 42).unwrap();
        let b = mix_multitask(&pool, &signals, 42).unwrap();
        assert_eq!(a, b);
        for ex in &a {
            match ex.task {
                Task::Index => assert!(ex.input_text.starts_with(INDEX_PREFIX)),
                Task::Retrieve => assert!(ex.input_text.starts_with(RETRIEVE_PREFIX)),
            }
        }
        let owner42 = a.iter().zip(&pool.entries).find(|(ex, e)| {
            ex.task == Task::Index && e.owner.as_str() == "42"
        });
        if let Some((ex, _)) = owner42 {
            assert_eq!(ex.target, "42");
        }
    }

    #[test]
    fn mixing_fails_without_signal() {
        let (pool, _) = small_pool();
        assert!(mix_multitask(&pool, &SignalTable::default(), 1).is_err());
    }

    #[test]
    fn index_target_is_owner() {
        let ex = TrainingExample::index("hello", &id("42"));
        assert_eq!(ex.target, "42");
        assert_eq!(ex.input_text, "[I] hello");
    }

    #[test]
    fn schedule_modes() {
        let (pool, signals) = small_pool();
        let sched = |mode| Schedule {
            mode,
            pool: pool.clone(),
            signals: signals.clone(),
            dm_index_epochs: 2,
            seed: 3,
        };
        let all = |v: Vec<TrainingExample>, t: Task| v.iter().all(|e| e.task == t);
        assert!(all(sched(PipelineMode::Merge).epoch(0).unwrap(), Task::Index));
        assert!(all(sched(PipelineMode::Distill).epoch(0).unwrap(), Task::Retrieve));
        let dm = sched(PipelineMode::DPlusM);
        assert!(all(dm.epoch(1).unwrap(), Task::Index));
        assert!(all(dm.epoch(2).unwrap(), Task::Retrieve));
        let multi = sched(PipelineMode::Multi);
        assert_ne!(multi.epoch(0).unwrap(), multi.epoch(1).unwrap());
    }

    #[test]
    fn mode_names_roundtrip() {
        for m in PipelineMode::ALL {
            assert_eq!(m.to_string().parse::<PipelineMode>().unwrap(), m);
        }
        assert!("bogus".parse::<PipelineMode>().is_err());
    }

    #[test]
    fn validate_targets() {
        let c = Corpus::from_texts([(None, "a"), (None, "b"), (None, "c")]).unwrap();
        assert!(TrainingExample::index("x", c.id(1)).validate(&c).is_ok());
        let bad = TrainingExample {
            task: Task::Retrieve,
            input_text: "[R] x".into(),
            target: "1,1".into(),
        };
        assert!(bad.validate(&c).is_err());
        let unknown = TrainingExample {
            task: Task::Index,
            input_text: "[I] x".into(),
            target: "7".into(),
        };
        assert!(unknown.validate(&c).is_err());
    }

    #[test]
    fn pool_jsonl_roundtrip() {
        let c = Corpus::from_texts([(None, "a"), (None, "b")]).unwrap();
        let pool = FragmentPool {
            entries: vec![Fragment {
                text: "tab\tand \"quote\"".into(),
                owner: c.id(1).clone(),
                kind: FragmentKind::UserQuery,
            }],
        };
        let mut buf = Vec::new();
        pool.write_jsonl(&mut buf).unwrap();
        assert_eq!(FragmentPool::read_jsonl(buf.as_slice(), &c).unwrap(), pool);
    }

    #[test]
    fn overrides_parse() {
        let c = Corpus::from_texts([(Some("d1".to_string()), "a"), (Some("d2".to_string()), "b")])
            .unwrap();
        let o = read_pseudo_overrides("d2\twhat is b\nd2\tb again\n".as_bytes(), &c).unwrap();
        assert_eq!(o[&1], vec!["what is b", "b again"]);
        assert!(read_pseudo_overrides("zz\tq\n".as_bytes(), &c).is_err());
        assert!(read_pseudo_overrides("no tab\n".as_bytes(), &c).is_err());
    }
}
