//! End-to-end training for one pipeline mode: build the data the mode calls
//! for, the distillation signals if needed, the vocabulary, and train.

use log::info;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::data::{
    self, DataConfig, FragmentPool, KindCounts, OwnedQuery, PipelineMode, PseudoOverrides,
    Schedule, SignalTable,
};
use crate::error::{Error, Result};
use crate::model::{self, ModelConfig, TinyGenModel, TrainConfig, TrainReport, Vocab};
use crate::retrieval::{Bm25Index, Bm25Params, DenseIndex, Retriever, ScorerKind};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub kind: ScorerKind,
    pub dense_dimension: usize,
    pub bm25: Bm25Params,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            kind: ScorerKind::DenseCosine,
            dense_dimension: 128,
            bm25: Bm25Params::default(),
        }
    }
}

pub enum Teacher {
    Bm25(Bm25Index),
    Dense(DenseIndex),
}

impl Teacher {
    pub fn build(corpus: &Corpus, config: &TeacherConfig, seed: u64) -> Result<Self> {
        Ok(match config.kind {
            ScorerKind::Bm25 => Teacher::Bm25(Bm25Index::build(corpus, config.bm25)?),
            ScorerKind::DenseCosine => Teacher::Dense(DenseIndex::build(
                corpus,
                config.dense_dimension,
                seed::derive(seed, "dense-projection"),
            )?),
        })
    }

    pub fn retriever(&self) -> &dyn Retriever {
        match self {
            Teacher::Bm25(i) => i,
            Teacher::Dense(i) => i,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: PipelineMode,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Index-only epochs before the retrieve phase in `d+m`.
    pub dm_index_epochs: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: PipelineMode::Multi,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            dm_index_epochs: 15,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Sub-seeds for data, model init and training, all split from `seed`.
    pub fn seeded(mut self) -> Self {
        self.data.seed = seed::derive(self.seed, "data");
        self.train.seed = seed::derive(self.seed, "train");
        self
    }
}

/// Training data prepared for a mode.
/// Seed for model initialization.
pub fn init_seed(root: u64) -> u64 {
    seed::derive(root, "init")
}

/// Seed for the per-epoch example mix and shuffle.
pub fn mix_seed(root: u64) -> u64 {
    seed::derive(root, "mix")
}

pub struct Prepared {
    pub pool: FragmentPool,
    pub signals: SignalTable,
    pub counts: KindCounts,
}

pub fn prepare_data(
    corpus: &Corpus,
    teacher: &dyn Retriever,
    config: &PipelineConfig,
    queries: &[OwnedQuery],
    overrides: Option<&PseudoOverrides>,
) -> Result<Prepared> {
    let pool =
        data::build_pool_for_mode(config.mode, corpus, teacher, &config.data, queries, overrides)?;
    if pool.is_empty() {
        return Err(Error::Consistency("training pool is empty".into()));
    }
    let signals = if config.mode.needs_signals() {
        data::build_signals(&pool, teacher, config.data.f)?
    } else {
        SignalTable::default()
    };
    let counts = KindCounts::of(&pool);
    info!(
        "{} pool: {} segments, {} pseudo queries, {} user queries",
        config.mode, counts.segment, counts.pseudo_query, counts.user_query
    );
    Ok(Prepared { pool, signals, counts })
}

pub struct Trained {
    pub model: TinyGenModel,
    pub reports: Vec<TrainReport>,
    pub counts: KindCounts,
}

pub fn train_prepared(
    corpus: &Corpus,
    prepared: Prepared,
    config: &PipelineConfig,
    on_step: impl FnMut(&TrainReport),
) -> Result<Trained> {
    let vocab = Vocab::build(corpus, &prepared.pool);
    let mut model = TinyGenModel::new(config.model, vocab, init_seed(config.seed))?;
    let counts = prepared.counts.clone();
    let schedule = Schedule {
        mode: config.mode,
        pool: prepared.pool,
        signals: prepared.signals,
        dm_index_epochs: config.dm_index_epochs,
        seed: mix_seed(config.seed),
    };
    let reports = model::train(&mut model, &schedule, &config.train, on_step)?;
    Ok(Trained { model, reports, counts })
}

pub fn run(
    corpus: &Corpus,
    teacher: &dyn Retriever,
    config: &PipelineConfig,
    queries: &[OwnedQuery],
) -> Result<Trained> {
    let prepared = prepare_data(corpus, teacher, config, queries, None)?;
    train_prepared(corpus, prepared, config, |_| {})
}
