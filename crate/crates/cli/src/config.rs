//! Experiment configuration: a TOML file over built-in defaults, with
//! command-line overrides applied on top by the subcommands.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use dsilab::data::{DataConfig, PipelineMode};
use dsilab::model::{ModelConfig, OptimizerConfig, TrainConfig};
use dsilab::pipeline::{PipelineConfig, TeacherConfig};
use dsilab::seed;
use dsilab::IdScheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed; every subsystem seed is derived from it.
    pub seed: u64,
    /// Worker threads; all available cores when unset.
    pub threads: Option<usize>,
    /// Directory holding every artifact of the experiment.
    pub work_dir: PathBuf,
    pub corpus: CorpusConfig,
    pub teacher: TeacherConfig,
    pub data: DataConfig,
    pub pipeline: PipelineSection,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub queries: QueryFiles,
    pub probe: ProbeConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: None,
            work_dir: PathBuf::from("work"),
            corpus: CorpusConfig::default(),
            teacher: TeacherConfig::default(),
            data: DataConfig::default(),
            pipeline: PipelineSection::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            decode: DecodeConfig::default(),
            queries: QueryFiles::default(),
            probe: ProbeConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub path: Option<PathBuf>,
    pub id_scheme: IdScheme,
    pub branching: usize,
    pub leaf_size: usize,
    /// Dimension of the dense embeddings clustered for semantic ids.
    pub embedding_dimension: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            path: None,
            id_scheme: IdScheme::Naive,
            branching: 10,
            leaf_size: 100,
            embedding_dimension: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub mode: PipelineMode,
    pub dm_index_epochs: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self { mode: p.mode, dm_index_epochs: p.dm_index_epochs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub beam: usize,
    pub k: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { beam: 4, k: 10 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryFiles {
    /// `qid<TAB>text` lines.
    pub topics: Option<PathBuf>,
    /// TREC qrels, `qid 0 docid grade`.
    pub qrels: Option<PathBuf>,
    /// `doc_key<TAB>query_text` lines replacing generated pseudo queries.
    pub pseudo_queries: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub cutoffs: Vec<usize>,
    /// Training pseudo queries sampled for the exclusivity probe.
    pub pseudo_sample: usize,
    pub chunk_len: usize,
    pub chunk_overlap: usize,
    pub top_chunks: usize,
    pub p_max: usize,
    pub n_random: usize,
    /// Dimension of the dense reference scorer, built with its own seed.
    pub reference_dimension: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            cutoffs: vec![16, 32, 64, 128],
            pseudo_sample: 500,
            chunk_len: 32,
            chunk_overlap: 8,
            top_chunks: 3,
            p_max: 10,
            n_random: 10,
            reference_dimension: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Minimum grade counted relevant by P@10.
    pub p10_threshold: u32,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { p10_threshold: 1 }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Defaults, or the file's settings over them.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                Self::from_toml(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    /// The core pipeline settings with every seed derived from the root.
    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            mode: self.pipeline.mode,
            data: self.data.clone(),
            model: self.model,
            train: self.train.clone(),
            dm_index_epochs: self.pipeline.dm_index_epochs,
            seed: self.seed,
        }
        .seeded()
    }

    /// Copy of the config with derived seeds written in, as recorded in
    /// manifests.
    pub fn resolved(&self) -> Self {
        let p = self.pipeline_config();
        let mut out = self.clone();
        out.data = p.data;
        out.train = p.train;
        out
    }

    pub fn set_lr(&mut self, lr: f64) {
        match &mut self.train.optimizer {
            OptimizerConfig::Sgd { lr: l } | OptimizerConfig::Adam { lr: l, .. } => *l = lr,
        }
    }

    pub fn semantic_seed(&self) -> u64 {
        seed::derive(self.seed, "semantic-ids")
    }

    pub fn semantic_embedding_seed(&self) -> u64 {
        seed::derive(self.seed, "semantic-embedding")
    }

    pub fn reference_seed(&self) -> u64 {
        seed::derive(self.seed, "reference")
    }

    pub fn probe_seed(&self, probe: &str) -> u64 {
        seed::derive(seed::derive(self.seed, "probe"), probe)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c = ExperimentConfig::from_toml(
            "seed = 7\n[model]\nh = 32\n[pipeline]\nmode = \"d+m\"\n[train.optimizer]\nkind = \"sgd\"\nlr = 0.1\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.model.h, 32);
        assert_eq!(c.model.d, ModelConfig::default().d);
        assert_eq!(c.pipeline.mode, PipelineMode::DPlusM);
        assert_eq!(c.train.optimizer, OptimizerConfig::Sgd { lr: 0.1 });
        assert_eq!(c.data, DataConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("sede = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("[probe]\ncutof = [1]\n").is_err());
    }

    #[test]
    fn resolved_seeds_follow_root() {
        let mut a = ExperimentConfig::default();
        a.seed = 3;
        let b = a.clone();
        assert_eq!(a.resolved(), b.resolved());
        a.seed = 4;
        assert_ne!(a.resolved().train.seed, b.resolved().train.seed);
    }
}
