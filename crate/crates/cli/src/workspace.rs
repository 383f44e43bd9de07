//! Artifact layout under the work directory and loaders for each artifact.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use dsilab::data::{PipelineMode, Task};
use dsilab::metrics::QrelSet;
use dsilab::model::{checkpoint, StudentRetriever};
use dsilab::pipeline::Teacher;
use dsilab::retrieval::{Bm25Index, DenseIndex, ReferenceScorer, Retriever};
use dsilab::{tsv, Corpus, Error};

use crate::args::{IndexKind, SystemArgs, SystemKind, TaskArg};
use crate::config::ExperimentConfig;
use crate::manifest::Manifest;

pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn corpus_file(&self) -> PathBuf {
        self.corpus_dir().join("corpus.json")
    }

    pub fn index_dir(&self, kind: IndexKind) -> PathBuf {
        self.root.join("index").join(kind_name(kind))
    }

    /// Where the index files themselves live, below the manifest.
    pub fn index_files(&self, kind: IndexKind) -> PathBuf {
        self.index_dir(kind).join("index")
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.root.join("model")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.model_dir().join("model.ckpt")
    }

    pub fn probe_dir(&self, name: &str) -> PathBuf {
        self.root.join("probes").join(name)
    }

    pub fn run_dir(&self, name: &str) -> PathBuf {
        self.root.join("runs").join(name)
    }

    pub fn eval_dir(&self, name: &str) -> PathBuf {
        self.root.join("eval").join(name)
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        let path = self.corpus_file();
        let text = read_artifact(&path)?;
        let mut corpus: Corpus =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        corpus.rebuild_cache()?;
        Ok(corpus)
    }

    pub fn load_index(&self, kind: IndexKind, corpus: &Corpus) -> Result<Teacher> {
        let dir = self.index_files(kind);
        let teacher = match kind {
            IndexKind::Bm25 => Teacher::Bm25(Bm25Index::load(&dir)?),
            IndexKind::Dense => Teacher::Dense(DenseIndex::load(&dir)?),
        };
        if teacher.retriever().ids() != corpus.ids() {
            bail!(Error::Consistency(format!(
                "index in {} was built over a different corpus; rerun `index`",
                dir.display()
            )));
        }
        Ok(teacher)
    }

    /// Trained student plus the mode it was trained in.
    pub fn load_student(&self) -> Result<(dsilab::model::TinyGenModel, PipelineMode)> {
        let manifest = Manifest::read(&self.model_dir())?;
        let model = checkpoint::load(&self.checkpoint())?;
        Ok((model, manifest.config.pipeline.mode))
    }

    pub fn load_system(&self, args: &SystemArgs, config: &ExperimentConfig, corpus: &Corpus) -> Result<System> {
        Ok(match args.system {
            SystemKind::Bm25 => System::Index(self.load_index(IndexKind::Bm25, corpus)?),
            SystemKind::Dense => System::Index(self.load_index(IndexKind::Dense, corpus)?),
            SystemKind::Student => {
                let (model, mode) = self.load_student()?;
                let task = match args.task {
                    Some(TaskArg::Index) => Task::Index,
                    Some(TaskArg::Retrieve) => Task::Retrieve,
                    None if mode.needs_signals() => Task::Retrieve,
                    None => Task::Index,
                };
                let beam = args.beam.unwrap_or(config.decode.beam);
                System::Student(StudentRetriever::new(model, corpus.ids(), task, beam)?)
            }
        })
    }
}

pub fn kind_name(kind: IndexKind) -> &'static str {
    match kind {
        IndexKind::Bm25 => "bm25",
        IndexKind::Dense => "dense",
    }
}

pub enum System {
    Student(StudentRetriever),
    Index(Teacher),
}

impl System {
    pub fn retriever(&self) -> &dyn Retriever {
        match self {
            System::Student(s) => s,
            System::Index(t) => t.retriever(),
        }
    }

    /// Label used for output directories and run tags.
    pub fn label(&self) -> String {
        self.retriever().name().to_string()
    }
}

/// A reference scorer built over the corpus, independent of any persisted
/// index.
pub enum Reference {
    Bm25(Bm25Index),
    Dense(DenseIndex),
}

impl Reference {
    pub fn build(kind: IndexKind, config: &ExperimentConfig, corpus: &Corpus) -> Result<Self> {
        Ok(match kind {
            IndexKind::Bm25 => Reference::Bm25(Bm25Index::build(corpus, config.teacher.bm25)?),
            IndexKind::Dense => Reference::Dense(DenseIndex::build(
                corpus,
                config.probe.reference_dimension,
                config.reference_seed(),
            )?),
        })
    }

    pub fn scorer(&self) -> ReferenceScorer<'_> {
        match self {
            Reference::Bm25(i) => ReferenceScorer::Bm25(i),
            Reference::Dense(i) => ReferenceScorer::Dense(i),
        }
    }
}

pub fn read_artifact(path: &Path) -> Result<String> {
    if !path.exists() {
        bail!(Error::MissingArtifact(path.to_path_buf()));
    }
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn open_artifact(path: &Path) -> Result<BufReader<File>> {
    if !path.exists() {
        bail!(Error::MissingArtifact(path.to_path_buf()));
    }
    Ok(BufReader::new(File::open(path)?))
}

pub fn read_topics(path: &Path) -> Result<Vec<(String, String)>> {
    tsv::read_topics(open_artifact(path)?).with_context(|| format!("reading topics {}", path.display()))
}

pub fn read_qrels(path: &Path) -> Result<QrelSet> {
    QrelSet::read_trec(open_artifact(path)?).with_context(|| format!("reading qrels {}", path.display()))
}
