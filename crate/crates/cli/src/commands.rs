use std::fs;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use rand::seq::index;
use rayon::prelude::*;
use serde_json::json;

use dsilab::data::{
    self, FragmentKind, FragmentPool, KindCounts, OwnedQuery, PipelineMode, Schedule, SignalTable,
};
use dsilab::metrics::{self, Metric, MetricTable};
use dsilab::model::checkpoint;
use dsilab::pipeline::{self, Prepared, Teacher, TeacherConfig};
use dsilab::probes;
use dsilab::retrieval::{DenseIndex, ScorerKind};
use dsilab::{seed, tsv, Corpus, IdScheme};

use crate::args::*;
use crate::config::ExperimentConfig;
use crate::manifest::Manifest;
use crate::workspace::{self, open_artifact, read_qrels, read_topics, Reference, Workspace};

pub fn run(cli: Cli) -> Result<()> {
    let mut config = ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(w) = cli.work {
        config.work_dir = w;
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(t) = cli.threads {
        config.threads = Some(t);
    }
    if let Some(t) = config.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        if rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_err() {
            warn!("thread pool already initialized; --threads ignored");
        }
    }
    let ws = Workspace::new(&config.work_dir);
    if !matches!(cli.command, Command::Ingest(_)) {
        inherit_corpus(&mut config, &ws)?;
    }
    match cli.command {
        Command::Ingest(a) => ingest(config, &ws, a),
        Command::Index(a) => build_index(config, &ws, a),
        Command::BuildData(a) => build_data(config, &ws, a),
        Command::Train(a) => train(config, &ws, a),
        Command::Probe(a) => probe(config, &ws, a),
        Command::Evaluate(a) => evaluate(config, &ws, a),
        Command::ExportRun(a) => export_run(config, &ws, a),
    }
}

/// Adopt the corpus settings recorded at ingest time, so every later
/// manifest describes the ids actually in use.
fn inherit_corpus(config: &mut ExperimentConfig, ws: &Workspace) -> Result<()> {
    match Manifest::read(&ws.corpus_dir()) {
        Ok(m) => {
            if m.config.corpus != config.corpus {
                log::debug!("using the corpus settings recorded at ingest");
            }
            config.corpus = m.config.corpus;
            Ok(())
        }
        // Commands that need the corpus report the missing file themselves.
        Err(_) if !ws.corpus_file().exists() => Ok(()),
        Err(e) => Err(e),
    }
}

fn ingest(mut config: ExperimentConfig, ws: &Workspace, args: IngestArgs) -> Result<()> {
    if let Some(p) = args.corpus {
        config.corpus.path = Some(p);
    }
    if let Some(s) = args.ids {
        config.corpus.id_scheme = match s {
            SchemeArg::Naive => IdScheme::Naive,
            SchemeArg::Semantic => IdScheme::Semantic,
        };
    }
    if let Some(b) = args.branching {
        config.corpus.branching = b;
    }
    if let Some(c) = args.leaf_size {
        config.corpus.leaf_size = c;
    }
    let path = config
        .corpus
        .path
        .clone()
        .context("no corpus file: pass --corpus or set corpus.path")?;
    let corpus = Corpus::ingest(open_artifact(&path)?)
        .with_context(|| format!("ingesting {}", path.display()))?;
    let mut warnings = Vec::new();
    let corpus = match config.corpus.id_scheme {
        IdScheme::Naive => corpus,
        IdScheme::Semantic => {
            let embeddings = DenseIndex::build(
                &corpus,
                config.corpus.embedding_dimension,
                config.semantic_embedding_seed(),
            )?
            .rows();
            let assigned = corpus.assign_semantic_ids(
                &embeddings,
                config.corpus.branching,
                config.corpus.leaf_size,
                config.semantic_seed(),
            )?;
            for w in &assigned.warnings {
                warn!("{w}");
            }
            warnings = assigned.warnings;
            assigned.corpus
        }
    };
    let dir = ws.corpus_dir();
    fs::create_dir_all(&dir)?;
    fs::write(ws.corpus_file(), serde_json::to_string(&corpus)? + "\n")?;
    let ids: String = corpus
        .documents()
        .iter()
        .map(|d| format!("{}\t{}\n", d.key(), corpus.id(d.internal_index)))
        .collect();
    fs::write(dir.join("ids.tsv"), ids)?;
    info!("ingested {} documents with {} ids", corpus.len(), corpus.scheme());
    Manifest::new("ingest", &config)
        .seed("semantic_ids", config.semantic_seed())
        .seed("semantic_embedding", config.semantic_embedding_seed())
        .input(&path)
        .output("corpus.json")
        .output("ids.tsv")
        .summary(json!({
            "documents": corpus.len(),
            "id_scheme": corpus.scheme(),
            "warnings": warnings,
        }))
        .write(&dir)
}

fn build_index(mut config: ExperimentConfig, ws: &Workspace, args: IndexArgs) -> Result<()> {
    if let Some(d) = args.dimension {
        config.teacher.dense_dimension = d;
    }
    let corpus = ws.load_corpus()?;
    let kind = match args.kind {
        IndexKind::Bm25 => ScorerKind::Bm25,
        IndexKind::Dense => ScorerKind::DenseCosine,
    };
    let teacher_config = TeacherConfig { kind, ..config.teacher.clone() };
    let teacher = Teacher::build(&corpus, &teacher_config, config.seed)?;
    let files = ws.index_files(args.kind);
    match &teacher {
        Teacher::Bm25(i) => i.save(&files)?,
        Teacher::Dense(i) => i.save(&files)?,
    }
    info!("{} index over {} documents", workspace::kind_name(args.kind), corpus.len());
    Manifest::new("index", &config)
        .seed("dense_projection", seed::derive(config.seed, "dense-projection"))
        .input(&ws.corpus_file())
        .output("index")
        .summary(json!({ "kind": workspace::kind_name(args.kind), "documents": corpus.len() }))
        .write(&ws.index_dir(args.kind))
}

fn owned_queries(
    topics: Option<&Path>,
    qrels: Option<&Path>,
    corpus: &Corpus,
) -> Result<Vec<OwnedQuery>> {
    match (topics, qrels) {
        (None, None) => Ok(Vec::new()),
        (Some(t), Some(q)) => Ok(tsv::owned_queries(&read_topics(t)?, &read_qrels(q)?, corpus)?),
        _ => bail!("training queries need both topics and qrels"),
    }
}

fn build_data(mut config: ExperimentConfig, ws: &Workspace, args: BuildDataArgs) -> Result<()> {
    if let Some(m) = &args.mode {
        config.pipeline.mode = m.parse::<PipelineMode>()?;
    }
    if let Some(t) = args.teacher {
        config.teacher.kind = match t {
            IndexKind::Bm25 => ScorerKind::Bm25,
            IndexKind::Dense => ScorerKind::DenseCosine,
        };
    }
    if args.topics.is_some() {
        config.queries.topics = args.topics;
    }
    if args.qrels.is_some() {
        config.queries.qrels = args.qrels;
    }
    if args.pseudo_queries.is_some() {
        config.queries.pseudo_queries = args.pseudo_queries;
    }
    if args.no_filter {
        config.data.filter = false;
    }
    let corpus = ws.load_corpus()?;
    let teacher_kind = match config.teacher.kind {
        ScorerKind::Bm25 => IndexKind::Bm25,
        ScorerKind::DenseCosine => IndexKind::Dense,
    };
    let teacher = ws.load_index(teacher_kind, &corpus)?;
    let queries = owned_queries(
        config.queries.topics.as_deref(),
        config.queries.qrels.as_deref(),
        &corpus,
    )?;
    let overrides = match &config.queries.pseudo_queries {
        Some(p) => Some(data::read_pseudo_overrides(open_artifact(p)?, &corpus)?),
        None => None,
    };
    let pc = config.pipeline_config();
    let prepared =
        pipeline::prepare_data(&corpus, teacher.retriever(), &pc, &queries, overrides.as_ref())?;
    let dir = ws.data_dir();
    fs::create_dir_all(&dir)?;
    prepared
        .pool
        .write_jsonl(BufWriter::new(fs::File::create(dir.join("fragments.jsonl"))?))?;
    prepared
        .signals
        .write_jsonl(BufWriter::new(fs::File::create(dir.join("signals.jsonl"))?))?;
    let schedule = Schedule {
        mode: pc.mode,
        pool: prepared.pool.clone(),
        signals: prepared.signals.clone(),
        dm_index_epochs: pc.dm_index_epochs,
        seed: pipeline::mix_seed(pc.seed),
    };
    let first = schedule.epoch(0)?;
    data::write_examples(&first, BufWriter::new(fs::File::create(dir.join("examples.jsonl"))?))?;
    let mut m = Manifest::new("build-data", &config)
        .seed("mix", pipeline::mix_seed(pc.seed))
        .input(&ws.corpus_file())
        .input(&ws.index_files(teacher_kind));
    for p in [&config.queries.topics, &config.queries.qrels, &config.queries.pseudo_queries]
        .into_iter()
        .flatten()
    {
        m = m.input(p);
    }
    m.output("fragments.jsonl")
        .output("signals.jsonl")
        .output("examples.jsonl")
        .summary(json!({
            "mode": pc.mode,
            "fragments": prepared.counts,
            "signals": prepared.signals.len(),
            "first_epoch_examples": first.len(),
        }))
        .write(&dir)
}

fn train(mut config: ExperimentConfig, ws: &Workspace, args: TrainArgs) -> Result<()> {
    if let Some(s) = args.steps {
        config.train.max_steps = Some(s);
    }
    if let Some(e) = args.epochs {
        config.train.epochs = e;
    }
    if let Some(b) = args.batch_size {
        config.train.batch_size = b;
    }
    if let Some(lr) = args.lr {
        config.set_lr(lr);
    }
    let corpus = ws.load_corpus()?;
    let data_manifest = Manifest::read(&ws.data_dir())?;
    let mode = data_manifest.config.pipeline.mode;
    if mode != config.pipeline.mode {
        warn!("training in {mode} mode, as the data was built; config says {}", config.pipeline.mode);
    }
    // The data is already built: record the settings it was built with.
    config.pipeline.mode = mode;
    config.data = data_manifest.config.data;
    config.teacher = data_manifest.config.teacher;
    config.queries = data_manifest.config.queries;
    let fragments = ws.data_dir().join("fragments.jsonl");
    let signals_path = ws.data_dir().join("signals.jsonl");
    let pool = FragmentPool::read_jsonl(open_artifact(&fragments)?, &corpus)?;
    let signals = SignalTable::read_jsonl(open_artifact(&signals_path)?, &corpus)?;
    let counts = KindCounts::of(&pool);
    let pc = config.pipeline_config();
    let trained = pipeline::train_prepared(&corpus, Prepared { pool, signals, counts }, &pc, |_| {})?;
    let dir = ws.model_dir();
    fs::create_dir_all(&dir)?;
    checkpoint::save(&trained.model, &ws.checkpoint())?;
    let mut log = String::from("step\tepoch\tloss\tindex_examples\tretrieve_examples\n");
    for r in &trained.reports {
        log.push_str(&format!(
            "{}\t{}\t{:.6}\t{}\t{}\n",
            r.step, r.epoch, r.loss, r.task_mix_counts.0, r.task_mix_counts.1
        ));
    }
    fs::write(dir.join("train_log.tsv"), log)?;
    let last = trained.reports.last();
    Manifest::new("train", &config)
        .seed("init", pipeline::init_seed(pc.seed))
        .seed("mix", pipeline::mix_seed(pc.seed))
        .input(&ws.corpus_file())
        .input(&fragments)
        .input(&signals_path)
        .output("model.ckpt")
        .output("train_log.tsv")
        .summary(json!({
            "mode": mode,
            "parameters": trained.model.n_params(),
            "vocabulary": trained.model.vocab.len(),
            "steps": last.map_or(0, |r| r.step),
            "final_loss": last.map(|r| r.loss),
        }))
        .write(&dir)
}

fn probe(config: ExperimentConfig, ws: &Workspace, args: ProbeArgs) -> Result<()> {
    match args.probe {
        ProbeCommand::Exclusivity(a) => exclusivity(config, ws, a),
        ProbeCommand::Completeness(a) => completeness(config, ws, a),
        ProbeCommand::Ros(a) => ros(config, ws, a),
    }
}

/// Training pseudo queries, a seeded sample of at most `n`.
fn sample_pseudo_queries(ws: &Workspace, corpus: &Corpus, n: usize, seed: u64) -> Result<Vec<(String, usize)>> {
    let path = ws.data_dir().join("fragments.jsonl");
    if !path.exists() {
        return Ok(Vec::new());
    }
    let pool = FragmentPool::read_jsonl(open_artifact(&path)?, corpus)?;
    let all: Vec<(String, usize)> = pool
        .entries
        .iter()
        .filter(|f| f.kind == FragmentKind::PseudoQuery)
        .map(|f| (f.text.clone(), corpus.index_of_id(&f.owner.id_string).expect("validated owner")))
        .collect();
    if all.len() <= n {
        return Ok(all);
    }
    let mut picked = index::sample(&mut seed::rng(seed), all.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| all[i].clone()).collect())
}

fn exclusivity(mut config: ExperimentConfig, ws: &Workspace, args: ExclusivityArgs) -> Result<()> {
    if let Some(c) = args.cutoffs {
        config.probe.cutoffs = c;
    }
    let corpus = ws.load_corpus()?;
    let system = ws.load_system(&args.system, &config, &corpus)?;
    let sample_seed = config.probe_seed("exclusivity");
    let pqs = sample_pseudo_queries(ws, &corpus, config.probe.pseudo_sample, sample_seed)?;
    let report = probes::exclusivity_probe(
        system.retriever(),
        &corpus,
        &config.probe.cutoffs,
        (!pqs.is_empty()).then_some(pqs.as_slice()),
        None,
    )?;
    let dir = ws.probe_dir(&format!("exclusivity-{}", system.label()));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("exclusivity.tsv"), report.to_tsv())?;
    Manifest::new("probe exclusivity", &config)
        .seed("pseudo_sample", sample_seed)
        .input(&ws.corpus_file())
        .output("exclusivity.tsv")
        .summary(json!({ "system": system.label(), "documents": report.sample_count }))
        .write(&dir)
}

fn completeness(mut config: ExperimentConfig, ws: &Workspace, args: ReferenceProbeArgs) -> Result<()> {
    if args.topics.is_some() {
        config.queries.topics = args.topics;
    }
    if args.qrels.is_some() {
        config.queries.qrels = args.qrels;
    }
    let corpus = ws.load_corpus()?;
    let queries = owned_queries(
        Some(config.queries.topics.as_deref().context("completeness needs --topics")?),
        Some(config.queries.qrels.as_deref().context("completeness needs --qrels")?),
        &corpus,
    )?;
    let pairs: Vec<(String, usize)> = queries.into_iter().map(|q| (q.text, q.owner)).collect();
    let system = ws.load_system(&args.system, &config, &corpus)?;
    let reference = Reference::build(args.reference, &config, &corpus)?;
    let report = probes::completeness_probe(
        system.retriever(),
        &corpus,
        &pairs,
        &reference.scorer(),
        config.probe.chunk_len,
        config.probe.chunk_overlap,
        config.probe.top_chunks,
    )?;
    let dir = ws.probe_dir(&format!("completeness-{}", system.label()));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("completeness.tsv"), report.to_tsv())?;
    let mut m = Manifest::new("probe completeness", &config)
        .seed("reference", config.reference_seed())
        .input(&ws.corpus_file());
    for p in [&config.queries.topics, &config.queries.qrels].into_iter().flatten() {
        m = m.input(p);
    }
    m.output("completeness.tsv")
        .summary(json!({
            "system": system.label(),
            "reference": workspace::kind_name(args.reference),
            "queries": pairs.len(),
        }))
        .write(&dir)
}

fn ros(mut config: ExperimentConfig, ws: &Workspace, args: ReferenceProbeArgs) -> Result<()> {
    if args.topics.is_some() {
        config.queries.topics = args.topics;
    }
    let corpus = ws.load_corpus()?;
    let topics_path = config.queries.topics.clone().context("ros needs --topics")?;
    let topics = read_topics(&topics_path)?;
    let system = ws.load_system(&args.system, &config, &corpus)?;
    let reference = Reference::build(args.reference, &config, &corpus)?;
    let random_seed = config.probe_seed("ros");
    let curve = probes::ros_probe(
        system.retriever(),
        &reference.scorer(),
        &topics,
        &corpus,
        config.probe.p_max,
        config.probe.n_random,
        random_seed,
    )?;
    let dir = ws.probe_dir(&format!("ros-{}", system.label()));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("ros.tsv"), curve.to_tsv())?;
    Manifest::new("probe ros", &config)
        .seed("reference", config.reference_seed())
        .seed("random_documents", random_seed)
        .input(&ws.corpus_file())
        .input(&topics_path)
        .output("ros.tsv")
        .summary(json!({
            "system": system.label(),
            "reference": workspace::kind_name(args.reference),
            "p_max": curve.p_max(),
            "n_random": curve.n_random,
        }))
        .write(&dir)
}

fn export_run(mut config: ExperimentConfig, ws: &Workspace, args: ExportRunArgs) -> Result<()> {
    if args.topics.is_some() {
        config.queries.topics = args.topics;
    }
    if let Some(k) = args.k {
        config.decode.k = k;
    }
    if let Some(b) = args.system.beam {
        config.decode.beam = b;
    }
    let corpus = ws.load_corpus()?;
    let topics_path = config.queries.topics.clone().context("export-run needs --topics")?;
    let topics = read_topics(&topics_path)?;
    let system = ws.load_system(&args.system, &config, &corpus)?;
    let tag = args.tag.unwrap_or_else(|| system.label());
    let k = config.decode.k;
    let lines: Vec<String> = topics
        .par_iter()
        .map(|(qid, text)| system.retriever().search(qid, text, k).to_trec(&corpus, &tag))
        .collect();
    let dir = ws.run_dir(&system.label());
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("run.trec"), lines.concat())?;
    Manifest::new("export-run", &config)
        .input(&ws.corpus_file())
        .input(&topics_path)
        .output("run.trec")
        .summary(json!({ "system": system.label(), "topics": topics.len(), "k": k, "tag": tag }))
        .write(&dir)
}

fn metric_tables(run: &metrics::Run, qrels: &metrics::QrelSet, threshold: u32) -> Result<Vec<MetricTable>> {
    [Metric::Hits(1), Metric::Hits(10), Metric::Ndcg10, Metric::P10 { threshold }]
        .into_iter()
        .map(|m| Ok(metrics::evaluate(run, qrels, m)?))
        .collect()
}

fn evaluate(mut config: ExperimentConfig, ws: &Workspace, args: EvaluateArgs) -> Result<()> {
    if args.qrels.is_some() {
        config.queries.qrels = args.qrels;
    }
    if let Some(t) = args.p10_threshold {
        config.eval.p10_threshold = t;
    }
    let qrels_path = config.queries.qrels.clone().context("evaluate needs --qrels")?;
    let qrels = read_qrels(&qrels_path)?;
    let run = metrics::read_trec_run(open_artifact(&args.run)?)
        .with_context(|| format!("reading run {}", args.run.display()))?;
    let tables = metric_tables(&run, &qrels, config.eval.p10_threshold)?;
    let name = match args.name {
        Some(n) => n,
        None => args
            .run
            .parent()
            .and_then(Path::file_name)
            .map(|s| s.to_string_lossy().into_owned())
            .context("cannot derive an output name from the run path; pass --name")?,
    };
    let dir = ws.eval_dir(&name);
    fs::create_dir_all(&dir)?;

    let mut summary = String::from("metric\tmean\tqueries\tunjudged\n");
    for t in &tables {
        summary.push_str(&format!("{}\t{:.6}\t{}\t{}\n", t.metric, t.mean, t.per_query.len(), t.unjudged.len()));
    }
    fs::write(dir.join("metrics.tsv"), summary)?;

    let mut per_query = String::from("qid");
    for t in &tables {
        per_query.push('\t');
        per_query.push_str(&t.metric);
    }
    per_query.push('\n');
    for qid in tables[0].per_query.keys() {
        per_query.push_str(qid);
        for t in &tables {
            per_query.push_str(&format!("\t{:.6}", t.per_query[qid]));
        }
        per_query.push('\n');
    }
    fs::write(dir.join("per_query.tsv"), per_query)?;

    let mut m = Manifest::new("evaluate", &config).input(&args.run).input(&qrels_path);
    let mut means = serde_json::Map::new();
    for t in &tables {
        means.insert(t.metric.clone(), json!(t.mean));
    }
    if let Some(other) = &args.compare {
        let other_run = metrics::read_trec_run(open_artifact(other)?)
            .with_context(|| format!("reading run {}", other.display()))?;
        let other_tables = metric_tables(&other_run, &qrels, config.eval.p10_threshold)?;
        let mut out = String::from("metric\tmean_a\tmean_b\tt\tdf\tp\n");
        for (a, b) in tables.iter().zip(&other_tables) {
            let va: Vec<f64> = a.per_query.values().copied().collect();
            let vb: Vec<f64> = b.per_query.values().copied().collect();
            let test = metrics::paired_t_test(&va, &vb)?;
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{:.6e}\n",
                a.metric, a.mean, b.mean, test.t, test.df, test.p
            ));
        }
        fs::write(dir.join("ttest.tsv"), out)?;
        m = m.input(other).output("ttest.tsv");
    }
    m.output("metrics.tsv")
        .output("per_query.tsv")
        .summary(json!({ "queries": tables[0].per_query.len(), "means": means }))
        .write(&dir)
}
