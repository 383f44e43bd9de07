//! Writes a synthetic topical corpus with training and held-out queries.
//!
//! `cargo run --example write_fixture -- OUT_DIR [TOPICS DOCS_PER_TOPIC TRAIN_QUERIES TEST_QUERIES SEED]`
//!
//! Output: `corpus.jsonl`, `train_topics.tsv`, `train_qrels.txt`,
//! `test_topics.tsv`, `test_qrels.txt`.

use std::fs;
use std::path::PathBuf;

use dsilab::synth::{SynthConfig, SynthCorpus};
use dsilab::{seed, tsv};

fn main() -> std::io::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = PathBuf::from(args.first().map(String::as_str).unwrap_or("fixture"));
    let num = |i: usize, default: u64| -> u64 {
        args.get(i).map(|s| s.parse().expect("numeric argument")).unwrap_or(default)
    };
    let config = SynthConfig {
        n_topics: num(1, 10) as usize,
        docs_per_topic: num(2, 10) as usize,
        doc_tokens: 120,
        seed: num(5, 0),
        ..Default::default()
    };
    let synth = SynthCorpus::topical(&config);
    fs::create_dir_all(&out)?;
    fs::write(out.join("corpus.jsonl"), synth.to_jsonl())?;
    for (name, n, label) in [("train", num(3, 100), "train-queries"), ("test", num(4, 50), "test-queries")] {
        let queries = synth.queries(n as usize, seed::derive(config.seed, label));
        let topics: Vec<(String, String)> = queries
            .iter()
            .enumerate()
            .map(|(i, (text, _))| (format!("{name}{i}"), text.clone()))
            .collect();
        let qrels: String = queries
            .iter()
            .enumerate()
            .map(|(i, (_, owner))| format!("{name}{i} 0 d{owner} 1\n"))
            .collect();
        fs::write(out.join(format!("{name}_topics.tsv")), tsv::write_topics(&topics))?;
        fs::write(out.join(format!("{name}_qrels.txt")), qrels)?;
    }
    Ok(())
}
