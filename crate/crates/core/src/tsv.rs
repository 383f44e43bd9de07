//! Tab-separated inputs: topic files and the query/owner pairs derived from
//! them.

use std::collections::BTreeMap;
use std::io::BufRead;

use crate::corpus::Corpus;
use crate::data::OwnedQuery;
use crate::error::{Error, Result};
use crate::metrics::QrelSet;

/// `qid<TAB>text` lines, in file order.
pub fn read_topics<R: BufRead>(r: R) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (qid, text) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: "expected qid<TAB>text".into(),
        })?;
        if !seen.insert(qid.to_string()) {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("duplicate qid {qid:?}"),
            });
        }
        out.push((qid.to_string(), text.trim().to_string()));
    }
    Ok(out)
}

pub fn write_topics(topics: &[(String, String)]) -> String {
    topics.iter().map(|(q, t)| format!("{q}\t{t}\n")).collect()
}

/// One training query per relevant `(topic, document)` judgment.
pub fn owned_queries(
    topics: &[(String, String)],
    qrels: &QrelSet,
    corpus: &Corpus,
) -> Result<Vec<OwnedQuery>> {
    let texts: BTreeMap<&str, &str> = topics.iter().map(|(q, t)| (q.as_str(), t.as_str())).collect();
    let mut out = Vec::new();
    for (qid, judged) in &qrels.judgments {
        let Some(text) = texts.get(qid.as_str()) else {
            continue;
        };
        for (doc, grade) in judged {
            if *grade == 0 {
                continue;
            }
            let owner = corpus.index_of_key(doc).ok_or_else(|| {
                Error::Consistency(format!("qrels document {doc:?} not in the corpus"))
            })?;
            out.push(OwnedQuery { text: text.to_string(), owner });
        }
    }
    Ok(out)
}
