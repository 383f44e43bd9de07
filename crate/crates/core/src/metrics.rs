//! Rank-cutoff metrics over document keys and the paired t-test.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Graded judgments per query, keyed by document key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrelSet {
    pub judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl QrelSet {
    pub fn insert(&mut self, qid: &str, doc: &str, grade: u32) {
        self.judgments
            .entry(qid.to_string())
            .or_default()
            .insert(doc.to_string(), grade);
    }

    pub fn query(&self, qid: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(qid)
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    /// TREC qrels: `qid iter docid grade`, whitespace separated.
    pub fn read_trec<R: BufRead>(r: R) -> Result<Self> {
        let mut out = Self::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected 4 qrels fields, got {}", f.len()),
                });
            }
            let grade: i64 = f[3].parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("bad grade {:?}", f[3]),
            })?;
            if grade < 0 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("negative grade {grade}"),
                });
            }
            if out.query(f[0]).is_some_and(|q| q.contains_key(f[2])) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("duplicate judgment for ({}, {})", f[0], f[2]),
                });
            }
            out.insert(f[0], f[2], grade as u32);
        }
        Ok(out)
    }
}

/// Ranked document keys per query.
pub type Run = BTreeMap<String, Vec<String>>;

/// Read a TREC run (`qid Q0 docid rank score tag`), ordering by rank.
pub fn read_trec_run<R: BufRead>(r: R) -> Result<Run> {
    let mut rows: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 6 run fields, got {}", f.len()),
            });
        }
        let rank: usize = f[3].parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("bad rank {:?}", f[3]),
        })?;
        rows.entry(f[0].to_string())
            .or_default()
            .push((rank, f[2].to_string()));
    }
    Ok(rows
        .into_iter()
        .map(|(q, mut v)| {
            v.sort();
            (q, v.into_iter().map(|(_, d)| d).collect())
        })
        .collect())
}

fn grade(judged: &BTreeMap<String, u32>, doc: &str) -> u32 {
    judged.get(doc).copied().unwrap_or(0)
}

/// 1 if a document with grade of at least 1 is within the first `k`.
pub fn hits_at_k(ranking: &[String], judged: &BTreeMap<String, u32>, k: usize) -> f64 {
    let hit = ranking.iter().take(k).any(|d| grade(judged, d) >= 1);
    f64::from(u8::from(hit))
}

/// NDCG with gain `2^g - 1` and discount `1/log2(rank + 1)`; zero when no
/// judged document is relevant.
pub fn ndcg_at_k(ranking: &[String], judged: &BTreeMap<String, u32>, k: usize) -> f64 {
    let gain = |g: u32| 2f64.powi(g as i32) - 1.0;
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain(grade(judged, d)) / ((i + 2) as f64).log2())
        .sum();
    let mut ideal: Vec<u32> = judged.values().copied().filter(|&g| g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) / ((i + 2) as f64).log2())
        .sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

pub fn ndcg_at_10(ranking: &[String], judged: &BTreeMap<String, u32>) -> f64 {
    ndcg_at_k(ranking, judged, 10)
}

/// Relevant documents (grade of at least `threshold`) in the top 10, over 10.
pub fn precision_at_10(ranking: &[String], judged: &BTreeMap<String, u32>, threshold: u32) -> f64 {
    let n = ranking
        .iter()
        .take(10)
        .filter(|d| grade(judged, d) >= threshold)
        .count();
    n as f64 / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Hits(usize),
    Ndcg10,
    P10 { threshold: u32 },
}

impl Metric {
    pub fn name(&self) -> String {
        match self {
            Metric::Hits(k) => format!("hits@{k}"),
            Metric::Ndcg10 => "ndcg@10".into(),
            Metric::P10 { threshold } if *threshold == 1 => "p@10".into(),
            Metric::P10 { threshold } => format!("p@10(rel>={threshold})"),
        }
    }

    pub fn cutoff(&self) -> usize {
        match self {
            Metric::Hits(k) => *k,
            _ => 10,
        }
    }

    pub fn eval(&self, ranking: &[String], judged: &BTreeMap<String, u32>) -> f64 {
        match self {
            Metric::Hits(k) => hits_at_k(ranking, judged, *k),
            Metric::Ndcg10 => ndcg_at_10(ranking, judged),
            Metric::P10 { threshold } => precision_at_10(ranking, judged, *threshold),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub metric: String,
    pub cutoff: usize,
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
    /// Run queries with no judgments, left out of the mean.
    pub unjudged: Vec<String>,
}

impl MetricTable {
    /// TSV with one `qid<TAB>value` row per query and a final `all` row.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("qid\t{}\n", self.metric);
        for (q, v) in &self.per_query {
            let _ = writeln!(out, "{q}\t{v:.6}");
        }
        let _ = writeln!(out, "all\t{:.6}", self.mean);
        out
    }
}

/// Evaluate every judged query. A judged query missing from the run scores
/// as an empty ranking.
pub fn evaluate(run: &Run, qrels: &QrelSet, metric: Metric) -> Result<MetricTable> {
    if metric.cutoff() == 0 {
        return Err(contract("metric cutoff must be at least 1"));
    }
    let empty = Vec::new();
    let per_query: BTreeMap<String, f64> = qrels
        .judgments
        .iter()
        .map(|(q, judged)| {
            let ranking = run.get(q).unwrap_or(&empty);
            (q.clone(), metric.eval(ranking, judged))
        })
        .collect();
    let unjudged = run
        .keys()
        .filter(|q| !qrels.judgments.contains_key(*q))
        .cloned()
        .collect();
    let mean = if per_query.is_empty() {
        0.0
    } else {
        per_query.values().sum::<f64>() / per_query.len() as f64
    };
    Ok(MetricTable {
        metric: metric.name(),
        cutoff: metric.cutoff(),
        per_query,
        mean,
        unjudged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    /// Two-tailed.
    pub p: f64,
}

/// Paired two-tailed t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(contract(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(contract("paired t-test needs at least 2 pairs"));
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let df = a.len() - 1;
    let scale = diffs.iter().map(|d| d.abs()).fold(0.0, f64::max).max(1.0);
    if var.sqrt() <= 1e-14 * scale {
        return Ok(if mean.abs() <= 1e-14 * scale {
            TTest { t: 0.0, df, p: 1.0 }
        } else {
            TTest { t: f64::INFINITY.copysign(mean), df, p: 0.0 }
        });
    }
    let t = mean / (var / n).sqrt();
    Ok(TTest { t, df, p: student_t_two_tailed(t, df as f64) })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// `I_x(a, b)` by Lentz's continued fraction, using the symmetry
/// `I_x(a, b) = 1 - I_{1-x}(b, a)` where it converges faster.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(1.0 - x, b, a) / b
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn judged(v: &[(&str, u32)]) -> BTreeMap<String, u32> {
        v.iter().map(|(d, g)| (d.to_string(), *g)).collect()
    }

    #[test]
    fn hits_examples() {
        let run = keys(&["d3", "d7"]);
        let q = judged(&[("d7", 1)]);
        assert_eq!(hits_at_k(&run, &q, 1), 0.0);
        assert_eq!(hits_at_k(&run, &q, 10), 1.0);
        assert_eq!(hits_at_k(&[], &q, 10), 0.0);
    }

    #[test]
    fn ndcg_examples() {
        let q = judged(&[("a", 3), ("b", 1), ("c", 0)]);
        assert!((ndcg_at_10(&keys(&["a", "b"]), &q) - 1.0).abs() < 1e-12);
        assert_eq!(ndcg_at_10(&keys(&["a"]), &judged(&[("a", 0)])), 0.0);
        let swapped = judged(&[("a", 2), ("b", 2)]);
        assert_eq!(
            ndcg_at_10(&keys(&["a", "b", "x"]), &swapped),
            ndcg_at_10(&keys(&["b", "a", "x"]), &swapped)
        );
    }

    #[test]
    fn precision_examples() {
        let docs: Vec<String> = (0..10).map(|i| format!("d{i}")).collect();
        let all: BTreeMap<String, u32> = docs.iter().map(|d| (d.clone(), 1)).collect();
        assert_eq!(precision_at_10(&docs, &all, 1), 1.0);
        let q = judged(&[("a", 1), ("c", 2)]);
        assert_eq!(precision_at_10(&keys(&["a", "b", "c", "d"]), &q, 1), 0.2);
        assert_eq!(precision_at_10(&keys(&["a", "b", "c", "d"]), &q, 2), 0.1);
    }

    #[test]
    fn t_test_degenerate_cases() {
        let a = [0.1, 0.5, 0.7];
        assert_eq!(paired_t_test(&a, &a).unwrap().p, 1.0);
        let b: Vec<f64> = a.iter().map(|x| x - 0.25).collect();
        assert!(paired_t_test(&a, &b).unwrap().p < 1e-12);
        assert!(paired_t_test(&a, &[1.0]).is_err());
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn qrels_and_runs_parse() {
        let q = QrelSet::read_trec("q1 0 d1 2\nq1 0 d2 0\nq2 0 d9 1\n".as_bytes()).unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q.query("q1").unwrap()["d1"], 2);
        assert!(QrelSet::read_trec("q1 0 d1\n".as_bytes()).is_err());
        assert!(QrelSet::read_trec("q1 0 d1 -1\n".as_bytes()).is_err());
        let run = read_trec_run("q1 Q0 b 2 0.5 x\nq1 Q0 a 1 0.9 x\n".as_bytes()).unwrap();
        assert_eq!(run["q1"], keys(&["a", "b"]));
    }

    #[test]
    fn evaluate_reports_unjudged() {
        let mut qrels = QrelSet::default();
        qrels.insert("q1", "a", 1);
        qrels.insert("q2", "b", 1);
        let mut run = Run::new();
        run.insert("q1".into(), keys(&["a"]));
        run.insert("q3".into(), keys(&["a"]));
        let t = evaluate(&run, &qrels, Metric::Hits(1)).unwrap();
        assert_eq!(t.per_query["q1"], 1.0);
        assert_eq!(t.per_query["q2"], 0.0);
        assert_eq!(t.mean, 0.5);
        assert_eq!(t.unjudged, vec!["q3".to_string()]);
        assert!(t.to_tsv().ends_with("all\t0.500000\n"));
    }
}
