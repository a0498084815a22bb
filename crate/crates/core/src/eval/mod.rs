//! Ranked runs, relevance judgments and the evaluation report.
//!
//! Facts are keyed by their serialized form so runs and judgments can be
//! compared without a loaded graph. Unjudged candidates count as grade 0.

pub mod baselines;
pub mod metrics;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fact::{take_fact_string, Fact};
use crate::kg::KnowledgeGraph;
use crate::ranker::order_by_score;
use crate::supervision::{LabeledInstance, Split};
use metrics::{average_precision, mean_defined, ndcg_with_ideal, paired_ttest, reciprocal_rank, TTest};

pub use baselines::{Baseline, BaselineScorer};

pub const MAX_GRADE: u8 = 2;

/// One method's ranked candidate lists, keyed by serialized query fact.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Run {
    pub method: String,
    pub queries: BTreeMap<String, Vec<(String, f64)>>,
}

impl Run {
    pub fn new(method: impl Into<String>) -> Self {
        Run { method: method.into(), queries: BTreeMap::new() }
    }

    /// Add a query's list, already in rank order.
    pub fn push(&mut self, g: &KnowledgeGraph, query: &Fact, ranked: &[(Fact, f64)]) {
        self.queries
            .insert(query.serialize(g), ranked.iter().map(|(f, s)| (f.serialize(g), *s)).collect());
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (q, list) in &self.queries {
            for (i, (c, s)) in list.iter().enumerate() {
                out.push_str(&format!("{q}\t{c}\t{}\t{s}\t{}\n", i + 1, self.method));
            }
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut method: Option<String> = None;
        let mut rows: BTreeMap<String, Vec<(usize, String, f64)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parse = || -> Result<()> {
                let mut fields = line.split('\t');
                let q = take_fact_string(&mut fields)?;
                let c = take_fact_string(&mut fields)?;
                let rank: usize = field(&mut fields, "rank")?
                    .parse()
                    .map_err(|e| Error::Malformed(format!("rank: {e}")))?;
                let score: f64 = field(&mut fields, "score")?
                    .parse()
                    .map_err(|e| Error::Malformed(format!("score: {e}")))?;
                let m = field(&mut fields, "method")?;
                if fields.next().is_some() {
                    return Err(Error::Malformed("trailing fields in run row".into()));
                }
                match &method {
                    None => method = Some(m.to_string()),
                    Some(prev) if prev != m => {
                        return Err(Error::Malformed(format!("run mixes methods `{prev}` and `{m}`")))
                    }
                    _ => {}
                }
                rows.entry(q).or_default().push((rank, c, score));
                Ok(())
            };
            parse().map_err(|e| Error::at_line("<run>", i + 1, e))?;
        }
        let method = method.ok_or(Error::EmptyRun)?;
        let mut queries = BTreeMap::new();
        for (q, mut list) in rows {
            list.sort_by_key(|r| r.0);
            let mut seen = BTreeSet::new();
            for (_, c, _) in &list {
                if !seen.insert(c.clone()) {
                    return Err(Error::Malformed(format!("candidate listed twice for one query: {c}")));
                }
            }
            queries.insert(q, list.into_iter().map(|(_, c, s)| (c, s)).collect());
        }
        Ok(Run { method, queries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text).map_err(|e| relocate(e, path))
    }
}

fn field<'a>(fields: &mut impl Iterator<Item = &'a str>, name: &str) -> Result<&'a str> {
    fields.next().ok_or_else(|| Error::Malformed(format!("missing {name} field")))
}

fn relocate(e: Error, path: &Path) -> Error {
    match e {
        Error::AtLine { line, source, .. } => Error::AtLine { path: path.to_path_buf(), line, source },
        other => other,
    }
}

/// Graded judgments: query → candidate → grade in {0, 1, 2}.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Judgments {
    pub grades: BTreeMap<String, BTreeMap<String, u8>>,
}

impl Judgments {
    pub fn insert(&mut self, query: String, candidate: String, grade: u8) -> Result<()> {
        if grade > MAX_GRADE {
            return Err(Error::Malformed(format!("grade {grade} outside 0..={MAX_GRADE}")));
        }
        if self.grades.entry(query).or_default().insert(candidate, grade).is_some() {
            return Err(Error::Malformed("pair judged twice".into()));
        }
        Ok(())
    }

    pub fn grade(&self, query: &str, candidate: &str) -> u8 {
        self.grades.get(query).and_then(|m| m.get(candidate)).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.grades.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (q, m) in &self.grades {
            for (c, g) in m {
                out.push_str(&format!("{q}\t{c}\t{g}\n"));
            }
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut j = Judgments::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parse = || -> Result<()> {
                let mut fields = line.split('\t');
                let q = take_fact_string(&mut fields)?;
                let c = take_fact_string(&mut fields)?;
                let grade: u8 = field(&mut fields, "grade")?
                    .parse()
                    .map_err(|e| Error::Malformed(format!("grade: {e}")))?;
                if fields.next().is_some() {
                    return Err(Error::Malformed("trailing fields in judgment row".into()));
                }
                j.insert(q, c, grade)
            };
            parse().map_err(|e| Error::at_line("<judgments>", i + 1, e))?;
        }
        Ok(j)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text).map_err(|e| relocate(e, path))
    }

    /// Distant-supervision labels of one split as binary judgments.
    pub fn from_instances(g: &KnowledgeGraph, instances: &[LabeledInstance], split: Split) -> Self {
        let mut j = Judgments::default();
        for inst in instances.iter().filter(|i| i.split == split) {
            j.grades.entry(inst.query.serialize(g)).or_default().insert(inst.candidate.serialize(g), inst.label.min(1));
        }
        j
    }
}

/// Replays distant-supervision labels as a ranking: positives first.
pub fn distsup_run(g: &KnowledgeGraph, instances: &[LabeledInstance], split: Split) -> Run {
    let mut per_query: BTreeMap<String, (Fact, Vec<(Fact, f64)>)> = BTreeMap::new();
    for inst in instances.iter().filter(|i| i.split == split) {
        per_query
            .entry(inst.query.serialize(g))
            .or_insert_with(|| (inst.query, Vec::new()))
            .1
            .push((inst.candidate, f64::from(inst.label.min(1))));
    }
    let mut run = Run::new("distsup");
    for (_, (q, scored)) in per_query {
        run.push(g, &q, &order_by_score(g, scored));
    }
    run
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query: String,
    pub relationship: String,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub ap: f64,
    pub rr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub queries: usize,
    pub map: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub mrr: f64,
}

impl Summary {
    fn of<'a>(rows: impl IntoIterator<Item = &'a QueryMetrics>) -> Self {
        let rows: Vec<&QueryMetrics> = rows.into_iter().collect();
        let avg = |f: fn(&QueryMetrics) -> f64| mean_defined(rows.iter().map(|r| Some(f(r)))).unwrap_or(0.0);
        Summary {
            queries: rows.len(),
            map: avg(|r| r.ap),
            ndcg5: avg(|r| r.ndcg5),
            ndcg10: avg(|r| r.ndcg10),
            mrr: avg(|r| r.rr),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEvaluation {
    pub method: String,
    pub overall: Summary,
    pub per_relationship: BTreeMap<String, Summary>,
    pub per_query: Vec<QueryMetrics>,
}

fn relationship_of(query: &str) -> String {
    query.split('\t').next().unwrap_or_default().to_string()
}

/// Per-query metrics over every judged query with at least one relevant
/// candidate; a query the run omits scores 0.
pub fn evaluate_run(run: &Run, judgments: &Judgments) -> RunEvaluation {
    let empty = Vec::new();
    let per_query: Vec<QueryMetrics> = judgments
        .grades
        .iter()
        .filter_map(|(q, judged)| {
            let pool: Vec<u8> = judged.values().copied().collect();
            let total_relevant = pool.iter().filter(|g| **g >= 1).count();
            if total_relevant == 0 {
                return None;
            }
            let list = run.queries.get(q).unwrap_or(&empty);
            let grades: Vec<u8> = list.iter().map(|(c, _)| judgments.grade(q, c)).collect();
            let binary: Vec<bool> = grades.iter().map(|g| *g >= 1).collect();
            Some(QueryMetrics {
                query: q.clone(),
                relationship: relationship_of(q),
                ndcg5: ndcg_with_ideal(&grades, &pool, 5),
                ndcg10: ndcg_with_ideal(&grades, &pool, 10),
                ap: average_precision(&binary, total_relevant).unwrap_or(0.0),
                rr: reciprocal_rank(&binary, total_relevant).unwrap_or(0.0),
            })
        })
        .collect();
    let mut by_rel: BTreeMap<String, Vec<&QueryMetrics>> = BTreeMap::new();
    for m in &per_query {
        by_rel.entry(m.relationship.clone()).or_default().push(m);
    }
    RunEvaluation {
        method: run.method.clone(),
        overall: Summary::of(&per_query),
        per_relationship: by_rel.into_iter().map(|(r, rows)| (r, Summary::of(rows))).collect(),
        per_query,
    }
}

/// Mean average precision over judged queries with any relevant candidate.
pub fn map_metric(run: &Run, judgments: &Judgments) -> Result<f64> {
    if run.queries.is_empty() {
        return Err(Error::EmptyRun);
    }
    Ok(evaluate_run(run, judgments).overall.map)
}

pub fn mrr_metric(run: &Run, judgments: &Judgments) -> Result<f64> {
    if run.queries.is_empty() {
        return Err(Error::EmptyRun);
    }
    Ok(evaluate_run(run, judgments).overall.mrr)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: String,
    pub a: String,
    pub b: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub test: TTest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub judgments: String,
    pub runs: Vec<RunEvaluation>,
    pub significance: Vec<Comparison>,
}

impl Report {
    pub fn run(&self, method: &str) -> Option<&RunEvaluation> {
        self.runs.iter().find(|r| r.method == method)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

type Metric = (&'static str, fn(&QueryMetrics) -> f64);

const METRICS: [Metric; 4] =
    [("map", |m| m.ap), ("ndcg5", |m| m.ndcg5), ("ndcg10", |m| m.ndcg10), ("mrr", |m| m.rr)];

/// Evaluate every run and t-test each pair of runs on each metric.
pub fn build_report(runs: &[Run], judgments: &Judgments, judgments_label: &str) -> Result<Report> {
    let evals: Vec<RunEvaluation> = runs.iter().map(|r| evaluate_run(r, judgments)).collect();
    let mut significance = Vec::new();
    for i in 0..evals.len() {
        for j in i + 1..evals.len() {
            for (name, get) in METRICS {
                let a: Vec<f64> = evals[i].per_query.iter().map(get).collect();
                let b: Vec<f64> = evals[j].per_query.iter().map(get).collect();
                if a.len() < 2 {
                    continue;
                }
                significance.push(Comparison {
                    metric: name.to_string(),
                    a: evals[i].method.clone(),
                    b: evals[j].method.clone(),
                    mean_a: a.iter().sum::<f64>() / a.len() as f64,
                    mean_b: b.iter().sum::<f64>() / b.len() as f64,
                    test: paired_ttest(&a, &b)?,
                });
            }
        }
    }
    Ok(Report { judgments: judgments_label.to_string(), runs: evals, significance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::toy_kg;

    fn judgments(rows: &[(&str, &str, u8)]) -> Judgments {
        let mut j = Judgments::default();
        for (q, c, g) in rows {
            j.insert(q.to_string(), c.to_string(), *g).unwrap();
        }
        j
    }

    fn run(rows: &[(&str, &[&str])]) -> Run {
        let mut r = Run::new("m");
        for (q, list) in rows {
            let n = list.len();
            r.queries.insert(q.to_string(), list.iter().enumerate().map(|(i, c)| (c.to_string(), (n - i) as f64)).collect());
        }
        r
    }

    #[test]
    fn ideal_run_scores_one() {
        let j = judgments(&[("p\ta\tb", "p\tb\tc", 2), ("p\ta\tb", "p\tc\td", 1), ("p\ta\tb", "p\td\te", 0)]);
        let r = run(&[("p\ta\tb", &["p\tb\tc", "p\tc\td", "p\td\te"])]);
        let e = evaluate_run(&r, &j);
        assert_eq!(e.overall.ndcg5, 1.0);
        assert_eq!(e.overall.map, 1.0);
        assert_eq!(e.overall.mrr, 1.0);
    }

    #[test]
    fn unjudged_and_missing() {
        let j = judgments(&[("p\ta\tb", "p\tb\tc", 1), ("p\tx\ty", "p\ty\tz", 0)]);
        let r = run(&[("p\ta\tb", &["p\tq\tr", "p\tb\tc"])]);
        let e = evaluate_run(&r, &j);
        // the all-irrelevant query is dropped
        assert_eq!(e.overall.queries, 1);
        assert_eq!(e.overall.mrr, 0.5);
        let omitted = evaluate_run(&Run::new("none"), &j);
        assert_eq!(omitted.overall.map, 0.0);
        assert!(map_metric(&Run::new("none"), &j).is_err());
    }

    #[test]
    fn binarization_ignores_grade_two() {
        let j2 = judgments(&[("p\ta\tb", "p\tb\tc", 2), ("p\ta\tb", "p\tc\td", 0)]);
        let j1 = judgments(&[("p\ta\tb", "p\tb\tc", 1), ("p\ta\tb", "p\tc\td", 0)]);
        let r = run(&[("p\ta\tb", &["p\tc\td", "p\tb\tc"])]);
        assert_eq!(map_metric(&r, &j1).unwrap(), map_metric(&r, &j2).unwrap());
        assert_eq!(mrr_metric(&r, &j1).unwrap(), mrr_metric(&r, &j2).unwrap());
    }

    #[test]
    fn files_round_trip() {
        let j = judgments(&[("a|b\tx\tm\ty", "p\tb\tc", 2), ("p\ta\tb", "p\tb\tc", 0)]);
        assert_eq!(Judgments::parse_tsv(&j.to_tsv()).unwrap(), j);
        let r = run(&[("a|b\tx\tm\ty", &["p\tb\tc", "p\tc\td"])]);
        assert_eq!(Run::parse_tsv(&r.to_tsv()).unwrap(), r);
        assert!(Judgments::parse_tsv("p\ta\tb\tp\tb\tc\t3\n").is_err());
        assert!(Run::parse_tsv("").is_err());
        assert!(Run::parse_tsv("p\ta\tb\tp\tb\tc\t1\t0.5\tx\np\ta\tb\tp\tb\td\t2\t0.1\ty\n").is_err());
    }

    #[test]
    fn distsup_puts_positives_first() {
        let g = toy_kg();
        let f = |s: &str| Fact::parse(&g, s).unwrap();
        let q = f("founderOf\tBillGates\tMSFT");
        let mk = |c: &str, label| LabeledInstance { query: q, candidate: f(c), label, split: Split::Test };
        let inst = vec![
            mk("foundedIn\tMSFT\tD1975", 0),
            mk("parentOf\tBillGates\tJenniferGates", 1),
            mk("founderOf\tPaulAllen\tMSFT", 1),
        ];
        let r = distsup_run(&g, &inst, Split::Test);
        let list: Vec<&str> = r.queries.values().next().unwrap().iter().map(|(c, _)| c.as_str()).collect();
        assert_eq!(list, ["founderOf\tPaulAllen\tMSFT", "parentOf\tBillGates\tJenniferGates", "foundedIn\tMSFT\tD1975"]);
        let j = Judgments::from_instances(&g, &inst, Split::Test);
        assert_eq!(evaluate_run(&r, &j).overall.ndcg5, 1.0);
    }

    #[test]
    fn report_has_pairwise_tests() {
        let j = judgments(&[
            ("p\ta\tb", "p\tb\tc", 1),
            ("p\ta\tb", "p\tc\td", 0),
            ("p\tx\ty", "p\ty\tz", 1),
            ("p\tx\ty", "p\tz\tw", 0),
        ]);
        let good = run(&[("p\ta\tb", &["p\tb\tc", "p\tc\td"]), ("p\tx\ty", &["p\ty\tz", "p\tz\tw"])]);
        let mut bad = run(&[("p\ta\tb", &["p\tc\td", "p\tb\tc"]), ("p\tx\ty", &["p\tz\tw", "p\ty\tz"])]);
        bad.method = "bad".into();
        let report = build_report(&[good, bad], &j, "test").unwrap();
        assert_eq!(report.significance.len(), 4);
        let mrr = report.significance.iter().find(|c| c.metric == "mrr").unwrap();
        assert_eq!((mrr.mean_a, mrr.mean_b), (1.0, 0.5));
        assert!(mrr.test.degenerate);
        let back: Report = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }
}
