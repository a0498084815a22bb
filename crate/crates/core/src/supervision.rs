//! Noisy relevance labels from an entity-tagged corpus, and the
//! per-relationship dataset built from them.
//!
//! For a query fact `r<s, t>` only the document about `s` is read. Each of
//! its sentences that mentions `t` contributes a context set `O` (the first
//! [`MAX_CONTEXT_ENTITIES`] other mentions). Every unordered pair over
//! `O ∪ {s, t}` connected by exactly one fact marks that fact relevant; pairs
//! connected by several facts are ambiguous and mark nothing.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::enumerate::{enumerate_candidates, CandidateSet, EnumConfig};
use crate::error::{Error, Result};
use crate::fact::{direct_facts_between, facts_of_relationship, Fact, Relationship};
use crate::kg::{EntityId, KnowledgeGraph};
use crate::rng::substream;

pub const MAX_CONTEXT_ENTITIES: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub source_entity: String,
    pub sentences: Vec<Vec<String>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn parse_jsonl(text: &str) -> Result<Self> {
        let mut documents = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let doc: Document =
                serde_json::from_str(line).map_err(|e| Error::at_line("<corpus>", i + 1, e.into()))?;
            documents.push(doc);
        }
        Ok(Corpus { documents })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_jsonl(&text).map_err(|e| match e {
            Error::AtLine { line, source, .. } => Error::AtLine { path: path.to_path_buf(), line, source },
            other => other,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for d in &self.documents {
            out.push_str(&serde_json::to_string(d).expect("documents serialize"));
            out.push('\n');
        }
        out
    }
}

/// Corpus with mentions resolved against a graph. Documents sharing a source
/// entity are concatenated in file order.
#[derive(Clone, Debug, Default)]
pub struct ResolvedCorpus {
    docs: HashMap<EntityId, Vec<Vec<EntityId>>>,
    pub unknown_sources: usize,
    pub unknown_mentions: usize,
}

impl ResolvedCorpus {
    pub fn resolve(g: &KnowledgeGraph, corpus: &Corpus) -> Self {
        let mut out = ResolvedCorpus::default();
        for doc in &corpus.documents {
            let Some(src) = g.entity(&doc.source_entity) else {
                out.unknown_sources += 1;
                continue;
            };
            let sentences = out.docs.entry(src).or_default();
            for s in &doc.sentences {
                let mut mentions = Vec::with_capacity(s.len());
                for m in s {
                    match g.entity(m) {
                        Some(e) => mentions.push(e),
                        None => out.unknown_mentions += 1,
                    }
                }
                sentences.push(mentions);
            }
        }
        out
    }

    pub fn sentences(&self, source: EntityId) -> &[Vec<EntityId>] {
        self.docs.get(&source).map_or(&[], Vec::as_slice)
    }

    pub fn num_documents(&self) -> usize {
        self.docs.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Labeling {
    /// Relevant candidates, in candidate order.
    pub relevant: Vec<Fact>,
    /// Facts the corpus marks relevant that enumeration did not produce.
    pub outside_candidates: usize,
}

/// Context entities of one sentence: distinct mentions other than `s` and
/// `t`, in mention order, at most [`MAX_CONTEXT_ENTITIES`].
pub fn context_entities(sentence: &[EntityId], s: EntityId, t: EntityId) -> Vec<EntityId> {
    let mut out: Vec<EntityId> = Vec::new();
    for e in sentence {
        if *e == s || *e == t || out.contains(e) {
            continue;
        }
        if out.len() == MAX_CONTEXT_ENTITIES {
            break;
        }
        out.push(*e);
    }
    out
}

/// Facts the corpus deems relevant to `query` before intersecting with the
/// candidate set (the query itself excluded).
pub fn corpus_relevant_facts(g: &KnowledgeGraph, corpus: &ResolvedCorpus, query: &Fact) -> BTreeSet<Fact> {
    let (s, t) = query.endpoints();
    let mut relevant = BTreeSet::new();
    let mut seen_pairs = HashSet::new();
    for sentence in corpus.sentences(s) {
        if !sentence.contains(&t) {
            continue;
        }
        let mut members = vec![s, t];
        members.extend(context_entities(sentence, s, t));
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                let (a, b) = (members[i].min(members[j]), members[i].max(members[j]));
                if a == b || !seen_pairs.insert((a, b)) {
                    continue;
                }
                let facts = direct_facts_between(g, a, b);
                if let [only] = facts[..] {
                    if only != *query {
                        relevant.insert(only);
                    }
                }
            }
        }
    }
    relevant
}

pub fn label_query_fact(
    g: &KnowledgeGraph,
    corpus: &ResolvedCorpus,
    query: &Fact,
    candidates: &CandidateSet,
) -> Labeling {
    let found = corpus_relevant_facts(g, corpus, query);
    let relevant: Vec<Fact> = candidates.candidates.iter().filter(|f| found.contains(f)).copied().collect();
    Labeling { outside_candidates: found.len() - relevant.len(), relevant }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Malformed(format!("unknown split `{other}`"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabeledInstance {
    pub query: Fact,
    pub candidate: Fact,
    pub label: u8,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub max_queries_per_relationship: usize,
    pub seed: u64,
    pub enumeration: EnumConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { max_queries_per_relationship: 2000, seed: 0, enumeration: EnumConfig::default() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RelationshipStats {
    pub query_facts_in_graph: usize,
    pub eligible: usize,
    pub sampled: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub query_facts: usize,
    pub candidates_avg: f64,
    pub candidates_median: f64,
    pub candidates_max: usize,
    pub candidates_min: usize,
    pub positives: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub relationships: BTreeMap<String, RelationshipStats>,
    pub splits: BTreeMap<String, SplitStats>,
    pub query_facts: usize,
    pub instances: usize,
    pub positives: usize,
    pub positive_rate: f64,
    pub relevant_outside_candidates: usize,
}

impl DatasetStats {
    pub fn from_instances(instances: &[LabeledInstance]) -> Self {
        let mut stats = DatasetStats::default();
        let groups = group_by_query(instances);
        for split in Split::ALL {
            let sizes: Vec<usize> =
                groups.iter().filter(|q| q.split == split).map(|q| q.items.len()).collect();
            let positives = groups
                .iter()
                .filter(|q| q.split == split)
                .map(|q| q.items.iter().filter(|(_, l)| *l > 0).count())
                .sum();
            stats.splits.insert(split.as_str().to_string(), split_stats(&sizes, positives));
        }
        stats.query_facts = groups.len();
        stats.instances = instances.len();
        stats.positives = instances.iter().filter(|i| i.label > 0).count();
        stats.positive_rate =
            if instances.is_empty() { 0.0 } else { stats.positives as f64 / instances.len() as f64 };
        stats
    }
}

fn split_stats(sizes: &[usize], positives: usize) -> SplitStats {
    if sizes.is_empty() {
        return SplitStats::default();
    }
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    };
    SplitStats {
        query_facts: n,
        candidates_avg: sorted.iter().sum::<usize>() as f64 / n as f64,
        candidates_median: median,
        candidates_max: sorted[n - 1],
        candidates_min: sorted[0],
        positives,
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub instances: Vec<LabeledInstance>,
    pub stats: DatasetStats,
}

/// Split sizes for `n` query facts: floor 70%, floor 10%, remainder.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 7 / 10;
    let validation = n / 10;
    (train, validation, n - train - validation)
}

struct LabeledQuery {
    query: Fact,
    candidates: CandidateSet,
    labeling: Labeling,
}

pub fn build_dataset(
    g: &KnowledgeGraph,
    corpus: &ResolvedCorpus,
    relationships: &[Relationship],
    cfg: &DatasetConfig,
) -> Result<Dataset> {
    if relationships.is_empty() {
        return Err(Error::EmptyRelationshipSet);
    }
    let mut rels: Vec<(String, &Relationship)> = relationships.iter().map(|r| (r.label(g), r)).collect();
    rels.sort_by(|a, b| a.0.cmp(&b.0));
    rels.dedup_by(|a, b| a.0 == b.0);

    let mut instances = Vec::new();
    let mut rel_stats = BTreeMap::new();
    let mut outside = 0;
    for (label, rel) in rels {
        let queries = facts_of_relationship(g, rel);
        let labeled: Vec<LabeledQuery> = queries
            .par_iter()
            .map(|q| {
                let candidates = enumerate_candidates(g, q, &cfg.enumeration)?;
                let labeling = label_query_fact(g, corpus, q, &candidates);
                Ok(LabeledQuery { query: *q, candidates, labeling })
            })
            .collect::<Result<_>>()?;
        let mut eligible: Vec<LabeledQuery> =
            labeled.into_iter().filter(|l| !l.labeling.relevant.is_empty()).collect();
        let n_eligible = eligible.len();

        let mut rng = substream(cfg.seed, &format!("dataset/{label}"));
        if eligible.len() > cfg.max_queries_per_relationship {
            let mut keep = index::sample(&mut rng, eligible.len(), cfg.max_queries_per_relationship).into_vec();
            keep.sort_unstable();
            let mut slots: Vec<Option<LabeledQuery>> = eligible.into_iter().map(Some).collect();
            eligible = keep.into_iter().map(|i| slots[i].take().expect("unique indices")).collect();
        }
        eligible.shuffle(&mut rng);
        let (n_train, n_val, n_test) = split_sizes(eligible.len());

        for (i, lq) in eligible.iter().enumerate() {
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
            outside += lq.labeling.outside_candidates;
            let relevant: HashSet<&Fact> = lq.labeling.relevant.iter().collect();
            for c in &lq.candidates.candidates {
                instances.push(LabeledInstance {
                    query: lq.query,
                    candidate: *c,
                    label: u8::from(relevant.contains(c)),
                    split,
                });
            }
        }
        rel_stats.insert(
            label,
            RelationshipStats {
                query_facts_in_graph: queries.len(),
                eligible: n_eligible,
                sampled: eligible.len(),
                train: n_train,
                validation: n_val,
                test: n_test,
            },
        );
    }
    let mut stats = DatasetStats::from_instances(&instances);
    stats.relationships = rel_stats;
    stats.relevant_outside_candidates = outside;
    Ok(Dataset { instances, stats })
}

/// One query fact with its labeled candidates, in file order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryGroup {
    pub query: Fact,
    pub split: Split,
    pub items: Vec<(Fact, u8)>,
}

impl QueryGroup {
    pub fn positives(&self) -> impl Iterator<Item = &Fact> + '_ {
        self.items.iter().filter(|(_, l)| *l > 0).map(|(f, _)| f)
    }

    pub fn negatives(&self) -> impl Iterator<Item = &Fact> + '_ {
        self.items.iter().filter(|(_, l)| *l == 0).map(|(f, _)| f)
    }
}

/// Group consecutive instances by query fact, keeping first-seen order.
pub fn group_by_query(instances: &[LabeledInstance]) -> Vec<QueryGroup> {
    let mut order: Vec<QueryGroup> = Vec::new();
    let mut pos: HashMap<Fact, usize> = HashMap::new();
    for inst in instances {
        let i = *pos.entry(inst.query).or_insert_with(|| {
            order.push(QueryGroup { query: inst.query, split: inst.split, items: Vec::new() });
            order.len() - 1
        });
        order[i].items.push((inst.candidate, inst.label));
    }
    order
}

pub fn dataset_to_tsv(g: &KnowledgeGraph, instances: &[LabeledInstance]) -> String {
    let mut out = String::new();
    for i in instances {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            i.split,
            i.label,
            i.query.serialize(g),
            i.candidate.serialize(g)
        ));
    }
    out
}

pub fn parse_dataset(g: &KnowledgeGraph, text: &str) -> Result<Vec<LabeledInstance>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let parse = || -> Result<LabeledInstance> {
            let mut fields = line.split('\t');
            let split = Split::parse(fields.next().unwrap_or_default())?;
            let label = match fields.next() {
                Some("0") => 0,
                Some("1") => 1,
                other => return Err(Error::Malformed(format!("bad label {other:?}"))),
            };
            let query = Fact::parse_fields(g, &mut fields)?;
            let candidate = Fact::parse_fields(g, &mut fields)?;
            if fields.next().is_some() {
                return Err(Error::Malformed("trailing fields".into()));
            }
            Ok(LabeledInstance { query, candidate, label, split })
        };
        out.push(parse().map_err(|e| Error::at_line("<dataset>", i + 1, e))?);
    }
    Ok(out)
}

pub fn read_dataset(g: &KnowledgeGraph, path: &Path) -> Result<Vec<LabeledInstance>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(g, &text).map_err(|e| match e {
        Error::AtLine { line, source, .. } => Error::AtLine { path: path.to_path_buf(), line, source },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::parse_graph_str;
    use crate::toy::{toy_kg, TOY_ENTITIES, TOY_TRIPLES};

    fn corpus(g: &KnowledgeGraph, source: &str, sentences: &[&[&str]]) -> ResolvedCorpus {
        let doc = Document {
            source_entity: source.into(),
            sentences: sentences.iter().map(|s| s.iter().map(|m| m.to_string()).collect()).collect(),
        };
        ResolvedCorpus::resolve(g, &Corpus { documents: vec![doc] })
    }

    fn labels(g: &KnowledgeGraph, c: &ResolvedCorpus, query: &str) -> Vec<String> {
        let q = Fact::parse(g, query).unwrap();
        let cands = enumerate_candidates(g, &q, &EnumConfig::default()).unwrap();
        label_query_fact(g, c, &q, &cands).relevant.iter().map(|f| f.serialize(g)).collect()
    }

    #[test]
    fn unique_connection_is_relevant() {
        let g = toy_kg();
        let c = corpus(&g, "BillGates", &[&["BillGates", "PaulAllen", "MSFT"]]);
        assert_eq!(labels(&g, &c, "founderOf\tBillGates\tMSFT"), ["founderOf\tPaulAllen\tMSFT"]);
    }

    #[test]
    fn ambiguous_pair_is_skipped() {
        let triples = format!("{TOY_TRIPLES}PaulAllen\tboardMemberOf\tMSFT\n");
        let g = parse_graph_str(&triples, TOY_ENTITIES).unwrap();
        let c = corpus(&g, "BillGates", &[&["BillGates", "PaulAllen", "MSFT"]]);
        assert!(labels(&g, &c, "founderOf\tBillGates\tMSFT").is_empty());
    }

    #[test]
    fn sentences_without_target_are_ignored() {
        let g = toy_kg();
        let c = corpus(&g, "BillGates", &[&["BillGates", "PaulAllen"], &["PaulAllen", "JenniferGates"]]);
        assert!(labels(&g, &c, "founderOf\tBillGates\tMSFT").is_empty());
    }

    #[test]
    fn only_source_document_is_read() {
        let g = toy_kg();
        let c = corpus(&g, "PaulAllen", &[&["PaulAllen", "MSFT"]]);
        assert!(labels(&g, &c, "founderOf\tBillGates\tMSFT").is_empty());
    }

    #[test]
    fn context_is_capped_in_mention_order() {
        let ids: Vec<EntityId> = (0..30).map(EntityId::from_index).collect();
        let (s, t) = (ids[0], ids[1]);
        let mut sentence = vec![t, ids[2], s, ids[2]];
        sentence.extend_from_slice(&ids[3..30]);
        let o = context_entities(&sentence, s, t);
        assert_eq!(o.len(), MAX_CONTEXT_ENTITIES);
        assert_eq!(o[..], ids[2..22]);
    }

    #[test]
    fn split_arithmetic() {
        assert_eq!(split_sizes(3), (2, 0, 1));
        assert_eq!(split_sizes(10), (7, 1, 2));
        assert_eq!(split_sizes(0), (0, 0, 0));
        assert_eq!(split_sizes(2000), (1400, 200, 400));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(split_stats(&[3, 1, 2], 0).candidates_median, 2.0);
        assert_eq!(split_stats(&[4, 1, 2, 3], 0).candidates_median, 2.5);
    }

    #[test]
    fn dataset_file_round_trip() {
        let g = toy_kg();
        let c = corpus(&g, "BillGates", &[&["BillGates", "PaulAllen", "MSFT"]]);
        let rel = Relationship::parse(&g, "founderOf").unwrap();
        let ds = build_dataset(&g, &c, &[rel], &DatasetConfig::default()).unwrap();
        assert_eq!(ds.stats.query_facts, 1);
        assert_eq!(ds.stats.positives, 1);
        let text = dataset_to_tsv(&g, &ds.instances);
        assert_eq!(parse_dataset(&g, &text).unwrap(), ds.instances);
    }

    #[test]
    fn empty_relationship_set_is_an_error() {
        let g = toy_kg();
        let c = ResolvedCorpus::default();
        assert!(matches!(
            build_dataset(&g, &c, &[], &DatasetConfig::default()),
            Err(Error::EmptyRelationshipSet)
        ));
    }

    #[test]
    fn unknown_mentions_are_counted() {
        let g = toy_kg();
        let c = corpus(&g, "BillGates", &[&["Nobody", "MSFT"]]);
        assert_eq!(c.unknown_mentions, 1);
        let c = corpus(&g, "Ghost", &[&["MSFT"]]);
        assert_eq!(c.unknown_sources, 1);
    }
}
