//! Hand-crafted features for a (query fact, candidate fact) pair.
//!
//! Layout (33 scalars followed by a one-hot over the relationship vocabulary):
//!
//! | group | slots |
//! |-------|-------|
//! | importance (14) | predicate frequency min/max/avg and entity frequency min/max/avg for query and candidate, informativeness of both |
//! | relevance (11) | type similarity, entity distance and predicate co-occurrence similarity min/max/avg over cross pairs, predicate-set Jaccard, shared CVT |
//! | misc (8 + R) | has-CVT for both, is-date of subject/tail/attribute-object for both, query relationship one-hot |
//!
//! CVT entities are left out of entity frequency, type similarity and
//! distance pairs; they still count as nodes when measuring distance.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fact::{take_fact_string, Fact, Relationship};
use crate::kg::{EntityId, KnowledgeGraph, PredicateId};

pub const BASE_FEATURES: usize = 33;
pub const DEFAULT_MAX_DISTANCE: u32 = 4;

fn require_triples(g: &KnowledgeGraph) -> Result<f64> {
    match g.num_triples() {
        0 => Err(Error::EmptyGraph),
        n => Ok(n as f64),
    }
}

pub fn pred_freq(g: &KnowledgeGraph, p: PredicateId) -> Result<f64> {
    Ok(g.triples_pred(p).len() as f64 / require_triples(g)?)
}

pub fn ent_freq(g: &KnowledgeGraph, e: EntityId) -> Result<f64> {
    let n = require_triples(g)?;
    if e.index() >= g.num_entities() {
        return Ok(0.0);
    }
    Ok(g.degree(e) as f64 / n)
}

/// Inverse triple frequency `ln(NumTriples / |TriplesPred(p)|)`; 0 for a
/// predicate with no triples.
pub fn itf(g: &KnowledgeGraph, p: PredicateId) -> Result<f64> {
    let n = require_triples(g)?;
    let count = g.triples_pred(p).len();
    Ok(if count == 0 { 0.0 } else { (n / count as f64).ln() })
}

pub fn pf_out(g: &KnowledgeGraph, p: PredicateId, e: EntityId) -> f64 {
    let out = g.triples_subj(e);
    if out.is_empty() {
        return 0.0;
    }
    out.iter().filter(|t| t.predicate == p).count() as f64 / out.len() as f64
}

pub fn pf_in(g: &KnowledgeGraph, p: PredicateId, e: EntityId) -> f64 {
    let inc = g.triples_obj(e);
    if inc.is_empty() {
        return 0.0;
    }
    inc.iter().filter(|t| t.predicate == p).count() as f64 / inc.len() as f64
}

/// Path informativeness: the mean over triple ends of PF·ITF.
pub fn informativeness(g: &KnowledgeGraph, f: &Fact) -> Result<f64> {
    let mut total = 0.0;
    for t in f.triples() {
        let w = itf(g, t.predicate)?;
        total += pf_out(g, t.predicate, t.subject) * w + pf_in(g, t.predicate, t.object) * w;
    }
    Ok(total / (2 * f.triple_count()) as f64)
}

fn jaccard_sorted<T: Ord>(a: &[T], b: &[T]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn sorted_unique<T: Ord + Copy>(items: impl IntoIterator<Item = T>) -> Vec<T> {
    let mut v: Vec<T> = items.into_iter().collect();
    v.sort_unstable();
    v.dedup();
    v
}

pub fn ent_type_sim(g: &KnowledgeGraph, e1: EntityId, e2: EntityId) -> f64 {
    jaccard_sorted(&sorted_unique(g.entity_types(e1).iter().copied()), &sorted_unique(g.entity_types(e2).iter().copied()))
}

/// Undirected BFS distances from `from`, up to `d_max` hops.
pub fn distances_from(g: &KnowledgeGraph, from: EntityId, d_max: u32) -> HashMap<EntityId, u32> {
    let mut dist = HashMap::from([(from, 0u32)]);
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        if d == d_max {
            continue;
        }
        for n in g.neighbors(u) {
            if let std::collections::hash_map::Entry::Vacant(slot) = dist.entry(n) {
                slot.insert(d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Shortest-path length over the undirected graph; anything beyond `d_max`
/// (including unreachable) is `d_max + 1`.
pub fn entity_distance(g: &KnowledgeGraph, e1: EntityId, e2: EntityId, d_max: u32) -> u32 {
    distances_from(g, e1, d_max).get(&e2).copied().unwrap_or(d_max + 1)
}

fn pred_entities(g: &KnowledgeGraph, p: PredicateId) -> Vec<EntityId> {
    sorted_unique(g.triples_pred(p).iter().flat_map(|t| [t.subject, t.object]))
}

pub fn pred_coocc_sim(g: &KnowledgeGraph, p1: PredicateId, p2: PredicateId) -> f64 {
    jaccard_sorted(&pred_entities(g, p1), &pred_entities(g, p2))
}

pub fn pred_set_jaccard(fq: &Fact, fc: &Fact) -> f64 {
    let a: Vec<_> = fq.predicate_set().into_iter().collect();
    let b: Vec<_> = fc.predicate_set().into_iter().collect();
    jaccard_sorted(&a, &b)
}

/// Whether two facts hang off the same CVT entity.
pub fn shares_cvt(g: &KnowledgeGraph, fq: &Fact, fc: &Fact) -> bool {
    matches!((fq.cvt(g), fc.cvt(g)), (Some(a), Some(b)) if a == b)
}

/// Graph-wide counts every feature formula divides by, computed once.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphStats {
    pub num_triples: usize,
    pub pred_count: Vec<usize>,
    pub pred_entities: Vec<Vec<EntityId>>,
    pub subj_count: Vec<usize>,
    pub obj_count: Vec<usize>,
}

impl GraphStats {
    pub fn new(g: &KnowledgeGraph) -> Self {
        GraphStats {
            num_triples: g.num_triples(),
            pred_count: g.predicate_ids().map(|p| g.triples_pred(p).len()).collect(),
            pred_entities: g.predicate_ids().map(|p| pred_entities(g, p)).collect(),
            subj_count: g.entity_ids().map(|e| g.triples_subj(e).len()).collect(),
            obj_count: g.entity_ids().map(|e| g.triples_obj(e).len()).collect(),
        }
    }

    pub fn pred_coocc_sim(&self, p1: PredicateId, p2: PredicateId) -> f64 {
        match (self.pred_entities.get(p1.index()), self.pred_entities.get(p2.index())) {
            (Some(a), Some(b)) => jaccard_sorted(a, b),
            _ => 0.0,
        }
    }
}

/// Relationship labels seen on training queries; index = one-hot position.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelVocab {
    labels: Vec<String>,
}

impl RelVocab {
    pub fn new(labels: impl IntoIterator<Item = String>) -> Self {
        let mut labels: Vec<String> = labels.into_iter().collect();
        labels.sort();
        labels.dedup();
        RelVocab { labels }
    }

    pub fn fit<'a>(g: &KnowledgeGraph, queries: impl IntoIterator<Item = &'a Fact>) -> Self {
        Self::new(queries.into_iter().map(|f| f.relationship().label(g)))
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub length: usize,
    pub slots: Vec<Slot>,
    pub relationships: Vec<String>,
}

const SCALAR_SLOTS: [&str; BASE_FEATURES] = [
    "pred_freq_q_min",
    "pred_freq_q_max",
    "pred_freq_q_avg",
    "pred_freq_c_min",
    "pred_freq_c_max",
    "pred_freq_c_avg",
    "ent_freq_q_min",
    "ent_freq_q_max",
    "ent_freq_q_avg",
    "ent_freq_c_min",
    "ent_freq_c_max",
    "ent_freq_c_avg",
    "informativeness_q",
    "informativeness_c",
    "ent_type_sim_min",
    "ent_type_sim_max",
    "ent_type_sim_avg",
    "entity_distance_min",
    "entity_distance_max",
    "entity_distance_avg",
    "pred_coocc_sim_min",
    "pred_coocc_sim_max",
    "pred_coocc_sim_avg",
    "pred_set_jaccard",
    "shares_cvt",
    "has_cvt_q",
    "has_cvt_c",
    "is_date_q_subject",
    "is_date_q_tail",
    "is_date_q_attribute",
    "is_date_c_subject",
    "is_date_c_tail",
    "is_date_c_attribute",
];

impl FeatureLayout {
    pub fn new(vocab: &RelVocab) -> Self {
        let mut slots: Vec<Slot> =
            SCALAR_SLOTS.iter().enumerate().map(|(i, n)| Slot { name: n.to_string(), start: i, len: 1 }).collect();
        slots.push(Slot { name: "query_relationship".into(), start: BASE_FEATURES, len: vocab.len() });
        FeatureLayout { length: BASE_FEATURES + vocab.len(), slots, relationships: vocab.labels().to_vec() }
    }

    pub fn slot(&self, name: &str) -> Option<&Slot> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.slot(name).map(|s| s.start)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-query precomputation: BFS distances from the query's non-CVT entities.
#[derive(Clone, Debug)]
pub struct QueryContext {
    pub query: Fact,
    distances: Vec<(EntityId, HashMap<EntityId, u32>)>,
}

fn non_cvt(g: &KnowledgeGraph, f: &Fact) -> Vec<EntityId> {
    f.entities().into_iter().filter(|e| !g.is_cvt(*e)).collect()
}

fn min_max_avg(values: impl IntoIterator<Item = f64>) -> [f64; 3] {
    let (mut lo, mut hi, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
        n += 1;
    }
    if n == 0 {
        return [0.0; 3];
    }
    [lo, hi, (sum / n as f64).clamp(lo, hi)]
}

pub struct FeatureExtractor<'g> {
    g: &'g KnowledgeGraph,
    stats: GraphStats,
    vocab: RelVocab,
    layout: FeatureLayout,
    d_max: u32,
}

impl<'g> FeatureExtractor<'g> {
    pub fn new(g: &'g KnowledgeGraph, vocab: RelVocab) -> Result<Self> {
        Self::with_max_distance(g, vocab, DEFAULT_MAX_DISTANCE)
    }

    pub fn with_max_distance(g: &'g KnowledgeGraph, vocab: RelVocab, d_max: u32) -> Result<Self> {
        require_triples(g)?;
        let layout = FeatureLayout::new(&vocab);
        Ok(FeatureExtractor { g, stats: GraphStats::new(g), vocab, layout, d_max })
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn vocab(&self) -> &RelVocab {
        &self.vocab
    }

    pub fn stats(&self) -> &GraphStats {
        &self.stats
    }

    pub fn query_context(&self, query: &Fact) -> QueryContext {
        let distances =
            non_cvt(self.g, query).into_iter().map(|e| (e, distances_from(self.g, e, self.d_max))).collect();
        QueryContext { query: *query, distances }
    }

    pub fn extract_pair(&self, query: &Fact, candidate: &Fact) -> FeatureVector {
        self.extract(&self.query_context(query), candidate)
    }

    pub fn extract(&self, ctx: &QueryContext, fc: &Fact) -> FeatureVector {
        let g = self.g;
        let fq = &ctx.query;
        let n = self.stats.num_triples as f64;
        let mut v = Vec::with_capacity(self.layout.length);

        for f in [fq, fc] {
            v.extend(min_max_avg(f.predicate_set().into_iter().map(|p| self.stats.pred_count[p.index()] as f64 / n)));
        }
        for f in [fq, fc] {
            v.extend(min_max_avg(non_cvt(g, f).into_iter().map(|e| g.degree(e) as f64 / n)));
        }
        for f in [fq, fc] {
            v.push(informativeness(g, f).expect("graph checked non-empty"));
        }

        let q_ents = non_cvt(g, fq);
        let c_ents = non_cvt(g, fc);
        v.extend(min_max_avg(
            q_ents.iter().flat_map(|a| c_ents.iter().map(move |b| (a, b))).map(|(a, b)| ent_type_sim(g, *a, *b)),
        ));
        v.extend(min_max_avg(ctx.distances.iter().flat_map(|(_, dist)| {
            c_ents.iter().map(|b| f64::from(dist.get(b).copied().unwrap_or(self.d_max + 1)))
        })));
        let q_preds = fq.predicate_set();
        let c_preds = fc.predicate_set();
        v.extend(min_max_avg(
            q_preds.iter().flat_map(|a| c_preds.iter().map(move |b| (a, b))).map(|(a, b)| self.stats.pred_coocc_sim(*a, *b)),
        ));
        v.push(pred_set_jaccard(fq, fc));
        v.push(f64::from(u8::from(shares_cvt(g, fq, fc))));

        v.push(f64::from(u8::from(fq.is_compound())));
        v.push(f64::from(u8::from(fc.is_compound())));
        for f in [fq, fc] {
            v.extend(date_slots(g, f));
        }

        let mut onehot = vec![0.0; self.vocab.len()];
        if let Some(i) = self.vocab.position(&fq.relationship().label(g)) {
            onehot[i] = 1.0;
        }
        v.extend(onehot);
        debug_assert_eq!(v.len(), self.layout.length);
        FeatureVector { values: v }
    }
}

/// Is-date flags for the subject, the tail and the attribute object of a fact.
/// The attribute object of a compound fact is any date hanging off its CVT
/// through another triple; of an attribute fact, its own object.
pub fn date_slots(g: &KnowledgeGraph, f: &Fact) -> [f64; 3] {
    let flag = |b: bool| f64::from(u8::from(b));
    let attribute = match f {
        Fact::Compound([_, leg]) => g
            .triples_subj(leg.subject)
            .iter()
            .any(|t| t != leg && g.is_date(t.object)),
        Fact::Single(t) => g.is_cvt(t.subject) && g.is_date(t.object),
    };
    [flag(g.is_date(f.source())), flag(g.is_date(f.target())), flag(attribute)]
}

pub fn layout_to_json(layout: &FeatureLayout) -> String {
    serde_json::to_string_pretty(layout).expect("layout serializes") + "\n"
}

/// Feature rows keyed by serialized (query, candidate).
pub type FeatureTable = HashMap<(String, String), Vec<f64>>;

pub fn feature_row(query: &str, candidate: &str, v: &FeatureVector) -> String {
    let mut line = format!("{query}\t{candidate}");
    for x in &v.values {
        line.push('\t');
        line.push_str(&x.to_string());
    }
    line.push('\n');
    line
}

pub fn parse_feature_table(text: &str, expected_len: usize) -> Result<FeatureTable> {
    let mut table = FeatureTable::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let parse = || -> Result<((String, String), Vec<f64>)> {
            let mut fields = line.split('\t');
            let q = take_fact_string(&mut fields)?;
            let c = take_fact_string(&mut fields)?;
            let values = fields
                .map(|f| f.parse::<f64>().map_err(|e| Error::Malformed(format!("feature value `{f}`: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != expected_len {
                return Err(Error::DimensionMismatch(format!(
                    "feature row has {} values, layout has {expected_len}",
                    values.len()
                )));
            }
            Ok(((q, c), values))
        };
        let (key, values) = parse().map_err(|e| Error::at_line("<features>", i + 1, e))?;
        table.insert(key, values);
    }
    Ok(table)
}

pub fn read_layout(path: &Path) -> Result<FeatureLayout> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_feature_table(path: &Path, layout: &FeatureLayout) -> Result<FeatureTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_feature_table(&text, layout.length).map_err(|e| match e {
        Error::AtLine { line, source, .. } => Error::AtLine { path: path.to_path_buf(), line, source },
        other => other,
    })
}

/// Relationship of a fact, as a vocabulary label.
pub fn relationship_label(g: &KnowledgeGraph, rel: &Relationship) -> String {
    rel.label(g)
}
