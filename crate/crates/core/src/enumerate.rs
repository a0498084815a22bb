//! Candidate fact enumeration around a query fact, and the connecting-path
//! enumeration consumed by the path encoder.
//!
//! Hop distances are measured with CVT entities free: stepping into a CVT
//! costs nothing, stepping into any other entity costs one hop. Entities of
//! kind class/type are reached but never expanded further, except when they
//! are an endpoint of the query itself.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fact::{sort_facts, Fact, Path, PathStep};
use crate::kg::{EntityId, KnowledgeGraph};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnumConfig {
    /// Truncate the candidate list after sorting; 0 keeps everything.
    pub max_candidates: usize,
    /// Paths kept per (origin, destination) pair; 0 keeps everything.
    pub max_paths_per_pair: usize,
}

impl Default for EnumConfig {
    fn default() -> Self {
        Self { max_candidates: 0, max_paths_per_pair: 25 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateSet {
    pub query: Fact,
    pub candidates: Vec<Fact>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn contains(&self, f: &Fact) -> bool {
        self.candidates.contains(f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathSet {
    pub origin: EntityId,
    pub paths: Vec<Path>,
}

/// Every fact that has `e` among its entities: facts with `e` as an endpoint,
/// and for a CVT the compound facts through it plus its attribute facts.
pub fn facts_containing(g: &KnowledgeGraph, e: EntityId) -> Vec<Fact> {
    let mut out = Vec::new();
    if g.is_cvt(e) {
        for u in g.triples_subj(e) {
            if g.is_cvt(u.object) {
                continue;
            }
            out.push(Fact::Single(*u));
            for v in g.triples_obj(e) {
                if !g.is_cvt(v.subject) {
                    out.push(Fact::Compound([*v, *u]));
                }
            }
        }
        return out;
    }
    for t in g.triples_subj(e) {
        if !g.is_cvt(t.object) {
            out.push(Fact::Single(*t));
        } else {
            out.extend(
                g.triples_subj(t.object)
                    .iter()
                    .filter(|u| !g.is_cvt(u.object))
                    .map(|u| Fact::Compound([*t, *u])),
            );
        }
    }
    for t in g.triples_obj(e) {
        if t.subject != e {
            out.push(Fact::Single(*t));
        }
        if g.is_cvt(t.subject) {
            out.extend(
                g.triples_obj(t.subject)
                    .iter()
                    .filter(|v| !g.is_cvt(v.subject))
                    .map(|v| Fact::Compound([*v, *t])),
            );
        }
    }
    out
}

/// Entities whose incident facts become candidates: the query endpoints plus
/// every non-class entity within one hop of either (CVTs free).
pub fn expansion_frontier(g: &KnowledgeGraph, s: EntityId, t: EntityId) -> BTreeSet<EntityId> {
    let mut dist: HashMap<EntityId, u32> = HashMap::new();
    let mut queue = VecDeque::new();
    for e in [s, t] {
        dist.insert(e, 0);
        queue.push_back((e, 0u32));
    }
    while let Some((u, d)) = queue.pop_front() {
        if dist.get(&u).is_some_and(|best| *best < d) {
            continue;
        }
        if u != s && u != t && g.is_class(u) {
            continue;
        }
        for n in g.neighbors(u) {
            let step = u32::from(!g.is_cvt(n));
            let nd = d + step;
            if nd > 1 || dist.get(&n).is_some_and(|best| *best <= nd) {
                continue;
            }
            dist.insert(n, nd);
            if step == 0 {
                queue.push_front((n, nd));
            } else {
                queue.push_back((n, nd));
            }
        }
    }
    dist.into_iter()
        .filter(|(e, _)| *e == s || *e == t || !g.is_class(*e))
        .map(|(e, _)| e)
        .collect()
}

/// Facts within two hops of the query's endpoints, excluding the query
/// itself, sorted by (relationship label, source, target).
pub fn enumerate_candidates(g: &KnowledgeGraph, query: &Fact, cfg: &EnumConfig) -> Result<CandidateSet> {
    if let Some(t) = query.triples().iter().find(|t| !g.contains(t)) {
        return Err(Error::FactNotInGraph(g.triple_label(t)));
    }
    let (s, t) = query.endpoints();
    let mut seen = HashSet::new();
    let mut candidates: Vec<Fact> = expansion_frontier(g, s, t)
        .into_iter()
        .flat_map(|x| facts_containing(g, x))
        .filter(|f| f != query && seen.insert(*f))
        .collect();
    sort_facts(g, &mut candidates);
    if cfg.max_candidates > 0 {
        candidates.truncate(cfg.max_candidates);
    }
    Ok(CandidateSet { query: *query, candidates })
}

fn path_order(p: &Path) -> (usize, &[PathStep], EntityId) {
    (p.steps().len(), p.steps(), p.end())
}

/// All simple paths of at most two hops (CVTs free) leaving `origin`, grouped
/// by the entity they end at. Each group holds the shortest paths first,
/// then lexicographic by step handles, capped at `max_paths_per_pair`.
pub fn paths_from(g: &KnowledgeGraph, origin: EntityId, cfg: &EnumConfig) -> BTreeMap<EntityId, Vec<Path>> {
    let mut groups: BTreeMap<EntityId, Vec<Path>> = BTreeMap::new();
    let mut steps = Vec::new();
    let mut on_path = HashSet::from([origin]);
    walk(g, origin, 0, &mut steps, &mut on_path, &mut groups);
    for paths in groups.values_mut() {
        paths.sort_by(|a, b| path_order(a).cmp(&path_order(b)));
        if cfg.max_paths_per_pair > 0 {
            paths.truncate(cfg.max_paths_per_pair);
        }
    }
    groups
}

fn walk(
    g: &KnowledgeGraph,
    at: EntityId,
    hops: u32,
    steps: &mut Vec<PathStep>,
    on_path: &mut HashSet<EntityId>,
    groups: &mut BTreeMap<EntityId, Vec<Path>>,
) {
    let forward = g.triples_subj(at).iter().map(|t| (t.predicate, t.object, false));
    let backward = g.triples_obj(at).iter().map(|t| (t.predicate, t.subject, true));
    for (predicate, next, inverse) in forward.chain(backward) {
        if on_path.contains(&next) {
            continue;
        }
        let cost = hops + u32::from(!g.is_cvt(next));
        if cost > 2 {
            continue;
        }
        steps.push(PathStep { entity: at, predicate, inverse });
        groups.entry(next).or_default().push(Path::from_parts(steps.clone(), next));
        on_path.insert(next);
        walk(g, next, cost, steps, on_path, groups);
        on_path.remove(&next);
        steps.pop();
    }
}

/// Paths from `origin` to each of `destinations`; the origin itself is
/// never a destination.
pub fn connecting_paths(
    g: &KnowledgeGraph,
    origin: EntityId,
    destinations: &BTreeSet<EntityId>,
    cfg: &EnumConfig,
) -> PathSet {
    let groups = paths_from(g, origin, cfg);
    let paths = destinations
        .iter()
        .filter(|d| **d != origin)
        .filter_map(|d| groups.get(d))
        .flatten()
        .cloned()
        .collect();
    PathSet { origin, paths }
}
