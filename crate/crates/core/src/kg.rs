//! Immutable knowledge graph with subject, object and predicate indices.
//!
//! Entities, predicates and types are interned into dense integer handles;
//! the string identifier stays the canonical external identity. Every index
//! lists triples in the order they were loaded, so iteration is reproducible.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use indexmap::IndexSet;

use crate::error::{Error, Result};

/// Reserved type carried by every CVT entity.
pub const CVT_TYPE: &str = "__CVT__";
/// Reserved type carried by every date entity.
pub const DATE_TYPE: &str = "__DATE__";
/// Placeholder type for entities without any type, used at embedding time.
pub const UNKNOWN_TYPE: &str = "__UNK__";

macro_rules! handle {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(u32);

        impl $name {
            pub fn from_index(index: usize) -> Self {
                Self(index as u32)
            }

            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

handle!(
    /// Interned entity handle.
    EntityId
);
handle!(
    /// Interned predicate handle.
    PredicateId
);
handle!(
    /// Interned entity-type handle.
    TypeId
);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Regular,
    Cvt,
    Date,
    ClassOrType,
}

impl EntityKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "regular" => Ok(EntityKind::Regular),
            "cvt" => Ok(EntityKind::Cvt),
            "date" => Ok(EntityKind::Date),
            "class" => Ok(EntityKind::ClassOrType),
            other => Err(Error::Malformed(format!("unknown entity kind `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Regular => "regular",
            EntityKind::Cvt => "cvt",
            EntityKind::Date => "date",
            EntityKind::ClassOrType => "class",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: EntityId,
    pub predicate: PredicateId,
    pub object: EntityId,
}

impl Triple {
    pub fn new(subject: EntityId, predicate: PredicateId, object: EntityId) -> Self {
        Self { subject, predicate, object }
    }
}

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: IndexSet<String>,
    predicates: IndexSet<String>,
    types: IndexSet<String>,
    kinds: Vec<EntityKind>,
    entity_types: Vec<Vec<TypeId>>,
    type_freq: Vec<usize>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    out_index: Vec<Vec<Triple>>,
    in_index: Vec<Vec<Triple>>,
    pred_index: Vec<Vec<Triple>>,
}

impl KnowledgeGraph {
    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_predicates(&self) -> usize {
        self.predicates.len()
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    pub fn entity(&self, name: &str) -> Option<EntityId> {
        self.entities.get_index_of(name).map(EntityId::from_index)
    }

    pub fn predicate(&self, name: &str) -> Option<PredicateId> {
        self.predicates.get_index_of(name).map(PredicateId::from_index)
    }

    pub fn type_id(&self, name: &str) -> Option<TypeId> {
        self.types.get_index_of(name).map(TypeId::from_index)
    }

    pub fn entity_name(&self, e: EntityId) -> &str {
        &self.entities[e.index()]
    }

    pub fn predicate_name(&self, p: PredicateId) -> &str {
        &self.predicates[p.index()]
    }

    pub fn type_name(&self, z: TypeId) -> &str {
        &self.types[z.index()]
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entities.len()).map(EntityId::from_index)
    }

    pub fn predicate_ids(&self) -> impl Iterator<Item = PredicateId> + '_ {
        (0..self.predicates.len()).map(PredicateId::from_index)
    }

    pub fn type_names(&self) -> impl Iterator<Item = &str> + '_ {
        self.types.iter().map(String::as_str)
    }

    pub fn kind(&self, e: EntityId) -> EntityKind {
        self.kinds[e.index()]
    }

    pub fn is_cvt(&self, e: EntityId) -> bool {
        self.kind(e) == EntityKind::Cvt
    }

    pub fn is_date(&self, e: EntityId) -> bool {
        self.kind(e) == EntityKind::Date
    }

    pub fn is_class(&self, e: EntityId) -> bool {
        self.kind(e) == EntityKind::ClassOrType
    }

    /// Triples whose predicate is `p`; empty for a handle outside this graph.
    pub fn triples_pred(&self, p: PredicateId) -> &[Triple] {
        self.pred_index.get(p.index()).map_or(&[], Vec::as_slice)
    }

    pub fn triples_subj(&self, e: EntityId) -> &[Triple] {
        self.out_index.get(e.index()).map_or(&[], Vec::as_slice)
    }

    pub fn triples_obj(&self, e: EntityId) -> &[Triple] {
        self.in_index.get(e.index()).map_or(&[], Vec::as_slice)
    }

    /// Triples mentioning `e` in either position. A self-loop is reported once.
    pub fn triples_ent(&self, e: EntityId) -> Vec<Triple> {
        let mut out: Vec<Triple> = self.triples_subj(e).to_vec();
        out.extend(self.triples_obj(e).iter().filter(|t| t.subject != e));
        out
    }

    /// Number of triples mentioning `e`, without materializing them.
    pub fn degree(&self, e: EntityId) -> usize {
        let loops = self.triples_subj(e).iter().filter(|t| t.object == e).count();
        self.triples_subj(e).len() + self.triples_obj(e).len() - loops
    }

    /// Declared types plus the reserved CVT/date type, in declaration order.
    pub fn entity_types(&self, e: EntityId) -> &[TypeId] {
        self.entity_types.get(e.index()).map_or(&[], Vec::as_slice)
    }

    /// Number of entities that carry type `z`.
    pub fn type_freq(&self, z: TypeId) -> usize {
        self.type_freq.get(z.index()).copied().unwrap_or(0)
    }

    /// The `k` most frequent types of `e`, ties broken by ascending type name.
    pub fn top_k_types(&self, e: EntityId, k: usize) -> Vec<TypeId> {
        let mut types = self.entity_types(e).to_vec();
        types.sort_by(|a, b| {
            self.type_freq(*b)
                .cmp(&self.type_freq(*a))
                .then_with(|| self.type_name(*a).cmp(self.type_name(*b)))
        });
        types.truncate(k);
        types
    }

    /// Entities adjacent to `e` through any triple, in index order, without repeats.
    pub fn neighbors(&self, e: EntityId) -> Vec<EntityId> {
        let mut seen = HashSet::new();
        self.triples_subj(e)
            .iter()
            .map(|t| t.object)
            .chain(self.triples_obj(e).iter().map(|t| t.subject))
            .filter(|n| *n != e && seen.insert(*n))
            .collect()
    }

    pub fn triple_label(&self, t: &Triple) -> String {
        format!(
            "<{}, {}, {}>",
            self.entity_name(t.subject),
            self.predicate_name(t.predicate),
            self.entity_name(t.object)
        )
    }
}

/// Incremental constructor; the graph is frozen by [`GraphBuilder::build`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    entities: IndexSet<String>,
    predicates: IndexSet<String>,
    types: IndexSet<String>,
    kinds: Vec<EntityKind>,
    entity_types: Vec<Vec<TypeId>>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_entity(&mut self, id: &str, kind: EntityKind, types: &[&str]) -> Result<EntityId> {
        if id.is_empty() {
            return Err(Error::Malformed("empty entity id".into()));
        }
        let (index, fresh) = self.entities.insert_full(id.to_string());
        if !fresh {
            return Err(Error::DuplicateEntity(id.to_string()));
        }
        let mut ids: Vec<TypeId> = Vec::with_capacity(types.len() + 1);
        let reserved = match kind {
            EntityKind::Cvt => Some(CVT_TYPE),
            EntityKind::Date => Some(DATE_TYPE),
            _ => None,
        };
        for name in types.iter().copied().chain(reserved) {
            if name.is_empty() {
                continue;
            }
            let z = TypeId::from_index(self.types.insert_full(name.to_string()).0);
            if !ids.contains(&z) {
                ids.push(z);
            }
        }
        self.kinds.push(kind);
        self.entity_types.push(ids);
        Ok(EntityId::from_index(index))
    }

    pub fn entity(&self, id: &str) -> Option<EntityId> {
        self.entities.get_index_of(id).map(EntityId::from_index)
    }

    pub fn add_triple(&mut self, subject: &str, predicate: &str, object: &str) -> Result<Triple> {
        let s = self.entity(subject).ok_or_else(|| Error::UnknownEntity(subject.to_string()))?;
        let o = self.entity(object).ok_or_else(|| Error::UnknownEntity(object.to_string()))?;
        if predicate.is_empty() {
            return Err(Error::Malformed("empty predicate".into()));
        }
        let p = match self.predicates.get_index_of(predicate) {
            Some(i) => PredicateId::from_index(i),
            None => PredicateId::from_index(self.predicates.insert_full(predicate.to_string()).0),
        };
        let t = Triple::new(s, p, o);
        if !self.triple_set.insert(t) {
            return Err(Error::DuplicateTriple(
                subject.to_string(),
                predicate.to_string(),
                object.to_string(),
            ));
        }
        self.triples.push(t);
        Ok(t)
    }

    pub fn build(self) -> KnowledgeGraph {
        let n = self.entities.len();
        let mut out_index = vec![Vec::new(); n];
        let mut in_index = vec![Vec::new(); n];
        let mut pred_index = vec![Vec::new(); self.predicates.len()];
        for t in &self.triples {
            out_index[t.subject.index()].push(*t);
            in_index[t.object.index()].push(*t);
            pred_index[t.predicate.index()].push(*t);
        }
        let mut type_freq = vec![0usize; self.types.len()];
        for ts in &self.entity_types {
            for z in ts {
                type_freq[z.index()] += 1;
            }
        }
        KnowledgeGraph {
            entities: self.entities,
            predicates: self.predicates,
            types: self.types,
            kinds: self.kinds,
            entity_types: self.entity_types,
            type_freq,
            triples: self.triples,
            triple_set: self.triple_set,
            out_index,
            in_index,
            pred_index,
        }
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

/// Load a graph from a triples TSV and an entities TSV.
pub fn load_graph(triples_path: &Path, entities_path: &Path) -> Result<KnowledgeGraph> {
    let entities = fs::read_to_string(entities_path).map_err(|e| Error::io(entities_path, e))?;
    let triples = fs::read_to_string(triples_path).map_err(|e| Error::io(triples_path, e))?;
    parse_graph(&triples, &entities)
        .map_err(|(which, line, err)| match which {
            Source::Entities => Error::at_line(entities_path, line, err),
            Source::Triples => Error::at_line(triples_path, line, err),
        })
}

enum Source {
    Entities,
    Triples,
}

fn parse_graph(
    triples: &str,
    entities: &str,
) -> std::result::Result<KnowledgeGraph, (Source, usize, Error)> {
    let mut b = GraphBuilder::new();
    for (line, text) in data_lines(entities) {
        let fields: Vec<&str> = text.split('\t').collect();
        let wrap = |e| (Source::Entities, line, e);
        if !(2..=3).contains(&fields.len()) {
            return Err(wrap(Error::Malformed(format!(
                "expected `id<TAB>kind<TAB>types`, got {} fields",
                fields.len()
            ))));
        }
        let kind = EntityKind::parse(fields[1]).map_err(wrap)?;
        let types: Vec<&str> = fields
            .get(2)
            .map(|f| f.split(',').map(str::trim).filter(|s| !s.is_empty()).collect())
            .unwrap_or_default();
        b.add_entity(fields[0], kind, &types).map_err(wrap)?;
    }
    for (line, text) in data_lines(triples) {
        let fields: Vec<&str> = text.split('\t').collect();
        let wrap = |e| (Source::Triples, line, e);
        if fields.len() != 3 {
            return Err(wrap(Error::Malformed(format!(
                "expected `subject<TAB>predicate<TAB>object`, got {} fields",
                fields.len()
            ))));
        }
        b.add_triple(fields[0], fields[1], fields[2]).map_err(wrap)?;
    }
    Ok(b.build())
}

/// Parse a graph from in-memory TSV text (same formats as [`load_graph`]).
pub fn parse_graph_str(triples: &str, entities: &str) -> Result<KnowledgeGraph> {
    parse_graph(triples, entities).map_err(|(which, line, err)| {
        let name = match which {
            Source::Entities => "<entities>",
            Source::Triples => "<triples>",
        };
        Error::at_line(name, line, err)
    })
}

/// Write a graph back out as `(triples, entities)` TSV text.
pub fn to_tsv(g: &KnowledgeGraph) -> (String, String) {
    let mut triples = String::new();
    for t in g.triples() {
        triples.push_str(&format!(
            "{}\t{}\t{}\n",
            g.entity_name(t.subject),
            g.predicate_name(t.predicate),
            g.entity_name(t.object)
        ));
    }
    let mut entities = String::new();
    for e in g.entity_ids() {
        let declared: Vec<&str> = g
            .entity_types(e)
            .iter()
            .map(|z| g.type_name(*z))
            .filter(|n| *n != CVT_TYPE && *n != DATE_TYPE)
            .collect();
        entities.push_str(&format!("{}\t{}\t{}\n", g.entity_name(e), g.kind(e), declared.join(",")));
    }
    (triples, entities)
}
