//! Facts (one triple, or two triples through a CVT entity), relationship
//! labels and general KG paths.

use std::collections::BTreeSet;

use arrayvec::ArrayVec;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, PredicateId, Triple};

/// Predicate sequence shared by all facts of one relationship.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Relationship(ArrayVec<PredicateId, 2>);

impl Relationship {
    pub fn predicates(&self) -> &[PredicateId] {
        &self.0
    }

    pub fn is_compound(&self) -> bool {
        self.0.len() == 2
    }

    pub fn label(&self, g: &KnowledgeGraph) -> String {
        let names: Vec<&str> = self.0.iter().map(|p| g.predicate_name(*p)).collect();
        names.join("|")
    }

    pub fn parse(g: &KnowledgeGraph, label: &str) -> Result<Self> {
        let mut preds = ArrayVec::new();
        for name in label.split('|') {
            let p = g.predicate(name).ok_or_else(|| Error::UnknownPredicate(name.to_string()))?;
            preds
                .try_push(p)
                .map_err(|_| Error::InvalidFact(format!("relationship `{label}` has more than two predicates")))?;
        }
        Ok(Relationship(preds))
    }
}

/// A KG fact. Compound facts are stored in KG orientation: the first
/// triple points into the CVT entity and the second leaves it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fact {
    Single(Triple),
    Compound([Triple; 2]),
}

impl Fact {
    /// Build a fact from one or two triples, checking the CVT placement rules
    /// and that every triple is in `g`.
    pub fn new(g: &KnowledgeGraph, triples: &[Triple]) -> Result<Self> {
        for t in triples {
            if !g.contains(t) {
                return Err(Error::FactNotInGraph(g.triple_label(t)));
            }
        }
        match *triples {
            [t] => {
                if g.is_cvt(t.object) {
                    return Err(Error::InvalidFact(format!(
                        "{} ends in a CVT entity",
                        g.triple_label(&t)
                    )));
                }
                Ok(Fact::Single(t))
            }
            [a, b] => {
                if a.object != b.subject {
                    return Err(Error::InvalidFact("triples do not chain".into()));
                }
                if !g.is_cvt(a.object) {
                    return Err(Error::InvalidFact(format!(
                        "middle entity {} is not a CVT",
                        g.entity_name(a.object)
                    )));
                }
                if g.is_cvt(a.subject) || g.is_cvt(b.object) {
                    return Err(Error::InvalidFact("compound fact endpoints must be non-CVT".into()));
                }
                Ok(Fact::Compound([a, b]))
            }
            _ => Err(Error::InvalidFact(format!("a fact has 1 or 2 triples, got {}", triples.len()))),
        }
    }

    pub fn triples(&self) -> &[Triple] {
        match self {
            Fact::Single(t) => std::slice::from_ref(t),
            Fact::Compound(ts) => ts,
        }
    }

    /// Number of triples: 1 or 2.
    pub fn triple_count(&self) -> usize {
        self.triples().len()
    }

    pub fn is_compound(&self) -> bool {
        matches!(self, Fact::Compound(_))
    }

    pub fn relationship(&self) -> Relationship {
        Relationship(self.triples().iter().map(|t| t.predicate).collect())
    }

    pub fn source(&self) -> EntityId {
        self.triples()[0].subject
    }

    pub fn target(&self) -> EntityId {
        self.triples()[self.triple_count() - 1].object
    }

    pub fn endpoints(&self) -> (EntityId, EntityId) {
        (self.source(), self.target())
    }

    /// The CVT in the middle of a compound fact.
    pub fn middle(&self) -> Option<EntityId> {
        match self {
            Fact::Compound([a, _]) => Some(a.object),
            Fact::Single(_) => None,
        }
    }

    /// The CVT entity this fact hangs off: the middle of a compound fact, or
    /// the CVT subject of an attribute fact.
    pub fn cvt(&self, g: &KnowledgeGraph) -> Option<EntityId> {
        match self {
            Fact::Compound([a, _]) => Some(a.object),
            Fact::Single(t) if g.is_cvt(t.subject) => Some(t.subject),
            Fact::Single(_) => None,
        }
    }

    /// Entities along the fact in path order (source, [cvt], target).
    pub fn entities(&self) -> ArrayVec<EntityId, 3> {
        let mut out = ArrayVec::new();
        out.push(self.source());
        if let Some(m) = self.middle() {
            out.push(m);
        }
        if self.target() != self.source() {
            out.push(self.target());
        }
        out
    }

    pub fn entity_set(&self) -> BTreeSet<EntityId> {
        self.entities().into_iter().collect()
    }

    pub fn contains_entity(&self, e: EntityId) -> bool {
        self.entities().contains(&e)
    }

    pub fn predicate_set(&self) -> BTreeSet<PredicateId> {
        self.triples().iter().map(|t| t.predicate).collect()
    }

    /// `p0[|p1]<TAB>s0<TAB>[cvt<TAB>]t_last`
    pub fn serialize(&self, g: &KnowledgeGraph) -> String {
        let mut out = self.relationship().label(g);
        out.push('\t');
        out.push_str(g.entity_name(self.source()));
        if let Some(m) = self.middle() {
            out.push('\t');
            out.push_str(g.entity_name(m));
        }
        out.push('\t');
        out.push_str(g.entity_name(self.target()));
        out
    }

    pub fn parse(g: &KnowledgeGraph, text: &str) -> Result<Self> {
        let mut fields = text.split('\t');
        let fact = Self::parse_fields(g, &mut fields)?;
        if fields.next().is_some() {
            return Err(Error::Malformed(format!("trailing fields after fact `{text}`")));
        }
        Ok(fact)
    }

    /// Consume one serialized fact (3 or 4 fields) from a field iterator.
    pub fn parse_fields<'a>(g: &KnowledgeGraph, fields: &mut impl Iterator<Item = &'a str>) -> Result<Self> {
        let parts = take_fact_fields(fields)?;
        let rel = Relationship::parse(g, parts[0])?;
        let ent = |name: &str| g.entity(name).ok_or_else(|| Error::UnknownEntity(name.to_string()));
        let preds = rel.predicates();
        let triples: ArrayVec<Triple, 2> = if preds.len() == 1 {
            [Triple::new(ent(parts[1])?, preds[0], ent(parts[2])?)].into_iter().collect()
        } else {
            let (s, m, t) = (ent(parts[1])?, ent(parts[2])?, ent(parts[3])?);
            [Triple::new(s, preds[0], m), Triple::new(m, preds[1], t)].into_iter().collect()
        };
        Fact::new(g, &triples)
    }

    /// Sort key: relationship label, source name, target name, full serialization.
    pub fn sort_key(&self, g: &KnowledgeGraph) -> (String, String, String, String) {
        (
            self.relationship().label(g),
            g.entity_name(self.source()).to_string(),
            g.entity_name(self.target()).to_string(),
            self.serialize(g),
        )
    }
}

/// Pull the 3 or 4 tab-separated fields of one serialized fact; the arity is
/// decided by the number of predicates in the first field.
pub fn take_fact_fields<'a>(fields: &mut impl Iterator<Item = &'a str>) -> Result<ArrayVec<&'a str, 4>> {
    let label = fields.next().ok_or_else(|| Error::Malformed("missing fact".into()))?;
    let arity = if label.contains('|') { 4 } else { 3 };
    let mut out = ArrayVec::new();
    out.push(label);
    for _ in 1..arity {
        let f = fields
            .next()
            .ok_or_else(|| Error::Malformed(format!("truncated fact starting `{label}`")))?;
        out.push(f);
    }
    if out.iter().any(|f| f.is_empty()) {
        return Err(Error::Malformed(format!("empty field in fact starting `{label}`")));
    }
    Ok(out)
}

/// Same as [`take_fact_fields`] but rejoined into the canonical string, for
/// consumers that key on serialized facts without a graph.
pub fn take_fact_string<'a>(fields: &mut impl Iterator<Item = &'a str>) -> Result<String> {
    Ok(take_fact_fields(fields)?.join("\t"))
}

/// Sort facts by [`Fact::sort_key`] and drop duplicates.
pub fn sort_facts(g: &KnowledgeGraph, facts: &mut Vec<Fact>) {
    facts.sort_by_cached_key(|f| f.sort_key(g));
    facts.dedup();
}

/// True iff `attr` is a one-triple fact whose subject is the CVT of the
/// compound fact `f`.
pub fn is_attribute_of(attr: &Fact, f: &Fact) -> bool {
    match (attr, f) {
        (Fact::Single(t), Fact::Compound([a, _])) => t.subject == a.object,
        _ => false,
    }
}

/// Every fact whose endpoint pair is `{a, b}`, in either orientation.
pub fn direct_facts_between(g: &KnowledgeGraph, a: EntityId, b: EntityId) -> Vec<Fact> {
    if a == b {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (x, y) in [(a, b), (b, a)] {
        for t in g.triples_subj(x) {
            if t.object == y && !g.is_cvt(y) {
                out.push(Fact::Single(*t));
            }
            if g.is_cvt(t.object) && !g.is_cvt(x) && !g.is_cvt(y) {
                for u in g.triples_subj(t.object) {
                    if u.object == y {
                        out.push(Fact::Compound([*t, *u]));
                    }
                }
            }
        }
    }
    sort_facts(g, &mut out);
    out
}

/// Every fact whose predicate sequence is `rel`.
pub fn facts_of_relationship(g: &KnowledgeGraph, rel: &Relationship) -> Vec<Fact> {
    let preds = rel.predicates();
    let mut out = Vec::new();
    match *preds {
        [p] => {
            out.extend(g.triples_pred(p).iter().filter(|t| !g.is_cvt(t.object)).map(|t| Fact::Single(*t)))
        }
        [p0, p1] => {
            for t in g.triples_pred(p0) {
                if !g.is_cvt(t.object) || g.is_cvt(t.subject) {
                    continue;
                }
                for u in g.triples_subj(t.object) {
                    if u.predicate == p1 && !g.is_cvt(u.object) {
                        out.push(Fact::Compound([*t, *u]));
                    }
                }
            }
        }
        _ => {}
    }
    sort_facts(g, &mut out);
    out
}

/// Every fact in the graph, sorted.
pub fn all_facts(g: &KnowledgeGraph) -> Vec<Fact> {
    let mut out = Vec::new();
    for t in g.triples() {
        if !g.is_cvt(t.object) {
            out.push(Fact::Single(*t));
        } else if !g.is_cvt(t.subject) {
            for u in g.triples_subj(t.object) {
                if !g.is_cvt(u.object) {
                    out.push(Fact::Compound([*t, *u]));
                }
            }
        }
    }
    sort_facts(g, &mut out);
    out
}

/// Every relationship label present in the graph, sorted by label.
pub fn relationships(g: &KnowledgeGraph) -> Vec<Relationship> {
    let mut rels: Vec<Relationship> = all_facts(g).iter().map(Fact::relationship).collect();
    rels.sort_by_cached_key(|r| r.label(g));
    rels.dedup();
    rels
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathStep {
    pub entity: EntityId,
    pub predicate: PredicateId,
    /// Traverses a triple from object to subject.
    pub inverse: bool,
}

/// A non-empty walk over the KG where each step may follow a triple forward
/// or backward.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path {
    steps: Vec<PathStep>,
    end: EntityId,
}

impl Path {
    pub fn new(g: &KnowledgeGraph, steps: Vec<PathStep>, end: EntityId) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidFact("a path needs at least one step".into()));
        }
        for (i, step) in steps.iter().enumerate() {
            let next = steps.get(i + 1).map_or(end, |s| s.entity);
            let t = if step.inverse {
                Triple::new(next, step.predicate, step.entity)
            } else {
                Triple::new(step.entity, step.predicate, next)
            };
            if !g.contains(&t) {
                return Err(Error::FactNotInGraph(g.triple_label(&t)));
            }
        }
        Ok(Path { steps, end })
    }

    pub(crate) fn from_parts(steps: Vec<PathStep>, end: EntityId) -> Self {
        Path { steps, end }
    }

    pub fn from_fact(f: &Fact) -> Self {
        let steps = f
            .triples()
            .iter()
            .map(|t| PathStep { entity: t.subject, predicate: t.predicate, inverse: false })
            .collect();
        Path { steps, end: f.target() }
    }

    pub fn steps(&self) -> &[PathStep] {
        &self.steps
    }

    pub fn origin(&self) -> EntityId {
        self.steps[0].entity
    }

    pub fn end(&self) -> EntityId {
        self.end
    }

    /// Entities in visiting order, including the final one.
    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.steps.iter().map(|s| s.entity).chain(std::iter::once(self.end))
    }

    pub fn display(&self, g: &KnowledgeGraph) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(g.entity_name(s.entity));
            out.push_str(" -");
            out.push_str(g.predicate_name(s.predicate));
            if s.inverse {
                out.push_str("^-1");
            }
            out.push_str("-> ");
        }
        out.push_str(g.entity_name(self.end));
        out
    }
}
