//! Shared fixtures for the integration tests: a seeded random-graph
//! generator and brute-force reference evaluators that work on the raw
//! triple list rather than the graph's indexes.
#![allow(dead_code)]

pub mod checks;

use std::collections::{BTreeMap, BTreeSet};

use factctx::kg::{EntityKind, GraphBuilder, KnowledgeGraph};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type RawTriple = (String, String, String);

/// A fact as its raw triples: one triple, or two chained through a CVT.
pub type RawFact = Vec<RawTriple>;

pub struct RandomGraph {
    pub kinds: BTreeMap<String, EntityKind>,
    pub types: BTreeMap<String, BTreeSet<String>>,
    pub triples: Vec<RawTriple>,
    pub graph: KnowledgeGraph,
}

const PREDICATES: [&str; 7] = ["p0", "p1", "p2", "p3", "p4", "p5", "p6"];
const TYPES: [&str; 6] = ["ta", "tb", "tc", "td", "te", "tf"];

pub fn random_graph(seed: u64, max_triples: usize) -> RandomGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=30);
    let mut b = GraphBuilder::new();
    let mut kinds = BTreeMap::new();
    let mut types = BTreeMap::new();
    let names: Vec<String> = (0..n).map(|i| format!("e{i:02}")).collect();
    for name in &names {
        let kind = match rng.gen_range(0..100) {
            0..=64 => EntityKind::Regular,
            65..=79 => EntityKind::Cvt,
            80..=91 => EntityKind::Date,
            _ => EntityKind::ClassOrType,
        };
        let k = if kind == EntityKind::Cvt { 0 } else { rng.gen_range(0..=3) };
        let declared: Vec<&str> = TYPES.choose_multiple(&mut rng, k).copied().collect();
        b.add_entity(name, kind, &declared).unwrap();
        let mut set: BTreeSet<String> = declared.iter().map(|t| t.to_string()).collect();
        match kind {
            EntityKind::Cvt => set.insert("__CVT__".into()),
            EntityKind::Date => set.insert("__DATE__".into()),
            _ => false,
        };
        kinds.insert(name.clone(), kind);
        types.insert(name.clone(), set);
    }
    let want = rng.gen_range(1..=max_triples);
    let n_preds = rng.gen_range(1..=PREDICATES.len());
    let mut triples = Vec::new();
    for _ in 0..want * 2 {
        if triples.len() == want {
            break;
        }
        let s = &names[rng.gen_range(0..n)];
        let o = &names[rng.gen_range(0..n)];
        if s == o && rng.gen_bool(0.8) {
            continue;
        }
        let p = PREDICATES[rng.gen_range(0..n_preds)];
        if b.add_triple(s, p, o).is_ok() {
            triples.push((s.clone(), p.to_string(), o.clone()));
        }
    }
    if triples.is_empty() {
        b.add_triple(&names[0], "p0", &names[1]).unwrap();
        triples.push((names[0].clone(), "p0".into(), names[1].clone()));
    }
    RandomGraph { kinds, types, triples, graph: b.build() }
}

impl RandomGraph {
    pub fn is_cvt(&self, e: &str) -> bool {
        self.kinds[e] == EntityKind::Cvt
    }

    pub fn is_class(&self, e: &str) -> bool {
        self.kinds[e] == EntityKind::ClassOrType
    }

    pub fn entities(&self) -> Vec<String> {
        self.kinds.keys().cloned().collect()
    }

    pub fn predicates(&self) -> Vec<String> {
        self.triples.iter().map(|t| t.1.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Every fact by definition: a triple not ending in a CVT, or a
    /// non-CVT → CVT → non-CVT chain.
    pub fn facts(&self) -> Vec<RawFact> {
        let mut out = Vec::new();
        for a in &self.triples {
            if !self.is_cvt(&a.2) {
                out.push(vec![a.clone()]);
            }
            if self.is_cvt(&a.2) && !self.is_cvt(&a.0) {
                for b in &self.triples {
                    if b.0 == a.2 && !self.is_cvt(&b.2) {
                        out.push(vec![a.clone(), b.clone()]);
                    }
                }
            }
        }
        out
    }
}

pub fn serialize(f: &RawFact) -> String {
    match f.as_slice() {
        [t] => format!("{}\t{}\t{}", t.1, t.0, t.2),
        [a, b] => format!("{}|{}\t{}\t{}\t{}", a.1, b.1, a.0, a.2, b.2),
        _ => unreachable!("facts have one or two triples"),
    }
}

pub fn fact_entities(f: &RawFact) -> BTreeSet<String> {
    f.iter().flat_map(|t| [t.0.clone(), t.2.clone()]).collect()
}

pub fn fact_predicates(f: &RawFact) -> BTreeSet<String> {
    f.iter().map(|t| t.1.clone()).collect()
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Tiny wall-clock helper for the timed checks.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, std::time::Duration) {
    let start = std::time::Instant::now();
    let out = f();
    (out, start.elapsed())
}
