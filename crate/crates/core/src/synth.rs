//! Seeded synthetic world: a people/companies/films knowledge graph, an
//! entity-tagged corpus built from a planted relevance rule, and graded
//! ground-truth judgments for the same rule.
//!
//! The rule combines three kinds of evidence:
//! - which candidate relationships matter for which query relationships;
//! - the role an entity plays on the path to the query (a co-founder's
//!   education counts, a board member's does not);
//! - notability, i.e. entity degree (only well-connected cities and actors
//!   count).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::enumerate::{enumerate_candidates, EnumConfig};
use crate::error::{Error, Result};
use crate::eval::Judgments;
use crate::fact::{facts_of_relationship, Fact, Relationship};
use crate::kg::{to_tsv, EntityId, EntityKind, GraphBuilder, KnowledgeGraph};
use crate::rng::{substream, StreamRng};
use crate::supervision::{Corpus, Document};

/// Relationships whose facts serve as queries.
pub const QUERY_RELATIONSHIPS: [&str; 5] = ["educatedAt", "founderOf", "marriage|spouse", "parentOf", "starredIn"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub countries: usize,
    pub cities: usize,
    pub universities: usize,
    pub companies: usize,
    pub films: usize,
    pub awards: usize,
    pub businesspeople: usize,
    pub actors: usize,
    pub others: usize,
    pub marriages: usize,
    pub employments: usize,
    pub honors: usize,
    /// Entities with at least this many triples are notable.
    pub notable_degree: usize,
    /// Chance that a planted fact is left out of the corpus.
    pub drop_rate: f64,
    /// Chance per query of one extra sentence about an irrelevant candidate.
    pub noise_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::small(0)
    }
}

impl SynthConfig {
    /// Roughly 500 entities and 2000 triples.
    pub fn small(seed: u64) -> Self {
        SynthConfig {
            seed,
            countries: 6,
            cities: 24,
            universities: 12,
            companies: 24,
            films: 24,
            awards: 6,
            businesspeople: 60,
            actors: 55,
            others: 75,
            marriages: 55,
            employments: 90,
            honors: 45,
            notable_degree: 10,
            drop_rate: 0.1,
            noise_rate: 0.3,
        }
    }

    /// A few dozen entities, for quick tests.
    pub fn tiny(seed: u64) -> Self {
        SynthConfig {
            seed,
            countries: 2,
            cities: 5,
            universities: 3,
            companies: 5,
            films: 5,
            awards: 2,
            businesspeople: 12,
            actors: 12,
            others: 12,
            marriages: 10,
            employments: 10,
            honors: 8,
            notable_degree: 8,
            drop_rate: 0.0,
            noise_rate: 0.0,
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "small" => Ok(Self::small(seed)),
            "tiny" => Ok(Self::tiny(seed)),
            _ => Err(Error::Config(format!("unknown world size `{name}` (expected small or tiny)"))),
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("countries", self.countries),
            ("cities", self.cities),
            ("universities", self.universities),
            ("companies", self.companies),
            ("films", self.films),
            ("awards", self.awards),
            ("businesspeople", self.businesspeople),
            ("actors", self.actors),
            ("others", self.others),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("synth.{name} must be at least 1")));
        }
        if self.businesspeople < 4 || self.actors < 5 {
            return Err(Error::Config("synth needs at least 4 businesspeople and 5 actors".into()));
        }
        for (name, p) in [("drop_rate", self.drop_rate), ("noise_rate", self.noise_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("synth.{name} {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

pub struct SyntheticWorld {
    pub graph: KnowledgeGraph,
    pub corpus: Corpus,
    pub judgments: Judgments,
    pub query_relationships: Vec<String>,
    pub notable: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldSummary {
    pub entities: usize,
    pub predicates: usize,
    pub triples: usize,
    pub relationships: usize,
    pub query_relationships: Vec<String>,
    pub query_facts: usize,
    pub judged_relevant: usize,
    pub documents: usize,
    pub sentences: usize,
    pub notable: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorldFiles {
    pub triples: PathBuf,
    pub entities: PathBuf,
    pub corpus: PathBuf,
    pub judgments: PathBuf,
    pub summary: PathBuf,
}

impl WorldFiles {
    pub fn in_dir(dir: &Path) -> Self {
        WorldFiles {
            triples: dir.join("triples.tsv"),
            entities: dir.join("entities.tsv"),
            corpus: dir.join("corpus.jsonl"),
            judgments: dir.join("judgments.tsv"),
            summary: dir.join("world.json"),
        }
    }
}

impl SyntheticWorld {
    pub fn summary(&self) -> WorldSummary {
        let g = &self.graph;
        WorldSummary {
            entities: g.num_entities(),
            predicates: g.num_predicates(),
            triples: g.num_triples(),
            relationships: crate::fact::relationships(g).len(),
            query_relationships: self.query_relationships.clone(),
            query_facts: query_facts(g, &self.query_relationships).len(),
            judged_relevant: self.judgments.len(),
            documents: self.corpus.documents.len(),
            sentences: self.corpus.documents.iter().map(|d| d.sentences.len()).sum(),
            notable: self.notable.len(),
        }
    }

    pub fn write(&self, files: &WorldFiles) -> Result<()> {
        let (triples, entities) = to_tsv(&self.graph);
        let summary = serde_json::to_string_pretty(&self.summary())? + "\n";
        for (path, text) in [
            (&files.triples, triples),
            (&files.entities, entities),
            (&files.corpus, self.corpus.to_jsonl()),
            (&files.judgments, self.judgments.to_tsv()),
            (&files.summary, summary),
        ] {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            fs::write(path, text).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

fn query_facts(g: &KnowledgeGraph, labels: &[String]) -> Vec<Fact> {
    labels
        .iter()
        .filter_map(|l| Relationship::parse(g, l).ok())
        .flat_map(|r| facts_of_relationship(g, &r))
        .collect()
}

/// Zipf-like weights so a few entities collect most links.
fn zipf(n: usize, exponent: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((0..n).map(|i| 1.0 / ((i + 1) as f64).powf(exponent))).expect("non-empty weights")
}

fn distinct(rng: &mut StreamRng, dist: &WeightedIndex<f64>, n: usize, want: usize) -> Vec<usize> {
    let want = want.min(n);
    let mut out: Vec<usize> = Vec::with_capacity(want);
    while out.len() < want {
        let i = dist.sample(rng);
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

struct WorldBuilder {
    b: GraphBuilder,
    years: BTreeSet<u32>,
}

impl WorldBuilder {
    fn entity(&mut self, id: &str, kind: EntityKind, types: &[&str]) {
        self.b.add_entity(id, kind, types).expect("generated ids are unique");
    }

    fn triple(&mut self, s: &str, p: &str, o: &str) {
        // repeated links (e.g. two draws of the same university) are skipped
        let _ = self.b.add_triple(s, p, o);
    }

    fn year(&mut self, y: u32) -> String {
        let id = format!("year_{y}");
        if self.years.insert(y) {
            self.entity(&id, EntityKind::Date, &["year"]);
        }
        id
    }
}

fn build_graph(cfg: &SynthConfig, rng: &mut StreamRng) -> KnowledgeGraph {
    let mut w = WorldBuilder { b: GraphBuilder::new(), years: BTreeSet::new() };
    let name = |prefix: &str, i: usize| format!("{prefix}_{i:03}");

    for p in ["businessperson", "actor", "scientist", "writer", "engineer"] {
        w.entity(&format!("profession_{p}"), EntityKind::ClassOrType, &["profession"]);
    }
    let countries: Vec<String> = (0..cfg.countries).map(|i| name("country", i)).collect();
    for c in &countries {
        w.entity(c, EntityKind::Regular, &["location", "country"]);
    }
    let cities: Vec<String> = (0..cfg.cities).map(|i| name("city", i)).collect();
    for (i, c) in cities.iter().enumerate() {
        w.entity(c, EntityKind::Regular, &["location", "city"]);
        w.triple(c, "cityIn", &countries[i % countries.len()]);
    }
    for (i, c) in countries.iter().enumerate() {
        if i < cities.len() {
            w.triple(&cities[i], "capitalOf", c);
        }
    }
    let city_pick = zipf(cities.len(), 1.1);

    let unis: Vec<String> = (0..cfg.universities).map(|i| name("university", i)).collect();
    for u in &unis {
        w.entity(u, EntityKind::Regular, &["organization", "university"]);
        let c = &cities[city_pick.sample(rng)];
        w.triple(u, "locatedIn", c);
    }
    let uni_pick = zipf(unis.len(), 0.8);

    let awards: Vec<String> = (0..cfg.awards).map(|i| name("award", i)).collect();
    for a in &awards {
        w.entity(a, EntityKind::Regular, &["award"]);
    }

    let business: Vec<String> = (0..cfg.businesspeople).map(|i| name("bizperson", i)).collect();
    let actors: Vec<String> = (0..cfg.actors).map(|i| name("actor", i)).collect();
    let others: Vec<String> = (0..cfg.others).map(|i| name("person", i)).collect();
    let mut people: Vec<String> = Vec::new();
    for (group, role) in [(&business, "businessperson"), (&actors, "actor"), (&others, "")] {
        for p in group.iter() {
            let role = if role.is_empty() { ["scientist", "writer", "engineer"][rng.gen_range(0..3)] } else { role };
            w.entity(p, EntityKind::Regular, &["person"]);
            w.triple(p, "profession", &format!("profession_{role}"));
            let born = city_pick.sample(rng);
            w.triple(p, "bornIn", &cities[born]);
            let country = if rng.gen_bool(0.85) { born % countries.len() } else { rng.gen_range(0..countries.len()) };
            w.triple(p, "nationality", &countries[country]);
            let schools = if rng.gen_bool(0.4) { 2 } else { 1 };
            for u in distinct(rng, &uni_pick, unis.len(), schools) {
                w.triple(p, "educatedAt", &unis[u]);
            }
            people.push(p.clone());
        }
    }

    let companies: Vec<String> = (0..cfg.companies).map(|i| name("company", i)).collect();
    let biz_pick = zipf(business.len(), 0.5);
    for (i, c) in companies.iter().enumerate() {
        w.entity(c, EntityKind::Regular, &["organization", "company"]);
        w.triple(c, "headquarteredIn", &cities[city_pick.sample(rng)]);
        let y = w.year(rng.gen_range(1950..2010));
        w.triple(c, "foundedIn", &y);
        let founders = rng.gen_range(1..=3);
        let board = rng.gen_range(1..=3);
        let picked = distinct(rng, &biz_pick, business.len(), founders + board);
        for (k, p) in picked.iter().enumerate() {
            let pred = if k < founders { "founderOf" } else { "boardMemberOf" };
            w.triple(&business[*p], pred, c);
        }
        if i > 0 && rng.gen_bool(0.3) {
            let parent = &companies[rng.gen_range(0..i)];
            w.triple(c, "subsidiaryOf", parent);
        }
    }

    let actor_pick = zipf(actors.len(), 1.0);
    let films: Vec<String> = (0..cfg.films).map(|i| name("film", i)).collect();
    for f in &films {
        w.entity(f, EntityKind::Regular, &["film", "creative_work"]);
        let y = w.year(rng.gen_range(1960..2020));
        w.triple(f, "releasedIn", &y);
        let director = &others[rng.gen_range(0..others.len())];
        w.triple(director, "directorOf", f);
        let cast = rng.gen_range(3..=5);
        for a in distinct(rng, &actor_pick, actors.len(), cast) {
            w.triple(&actors[a], "starredIn", f);
        }
    }

    for i in 0..cfg.honors {
        let h = name("honor", i);
        w.entity(&h, EntityKind::Cvt, &[]);
        let a = &actors[actor_pick.sample(rng)];
        w.triple(a, "awardHonor", &h);
        w.triple(&h, "awardReceived", &awards[rng.gen_range(0..awards.len())]);
        let y = w.year(rng.gen_range(1970..2020));
        w.triple(&h, "awardYear", &y);
    }

    for i in 0..cfg.employments {
        let e = name("employment", i);
        w.entity(&e, EntityKind::Cvt, &[]);
        let pool = if i % 2 == 0 { &business } else { &others };
        let p = &pool[rng.gen_range(0..pool.len())];
        w.triple(p, "employment", &e);
        w.triple(&e, "employer", &companies[rng.gen_range(0..companies.len())]);
        let y = w.year(rng.gen_range(1970..2020));
        w.triple(&e, "startDate", &y);
    }

    // couples from a shuffled pool; children come from the tail of the pool
    let mut pool = people.clone();
    pool.shuffle(rng);
    let couples = cfg.marriages.min(pool.len() / 3);
    let mut kids = pool.split_off(2 * couples);
    for i in 0..couples {
        let (a, b) = (&pool[2 * i], &pool[2 * i + 1]);
        let m = name("marriage", i);
        w.entity(&m, EntityKind::Cvt, &[]);
        w.triple(a, "marriage", &m);
        w.triple(&m, "spouse", b);
        let y = w.year(rng.gen_range(1950..2015));
        w.triple(&m, "marriageDate", &y);
        let n_kids = if rng.gen_bool(0.55) { rng.gen_range(1..=3) } else { 0 };
        for _ in 0..n_kids {
            let Some(child) = kids.pop() else { break };
            w.triple(a, "parentOf", &child);
            w.triple(b, "parentOf", &child);
        }
    }
    // a few single-parent families
    for _ in 0..couples / 4 {
        let (Some(child), Some(parent)) = (kids.pop(), pool.choose(rng).cloned()) else { break };
        w.triple(&parent, "parentOf", &child);
    }
    w.b.build()
}

/// Helpers over predicate names for the planted rule.
struct RuleView<'g> {
    g: &'g KnowledgeGraph,
    notable: &'g HashSet<EntityId>,
}

impl RuleView<'_> {
    fn has(&self, s: EntityId, p: &str, o: EntityId) -> bool {
        self.g
            .predicate(p)
            .is_some_and(|p| self.g.triples_subj(s).iter().any(|t| t.predicate == p && t.object == o))
    }

    fn label(&self, f: &Fact) -> String {
        f.relationship().label(self.g)
    }
}

/// Ground-truth relevance grade (0, 1 or 2) of `c` for `q`.
pub fn planted_grade(g: &KnowledgeGraph, notable: &HashSet<EntityId>, q: &Fact, c: &Fact) -> u8 {
    if q == c {
        return 0;
    }
    let v = RuleView { g, notable };
    let (s, t) = q.endpoints();
    let (a, b) = c.endpoints();
    let cl = v.label(c);
    let notable = |e: EntityId| v.notable.contains(&e);
    match v.label(q).as_str() {
        "founderOf" => match cl.as_str() {
            "founderOf" if b == t => 2,
            "foundedIn" if a == t => 2,
            "headquarteredIn" if a == t && notable(b) => 1,
            "subsidiaryOf" if a == t => 1,
            "educatedAt" if a == s || v.has(a, "founderOf", t) => 1,
            _ => 0,
        },
        "marriage|spouse" => match cl.as_str() {
            "marriage|marriageDate" if c.middle() == q.middle() => 2,
            "parentOf" if (a == s || a == t) && v.has(s, "parentOf", b) && v.has(t, "parentOf", b) => 2,
            "bornIn" if a == t && notable(b) => 1,
            "profession" if a == t => 1,
            _ => 0,
        },
        "starredIn" => match cl.as_str() {
            "directorOf" if b == t => 2,
            "releasedIn" if a == t => 2,
            "starredIn" if b == t && notable(a) => 1,
            "awardHonor|awardReceived" if a == s => 1,
            _ => 0,
        },
        "educatedAt" => match cl.as_str() {
            "locatedIn" if a == t => 2,
            "employment|employer" if a == s => 1,
            "profession" if a == s => 1,
            "educatedAt" if b == t && notable(a) => 1,
            _ => 0,
        },
        "parentOf" => match cl.as_str() {
            "parentOf" if b == t => 2,
            "marriage|spouse" if (a == s || b == s) && v.has(if a == s { b } else { a }, "parentOf", t) => 2,
            "parentOf" if a == s => 1,
            "bornIn" if a == t => 1,
            _ => 0,
        },
        _ => 0,
    }
}

/// Entities with at least `min_degree` triples, excluding CVTs, dates and classes.
pub fn notable_entities(g: &KnowledgeGraph, min_degree: usize) -> HashSet<EntityId> {
    g.entity_ids()
        .filter(|e| g.kind(*e) == EntityKind::Regular && g.degree(*e) >= min_degree)
        .collect()
}

pub fn generate_synthetic_world(cfg: &SynthConfig) -> Result<SyntheticWorld> {
    cfg.validate()?;
    let mut rng = substream(cfg.seed, "synth/graph");
    let g = build_graph(cfg, &mut rng);
    let notable = notable_entities(&g, cfg.notable_degree);
    let labels: Vec<String> = QUERY_RELATIONSHIPS.iter().map(|s| s.to_string()).collect();
    let queries = query_facts(&g, &labels);

    let mut rng = substream(cfg.seed, "synth/corpus");
    let mut judgments = Judgments::default();
    let mut docs: Vec<Document> = Vec::new();
    let mut doc_index: HashMap<EntityId, usize> = HashMap::new();
    let enum_cfg = EnumConfig::default();
    for q in &queries {
        let cands = enumerate_candidates(&g, q, &enum_cfg)?;
        let (s, t) = q.endpoints();
        let mut sentences = Vec::new();
        let mut irrelevant = Vec::new();
        for c in &cands.candidates {
            let grade = planted_grade(&g, &notable, q, c);
            if grade == 0 {
                irrelevant.push(*c);
                continue;
            }
            judgments.insert(q.serialize(&g), c.serialize(&g), grade)?;
            if rng.gen::<f64>() >= cfg.drop_rate {
                sentences.push(mention_sentence(&g, t, c));
            }
        }
        if !irrelevant.is_empty() && rng.gen::<f64>() < cfg.noise_rate {
            let c = irrelevant[rng.gen_range(0..irrelevant.len())];
            sentences.push(mention_sentence(&g, t, &c));
        }
        if sentences.is_empty() {
            continue;
        }
        let i = *doc_index.entry(s).or_insert_with(|| {
            docs.push(Document { source_entity: g.entity_name(s).to_string(), sentences: Vec::new() });
            docs.len() - 1
        });
        docs[i].sentences.extend(sentences);
    }
    let notable_names = notable.iter().map(|e| g.entity_name(*e).to_string()).collect();
    Ok(SyntheticWorld {
        graph: g,
        corpus: Corpus { documents: docs },
        judgments,
        query_relationships: labels,
        notable: notable_names,
    })
}

/// A sentence naming the query target and both ends of `c`.
fn mention_sentence(g: &KnowledgeGraph, t: EntityId, c: &Fact) -> Vec<String> {
    let (a, b) = c.endpoints();
    let mut ids = vec![t];
    for e in [a, b] {
        if !ids.contains(&e) && !g.is_cvt(e) {
            ids.push(e);
        }
    }
    ids.into_iter().map(|e| g.entity_name(e).to_string()).collect()
}
