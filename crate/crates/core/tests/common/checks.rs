#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]
//! Reusable verification routines. Each returns a short summary on success
//! and a description of the first disagreement on failure.

use std::collections::{BTreeMap, BTreeSet};

use factctx::enumerate::{enumerate_candidates, EnumConfig};
use factctx::eval::metrics::{average_precision, ndcg_at};
use factctx::eval::{evaluate_run, Judgments, Run};
use factctx::fact::Fact;
use factctx::features::{
    ent_freq, ent_type_sim, entity_distance, informativeness, itf, pf_in, pf_out, pred_coocc_sim, pred_freq,
    pred_set_jaccard, FeatureExtractor, RelVocab,
};
use factctx::kg::{parse_graph_str, KnowledgeGraph};
use factctx::ranker::{pairwise_loss, BatchItem, FeatureMode, QueryInputs, RankerConfig, RankerModel};
use factctx::supervision::{
    build_dataset, label_query_fact, Corpus, DatasetConfig, Document, ResolvedCorpus, Split,
};
use factctx::toy::toy_kg;
use factctx::Relationship;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{close, fact_entities, fact_predicates, jaccard, random_graph, serialize, RandomGraph};

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const LOG_TOL: f64 = 1e-12;
const D_MAX: u32 = 4;

fn parse_fact(g: &KnowledgeGraph, raw: &super::RawFact) -> Fact {
    Fact::parse(g, &serialize(raw)).expect("oracle fact parses")
}

/// All-pairs undirected hop distances by Floyd–Warshall.
fn floyd(rg: &RandomGraph) -> BTreeMap<(String, String), u32> {
    let names = rg.entities();
    let n = names.len();
    let idx: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, e)| (e.as_str(), i)).collect();
    let inf = u32::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for (s, _, o) in &rg.triples {
        let (a, b) = (idx[s.as_str()], idx[o.as_str()]);
        if a != b {
            d[a][b] = 1;
            d[b][a] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for (i, a) in names.iter().enumerate() {
        for (j, b) in names.iter().enumerate() {
            let v = if d[i][j] > D_MAX { D_MAX + 1 } else { d[i][j] };
            out.insert((a.clone(), b.clone()), v);
        }
    }
    out
}

/// Every graph-statistic formula against direct counting over the triple list.
pub fn formula_oracle(trials: u64) -> Outcome {
    let mut checked = 0usize;
    for seed in 0..trials {
        let rg = random_graph(seed, 200);
        let g = &rg.graph;
        let n = rg.triples.len() as f64;
        let count = |f: &dyn Fn(&super::RawTriple) -> bool| rg.triples.iter().filter(|t| f(t)).count() as f64;

        for p in rg.predicates() {
            let pid = g.predicate(&p).unwrap();
            let c = count(&|t| t.1 == p);
            let got = pred_freq(g, pid).unwrap();
            ensure!(got == c / n, "seed {seed}: pred_freq({p}) = {got}, expected {}", c / n);
            let got = itf(g, pid).unwrap();
            ensure!(close(got, (n / c).ln(), LOG_TOL), "seed {seed}: itf({p}) = {got}, expected {}", (n / c).ln());
            let ents = |q: &str| -> BTreeSet<String> {
                rg.triples.iter().filter(|t| t.1 == q).flat_map(|t| [t.0.clone(), t.2.clone()]).collect()
            };
            for p2 in rg.predicates() {
                let want = jaccard(&ents(&p), &ents(&p2));
                let got = pred_coocc_sim(g, pid, g.predicate(&p2).unwrap());
                ensure!(got == want, "seed {seed}: pred_coocc_sim({p},{p2}) = {got}, expected {want}");
                checked += 1;
            }
        }

        let dist = floyd(&rg);
        for e in rg.entities() {
            let eid = g.entity(&e).unwrap();
            let c = count(&|t| t.0 == e || t.2 == e);
            let got = ent_freq(g, eid).unwrap();
            ensure!(got == c / n, "seed {seed}: ent_freq({e}) = {got}, expected {}", c / n);
            for p in rg.predicates() {
                let pid = g.predicate(&p).unwrap();
                let (subj, obj) = (count(&|t| t.0 == e), count(&|t| t.2 == e));
                let want_out = if subj == 0.0 { 0.0 } else { count(&|t| t.0 == e && t.1 == p) / subj };
                let want_in = if obj == 0.0 { 0.0 } else { count(&|t| t.2 == e && t.1 == p) / obj };
                ensure!(pf_out(g, pid, eid) == want_out, "seed {seed}: pf_out({p},{e})");
                ensure!(pf_in(g, pid, eid) == want_in, "seed {seed}: pf_in({p},{e})");
            }
            for e2 in rg.entities() {
                let e2id = g.entity(&e2).unwrap();
                let want = jaccard(&rg.types[&e], &rg.types[&e2]);
                let got = ent_type_sim(g, eid, e2id);
                ensure!(got == want, "seed {seed}: ent_type_sim({e},{e2}) = {got}, expected {want}");
                let want = dist[&(e.clone(), e2.clone())];
                let got = entity_distance(g, eid, e2id, D_MAX);
                ensure!(got == want, "seed {seed}: entity_distance({e},{e2}) = {got}, expected {want}");
                checked += 2;
            }
        }

        let facts = rg.facts();
        for f in &facts {
            let mut total = 0.0;
            for (s, p, o) in f {
                let w = (n / count(&|t| t.1 == *p)).ln();
                let subj = count(&|t| t.0 == *s);
                let obj = count(&|t| t.2 == *o);
                let out = count(&|t| t.0 == *s && t.1 == *p) / subj;
                let inc = count(&|t| t.2 == *o && t.1 == *p) / obj;
                total += out * w + inc * w;
            }
            let want = total / (2 * f.len()) as f64;
            let got = informativeness(g, &parse_fact(g, f)).unwrap();
            ensure!(close(got, want, LOG_TOL), "seed {seed}: informativeness({}) = {got}, expected {want}", serialize(f));
            checked += 1;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..facts.len().min(30) {
            let (a, b) = (facts.choose(&mut rng).unwrap(), facts.choose(&mut rng).unwrap());
            let want = jaccard(&fact_predicates(a), &fact_predicates(b));
            let got = pred_set_jaccard(&parse_fact(g, a), &parse_fact(g, b));
            ensure!(got == want, "seed {seed}: pred_set_jaccard = {got}, expected {want}");
            checked += 1;
        }
    }
    Ok(format!("{trials} graphs, {checked} formula evaluations"))
}

/// Hop distances from {s, t} by fixpoint relaxation: entering a CVT is free,
/// entering anything else costs one; class entities other than s and t are
/// never left.
fn oracle_frontier(rg: &RandomGraph, s: &str, t: &str) -> BTreeSet<String> {
    let inf = u32::MAX / 4;
    let mut d: BTreeMap<String, u32> = rg.entities().into_iter().map(|e| (e, inf)).collect();
    d.insert(s.to_string(), 0);
    d.insert(t.to_string(), 0);
    let expandable = |e: &str| e == s || e == t || !rg.is_class(e);
    loop {
        let mut changed = false;
        for (a, _, b) in &rg.triples {
            for (u, v) in [(a, b), (b, a)] {
                if u == v || !expandable(u) || d[u] >= inf {
                    continue;
                }
                let nd = d[u] + u32::from(!rg.is_cvt(v));
                if nd < d[v] {
                    d.insert(v.clone(), nd);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    d.into_iter().filter(|(e, dist)| *dist <= 1 && expandable(e)).map(|(e, _)| e).collect()
}

/// Candidate enumeration against materialize-everything-then-filter.
pub fn enumeration_oracle(trials: u64) -> Outcome {
    let cfg = EnumConfig::default();
    let mut queries = 0usize;
    let mut total = 0usize;
    for seed in 0..trials {
        let rg = random_graph(seed ^ 0x5eed, 200);
        let g = &rg.graph;
        let facts = rg.facts();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for q in facts.choose_multiple(&mut rng, 3) {
            let (s, t) = (q[0].0.clone(), q[q.len() - 1].2.clone());
            let frontier = oracle_frontier(&rg, &s, &t);
            let want: BTreeSet<String> = facts
                .iter()
                .filter(|f| *f != q && fact_entities(f).iter().any(|e| frontier.contains(e)))
                .map(serialize)
                .collect();
            let got_list: Vec<String> = enumerate_candidates(g, &parse_fact(g, q), &cfg)
                .map_err(|e| format!("seed {seed}: {e}"))?
                .candidates
                .iter()
                .map(|f| f.serialize(g))
                .collect();
            let got: BTreeSet<String> = got_list.iter().cloned().collect();
            ensure!(got_list.len() == got.len(), "seed {seed}: duplicate candidates");
            if got != want {
                let missing: Vec<_> = want.difference(&got).collect();
                let extra: Vec<_> = got.difference(&want).collect();
                return Err(format!("seed {seed}, query {}: missing {missing:?}, extra {extra:?}", serialize(q)));
            }
            let key = |c: &String| {
                let f: Vec<&str> = c.split('\t').collect();
                (f[0].to_string(), f[1].to_string(), f[f.len() - 1].to_string(), c.clone())
            };
            ensure!(got_list.windows(2).all(|w| key(&w[0]) < key(&w[1])), "seed {seed}: candidates out of order");
            queries += 1;
            total += got.len();
        }
    }
    Ok(format!("{trials} graphs, {queries} queries, {total} candidates matched"))
}

fn doc(source: &str, sentences: &[&[&str]]) -> Document {
    Document {
        source_entity: source.to_string(),
        sentences: sentences.iter().map(|s| s.iter().map(|e| e.to_string()).collect()).collect(),
    }
}

fn labels(g: &KnowledgeGraph, docs: Vec<Document>, query: &str) -> BTreeSet<String> {
    let corpus = ResolvedCorpus::resolve(g, &Corpus { documents: docs });
    let q = Fact::parse(g, query).unwrap();
    let cands = enumerate_candidates(g, &q, &EnumConfig::default()).unwrap();
    label_query_fact(g, &corpus, &q, &cands).relevant.iter().map(|f| f.serialize(g)).collect()
}

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn toy_with(extra: &str) -> KnowledgeGraph {
    let triples = format!(
        "BillGates\tfounderOf\tMSFT\nPaulAllen\tfounderOf\tMSFT\nBillGates\tmarriage\tM1\nM1\tspouse\tMelindaGates\n\
         M1\tmarriageDate\tD1994\nMSFT\tfoundedIn\tD1975\nBillGates\tparentOf\tJenniferGates\n{extra}"
    );
    let entities = "BillGates\tregular\tperson,founder\nPaulAllen\tregular\tperson,founder\n\
                    MelindaGates\tregular\tperson\nJenniferGates\tregular\tperson\nMSFT\tregular\tcompany,organization\n\
                    M1\tcvt\t\nD1994\tdate\t\nD1975\tdate\t\n";
    parse_graph_str(&triples, entities).unwrap()
}

/// Hand-built corpus fixtures for each labeling rule.
pub fn supervision_rules() -> Outcome {
    let query = "founderOf\tBillGates\tMSFT";
    let mut cases = 0;

    // uniqueness: {PaulAllen, MSFT} has one connecting fact, {BillGates, PaulAllen} none
    let g = toy_kg();
    let got = labels(&g, vec![doc("BillGates", &[&["BillGates", "PaulAllen", "MSFT"]])], query);
    ensure!(got == set(&["founderOf\tPaulAllen\tMSFT"]), "uniqueness: {got:?}");
    // a compound fact is the single connection of its endpoints
    let got = labels(&g, vec![doc("BillGates", &[&["MSFT", "MelindaGates", "BillGates"]])], query);
    ensure!(got == set(&["marriage|spouse\tBillGates\tM1\tMelindaGates"]), "compound uniqueness: {got:?}");
    cases += 2;

    // ambiguity: a second PaulAllen–MSFT fact silences that pair only
    let g = toy_with("PaulAllen\tboardMemberOf\tMSFT\n");
    let got = labels(&g, vec![doc("BillGates", &[&["BillGates", "PaulAllen", "MSFT"]])], query);
    ensure!(got.is_empty(), "ambiguity: {got:?}");
    let got = labels(&g, vec![doc("BillGates", &[&["BillGates", "PaulAllen", "MSFT", "D1975"]])], query);
    ensure!(got == set(&["foundedIn\tMSFT\tD1975"]), "ambiguity beside a unique pair: {got:?}");
    cases += 2;

    // only s's document, only sentences mentioning t, query never relevant
    let g = toy_kg();
    let got = labels(&g, vec![doc("PaulAllen", &[&["BillGates", "PaulAllen", "MSFT"]])], query);
    ensure!(got.is_empty(), "foreign document: {got:?}");
    let got = labels(&g, vec![doc("BillGates", &[&["BillGates", "PaulAllen", "JenniferGates"]])], query);
    ensure!(got.is_empty(), "sentence without t: {got:?}");
    let got = labels(&g, vec![doc("BillGates", &[&["BillGates", "MSFT"]])], query);
    ensure!(got.is_empty(), "query labeled itself: {got:?}");
    cases += 3;

    // |O| <= 20: a hub linked to 25 spokes; only the first 20 distinct mentions count
    let mut triples = String::from("hub\tq\ttarget\n");
    let mut entities = String::from("hub\tregular\tthing\ntarget\tregular\tthing\n");
    let spokes: Vec<String> = (0..25).map(|i| format!("x{i:02}")).collect();
    for x in &spokes {
        triples.push_str(&format!("hub\tknows\t{x}\n"));
        entities.push_str(&format!("{x}\tregular\tthing\n"));
    }
    let g = parse_graph_str(&triples, &entities).unwrap();
    let knows = |xs: &[String]| -> BTreeSet<String> { xs.iter().map(|x| format!("knows\thub\t{x}")).collect() };
    let mut sentence: Vec<&str> = vec!["hub", "target", "x00"];
    sentence.extend(spokes.iter().map(String::as_str));
    let got = labels(&g, vec![doc("hub", &[&sentence])], "q\thub\ttarget");
    ensure!(got == knows(&spokes[..20]), "|O| cap in mention order: {} labels", got.len());
    let reversed: Vec<&str> = spokes.iter().rev().map(String::as_str).chain(["target"]).collect();
    let got = labels(&g, vec![doc("hub", &[&reversed])], "q\thub\ttarget");
    ensure!(got == knows(&spokes[5..]), "|O| cap on reversed mentions: {} labels", got.len());
    // each sentence gets its own budget
    let first: Vec<&str> = ["target"].into_iter().chain(spokes[..20].iter().map(String::as_str)).collect();
    let second: Vec<&str> = ["target"].into_iter().chain(spokes[20..].iter().map(String::as_str)).collect();
    let got = labels(&g, vec![doc("hub", &[&first, &second])], "q\thub\ttarget");
    ensure!(got == knows(&spokes), "per-sentence cap: {} labels", got.len());
    cases += 3;

    // >= 1 relevant: only queries with a positive enter the dataset, with all candidates
    let g = parse_graph_str(
        "a1\tr\tb1\na2\tr\tb2\na1\tlikes\tc1\na2\tlikes\tc2\nb1\tnear\td1\n",
        "a1\tregular\t\na2\tregular\t\nb1\tregular\t\nb2\tregular\t\nc1\tregular\t\nc2\tregular\t\nd1\tregular\t\n",
    )
    .unwrap();
    let corpus = Corpus { documents: vec![doc("a1", &[&["a1", "b1", "c1"]]), doc("a2", &[&["a2", "c2"]])] };
    let resolved = ResolvedCorpus::resolve(&g, &corpus);
    let rel = Relationship::parse(&g, "r").unwrap();
    let ds = build_dataset(&g, &resolved, &[rel], &DatasetConfig::default()).map_err(|e| e.to_string())?;
    let queries: BTreeSet<String> = ds.instances.iter().map(|i| i.query.serialize(&g)).collect();
    ensure!(queries == set(&["r\ta1\tb1"]), "eligibility filter kept {queries:?}");
    let positives: BTreeSet<String> =
        ds.instances.iter().filter(|i| i.label == 1).map(|i| i.candidate.serialize(&g)).collect();
    ensure!(positives == set(&["likes\ta1\tc1"]), "eligible query positives: {positives:?}");
    let candidates: BTreeSet<String> = ds.instances.iter().map(|i| i.candidate.serialize(&g)).collect();
    ensure!(candidates == set(&["likes\ta1\tc1", "near\tb1\td1"]), "eligible query candidates: {candidates:?}");
    ensure!(ds.instances.iter().all(|i| i.split == Split::Test), "a single query must land in test");
    cases += 1;

    Ok(format!("{cases} fixtures"))
}

fn micro_config(seed: u64, mode: FeatureMode) -> RankerConfig {
    RankerConfig {
        d_z: 4,
        d_p: 4,
        rnn_size: 3 + (seed % 3) as usize,
        alpha: 1 + (seed % 2) as usize,
        beta: 5,
        seed,
        feature_mode: mode,
        ..RankerConfig::default()
    }
}

/// A random graph with a fact that has at least four candidates, plus a
/// labelled batch of four of them with extracted features.
fn micro_batch(seed: u64) -> (KnowledgeGraph, Vec<BatchItem>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0.. {
        let rg = random_graph(seed * 7919 + attempt, 60);
        let g = rg.graph;
        let facts = factctx::fact::all_facts(&g);
        let Some((q, cands)) = facts.iter().find_map(|q| {
            let c = enumerate_candidates(&g, q, &EnumConfig::default()).ok()?;
            (c.len() >= 4).then_some((*q, c.candidates))
        }) else {
            continue;
        };
        let vocab = RelVocab::fit(&g, [&q]);
        let fx = FeatureExtractor::new(&g, vocab).unwrap();
        let picked: Vec<Fact> = cands.choose_multiple(&mut rng, 4).copied().collect();
        let batch = picked
            .iter()
            .enumerate()
            .map(|(i, c)| BatchItem {
                query: q,
                candidate: *c,
                label: if i % 2 == 0 { 1.0 } else { rng.gen_range(0..2) as f64 },
                features: fx.extract_pair(&q, c).values,
            })
            .collect();
        return (g, batch);
    }
    unreachable!()
}

/// Analytic gradients of the batch loss against central differences.
pub fn gradient_check(seeds: u64) -> Outcome {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for seed in 0..seeds {
        let (g, batch) = micro_batch(seed);
        let mut model = RankerModel::new(&g, micro_config(seed, FeatureMode::Full), RelVocab::fit(&g, [&batch[0].query]), batch[0].features.len())
            .map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        for p in model.params.iter_mut() {
            for v in p.data.iter_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        let (loss, grads) = model.batch_loss_grad(&g, &batch).map_err(|e| e.to_string())?;
        let q = QueryInputs::new(&g, &batch[0].query, FeatureMode::Full, model.config.max_paths_per_pair);
        ensure!(model.batch_loss(&g, &batch).unwrap() == loss, "seed {seed}: forward and backward losses disagree");
        for ti in 0..model.params.len() {
            let mut tensor_worst: f64 = 0.0;
            for j in 0..model.params[ti].data.len() {
                let orig = model.params[ti].data[j];
                model.params[ti].data[j] = orig + h;
                let plus = model.query_loss(&g, &q, &batch).unwrap();
                model.params[ti].data[j] = orig - h;
                let minus = model.query_loss(&g, &q, &batch).unwrap();
                model.params[ti].data[j] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let analytic = grads[ti].data[j];
                let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
                tensor_worst = tensor_worst.max(rel);
                checked += 1;
            }
            ensure!(
                tensor_worst < 1e-4,
                "seed {seed}: {} relative error {tensor_worst:.3e}",
                model.names[ti]
            );
            worst = worst.max(tensor_worst);
        }
    }
    Ok(format!("{seeds} seeds, {checked} parameters, max relative error {worst:.2e}"))
}

/// The three worked loss values, through the full model with a zeroed
/// output layer so every score is exactly 0.5.
pub fn loss_hand_values() -> Outcome {
    let g = toy_kg();
    let f = |s: &str| Fact::parse(&g, s).unwrap();
    let q = f("founderOf\tBillGates\tMSFT");
    let cands = [f("founderOf\tPaulAllen\tMSFT"), f("parentOf\tBillGates\tJenniferGates"), f("foundedIn\tMSFT\tD1975")];
    let mut model = RankerModel::new(&g, micro_config(0, FeatureMode::Learned), RelVocab::fit(&g, [&q]), 0)
        .map_err(|e| e.to_string())?;
    for name in ["out_kernel", "out_bias"] {
        let i = model.param_index(name).unwrap();
        model.params[i].data.iter_mut().for_each(|v| *v = 0.0);
    }
    let item = |c: &Fact, label: f64| BatchItem { query: q, candidate: *c, label, features: vec![] };
    let cases: [(&str, Vec<BatchItem>, f64); 3] = [
        ("labels (1,0), scores 0.5", vec![item(&cands[0], 1.0), item(&cands[1], 0.0)], 1.0),
        ("equal labels and scores", cands.iter().map(|c| item(c, 1.0)).collect(), 0.0),
        ("single item", vec![item(&cands[2], 1.0)], 0.0),
    ];
    for (name, batch, want) in &cases {
        let got = model.batch_loss(&g, batch).map_err(|e| e.to_string())?;
        ensure!(got == *want, "{name}: loss {got}, expected {want}");
    }
    ensure!(pairwise_loss(&[1.0, 0.0], &[0.5, 0.5]) == 1.0, "pairwise_loss on raw scores");
    Ok("3 batches reproduced exactly".into())
}

struct RefQuery {
    ndcg5: f64,
    ndcg10: f64,
    ap: f64,
    rr: f64,
}

fn ref_dcg(grades: &[u8], k: usize) -> f64 {
    let mut dcg = 0.0;
    for (rank, g) in grades.iter().enumerate().take(k) {
        dcg += (2f64.powi(*g as i32) - 1.0) / ((rank + 1) as f64 + 1.0).log2();
    }
    dcg
}

fn ref_query(ranked: &[u8], judged: &[u8]) -> Option<RefQuery> {
    let total = judged.iter().filter(|g| **g > 0).count();
    if total == 0 {
        return None;
    }
    let mut ideal = judged.to_vec();
    ideal.sort_by(|a, b| b.cmp(a));
    let ndcg = |k| ref_dcg(ranked, k) / ref_dcg(&ideal, k);
    let mut hits = 0.0;
    let mut ap = 0.0;
    let mut rr = 0.0;
    for (i, g) in ranked.iter().enumerate() {
        if *g > 0 {
            hits += 1.0;
            ap += hits / (i + 1) as f64;
            if rr == 0.0 {
                rr = 1.0 / (i + 1) as f64;
            }
        }
    }
    Some(RefQuery { ndcg5: ndcg(5), ndcg10: ndcg(10), ap: ap / total as f64, rr })
}

/// NDCG/MAP/MRR against a reference evaluator on random runs, plus the
/// worked examples.
pub fn metric_oracle(runs: u64) -> Outcome {
    let tol = 1e-10;
    let ndcg = ndcg_at(&[2, 0, 1], 3);
    ensure!(format!("{ndcg:.4}") == "0.9639", "worked NDCG {ndcg}");
    let ap = average_precision(&[true, false, true], 2).unwrap();
    ensure!(format!("{ap:.4}") == "0.8333", "worked AP {ap}");

    let mut compared = 0usize;
    for seed in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut judgments = Judgments::default();
        let mut run = Run::new("random");
        let mut reference: BTreeMap<String, RefQuery> = BTreeMap::new();
        for qi in 0..rng.gen_range(1..=8) {
            let q = format!("rel{}\tq{qi}\tt{qi}", qi % 3);
            let pool: Vec<String> = (0..rng.gen_range(1..=30)).map(|c| format!("p\tc{c}\td{c}")).collect();
            let mut judged = Vec::new();
            let mut grade_of = BTreeMap::new();
            for c in &pool {
                if rng.gen_bool(0.7) {
                    let g = [0u8, 0, 0, 1, 2][rng.gen_range(0..5)];
                    judgments.insert(q.clone(), c.clone(), g).map_err(|e| e.to_string())?;
                    judged.push(g);
                    grade_of.insert(c.clone(), g);
                }
            }
            let mut listed = pool.clone();
            listed.shuffle(&mut rng);
            listed.truncate(rng.gen_range(0..=pool.len()));
            let ranked: Vec<u8> = listed.iter().map(|c| grade_of.get(c).copied().unwrap_or(0)).collect();
            if rng.gen_bool(0.9) {
                let n = listed.len();
                run.queries.insert(q.clone(), listed.into_iter().enumerate().map(|(i, c)| (c, (n - i) as f64)).collect());
                if let Some(r) = ref_query(&ranked, &judged) {
                    reference.insert(q, r);
                }
            } else if let Some(r) = ref_query(&[], &judged) {
                reference.insert(q, r);
            }
        }
        let eval = evaluate_run(&run, &judgments);
        ensure!(eval.per_query.len() == reference.len(), "seed {seed}: {} queries scored, expected {}", eval.per_query.len(), reference.len());
        for m in &eval.per_query {
            let r = &reference[&m.query];
            for (name, got, want) in
                [("ndcg5", m.ndcg5, r.ndcg5), ("ndcg10", m.ndcg10, r.ndcg10), ("ap", m.ap, r.ap), ("rr", m.rr, r.rr)]
            {
                ensure!(close(got, want, tol), "seed {seed}, {}: {name} {got} vs {want}", m.query);
                compared += 1;
            }
        }
        if !reference.is_empty() {
            let n = reference.len() as f64;
            let mean = |f: fn(&RefQuery) -> f64| reference.values().map(f).sum::<f64>() / n;
            for (name, got, want) in [
                ("MAP", eval.overall.map, mean(|r| r.ap)),
                ("MRR", eval.overall.mrr, mean(|r| r.rr)),
                ("NDCG@5", eval.overall.ndcg5, mean(|r| r.ndcg5)),
                ("NDCG@10", eval.overall.ndcg10, mean(|r| r.ndcg10)),
            ] {
                ensure!(close(got, want, tol), "seed {seed}: {name} {got} vs {want}");
                compared += 1;
            }
        }
    }
    Ok(format!("{runs} runs, {compared} values within 1e-10, worked examples 0.9639 / 0.8333"))
}
