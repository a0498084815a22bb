use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path as FsPath;

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::autodiff::{Tape, Tensor, Var};
use super::{FeatureMode, RankerConfig};
use crate::enumerate::{paths_from, EnumConfig, PathSet};
use crate::error::{Error, Result};
use crate::fact::{Fact, Path};
use crate::features::RelVocab;
use crate::kg::{EntityId, KnowledgeGraph, PredicateId, UNKNOWN_TYPE};
use crate::rng::{substream, StreamRng};

pub const CHECKPOINT_FORMAT: u32 = 1;
pub const MAX_ENTITY_TYPES: usize = 7;
const INIT_SCALE: f64 = 0.05;

const W_Z: usize = 0;
const W_P: usize = 1;
const W_PI: usize = 2;
const W_HH: usize = 3;
const W_XH: usize = 4;
const MLP_START: usize = 5;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankerModel {
    pub format: u32,
    pub config: RankerConfig,
    pub types: Vec<String>,
    pub predicates: Vec<String>,
    pub relationships: RelVocab,
    pub feature_len: usize,
    /// Fixed standardization applied to hand-crafted inputs: (x - shift) * scale.
    pub feature_shift: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub names: Vec<String>,
    pub params: Vec<Tensor>,
    pub adam: AdamState,
}

/// One labeled (query, candidate) pair with its hand-crafted features.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchItem {
    pub query: Fact,
    pub candidate: Fact,
    pub label: f64,
    pub features: Vec<f64>,
}

/// Paths leaving both endpoints of a query fact, grouped by destination.
#[derive(Clone, Debug)]
pub struct QueryInputs {
    pub query: Fact,
    from_source: BTreeMap<EntityId, Vec<Path>>,
    from_target: BTreeMap<EntityId, Vec<Path>>,
}

impl QueryInputs {
    pub fn new(g: &KnowledgeGraph, query: &Fact, mode: FeatureMode, max_paths_per_pair: usize) -> Self {
        if !mode.uses_learned() {
            return QueryInputs { query: *query, from_source: BTreeMap::new(), from_target: BTreeMap::new() };
        }
        let cfg = EnumConfig { max_candidates: 0, max_paths_per_pair };
        let (s, t) = query.endpoints();
        QueryInputs { query: *query, from_source: paths_from(g, s, &cfg), from_target: paths_from(g, t, &cfg) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Token {
    Entity(EntityId),
    Predicate(PredicateId, bool),
}

fn path_tokens(p: &Path) -> Vec<Token> {
    let mut tokens = Vec::with_capacity(2 * p.steps().len() + 1);
    for s in p.steps() {
        tokens.push(Token::Entity(s.entity));
        tokens.push(Token::Predicate(s.predicate, s.inverse));
    }
    tokens.push(Token::Entity(p.end()));
    tokens
}

/// Model rows for the graph's types and predicates, matched by name.
struct Binding {
    type_rows: Vec<usize>,
    unknown_type: usize,
    pred_rows: Vec<Option<usize>>,
}

/// Builds encoder nodes on one tape, sharing RNN states across common
/// sequence prefixes and path sums across candidates of a query.
struct Encoder<'a> {
    model: &'a RankerModel,
    g: &'a KnowledgeGraph,
    binding: &'a Binding,
    dropout: Option<&'a mut StreamRng>,
    inputs: HashMap<Token, Var>,
    states: HashMap<(Option<Var>, Token), Var>,
    dest_sums: HashMap<(usize, EntityId), Option<Var>>,
}

impl<'a> Encoder<'a> {
    fn input(&mut self, tape: &mut Tape, tok: Token) -> Var {
        if let Some(v) = self.inputs.get(&tok) {
            return *v;
        }
        let d = self.model.config.d_z;
        let v = match tok {
            Token::Entity(e) => {
                let mut rows: Vec<usize> = self
                    .g
                    .top_k_types(e, MAX_ENTITY_TYPES)
                    .into_iter()
                    .map(|z| self.binding.type_rows[z.index()])
                    .collect();
                if rows.is_empty() {
                    rows.push(self.binding.unknown_type);
                }
                tape.rows_sum(W_Z, rows)
            }
            Token::Predicate(p, inverse) => match self.binding.pred_rows.get(p.index()).copied().flatten() {
                Some(r) => tape.rows_sum(if inverse { W_PI } else { W_P }, vec![r]),
                None => tape.constant(vec![0.0; d]),
            },
        };
        self.inputs.insert(tok, v);
        v
    }

    fn step(&mut self, tape: &mut Tape, prev: Option<Var>, tok: Token) -> Var {
        if let Some(v) = self.states.get(&(prev, tok)) {
            return *v;
        }
        let x = self.input(tape, tok);
        let mut pre = tape.matvec(W_XH, x);
        if let Some(h) = prev {
            let rec = tape.matvec(W_HH, h);
            pre = tape.add(pre, rec);
        }
        let h = tape.tanh(pre);
        self.states.insert((prev, tok), h);
        h
    }

    fn encode(&mut self, tape: &mut Tape, p: &Path) -> Var {
        let mut h = None;
        for tok in path_tokens(p) {
            h = Some(self.step(tape, h, tok));
        }
        let h = h.expect("paths are non-empty");
        self.apply_dropout(tape, h)
    }

    fn apply_dropout(&mut self, tape: &mut Tape, h: Var) -> Var {
        let rate = self.model.config.dropout_rate;
        match self.dropout.as_deref_mut() {
            Some(rng) if rate > 0.0 => {
                let keep = 1.0 / (1.0 - rate);
                let mask = (0..self.model.config.rnn_size)
                    .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
                    .collect();
                tape.mask(h, mask)
            }
            _ => h,
        }
    }

    fn dest_sum(&mut self, tape: &mut Tape, origin: usize, groups: &BTreeMap<EntityId, Vec<Path>>, dest: EntityId) -> Option<Var> {
        if let Some(v) = self.dest_sums.get(&(origin, dest)) {
            return *v;
        }
        let parts: Vec<Var> = groups.get(&dest).into_iter().flatten().map(|p| self.encode(tape, p)).collect();
        let v = match parts.len() {
            0 => None,
            1 => Some(parts[0]),
            _ => Some(tape.sum(parts)),
        };
        self.dest_sums.insert((origin, dest), v);
        v
    }

    /// Sum of path encodings from one query endpoint to the candidate's entities.
    fn path_set(&mut self, tape: &mut Tape, origin: usize, q: &QueryInputs, c: &Fact) -> Var {
        let (groups, from) = if origin == 0 {
            (&q.from_source, q.query.source())
        } else {
            (&q.from_target, q.query.target())
        };
        let parts: Vec<Var> = c
            .entity_set()
            .into_iter()
            .filter(|e| *e != from)
            .filter_map(|e| self.dest_sum(tape, origin, groups, e))
            .collect();
        match parts.len() {
            0 => tape.constant(vec![0.0; self.model.config.rnn_size]),
            1 => parts[0],
            _ => tape.sum(parts),
        }
    }
}

impl RankerModel {
    /// Fresh model with vocabularies taken from `g` and uniform initial weights.
    pub fn new(g: &KnowledgeGraph, config: RankerConfig, relationships: RelVocab, feature_len: usize) -> Result<Self> {
        config.validate()?;
        let mut types: Vec<String> = g.type_names().map(str::to_string).collect();
        if !types.iter().any(|t| t == UNKNOWN_TYPE) {
            types.push(UNKNOWN_TYPE.to_string());
        }
        let predicates: Vec<String> = g.predicate_ids().map(|p| g.predicate_name(p).to_string()).collect();
        let input = Self::input_dim(&config, feature_len)?;
        let (d, r) = (config.d_z, config.rnn_size);
        let mut names = vec!["W_z", "W_p", "W_pi", "W_hh", "W_xh"].into_iter().map(String::from).collect::<Vec<_>>();
        let mut shapes = vec![(types.len(), d), (predicates.len(), d), (predicates.len(), d), (r, r), (r, d)];
        let mut width = input;
        for l in 0..config.alpha {
            names.push(format!("mlp_{l}_kernel"));
            shapes.push((config.beta, width));
            names.push(format!("mlp_{l}_bias"));
            shapes.push((1, config.beta));
            width = config.beta;
        }
        names.push("out_kernel".into());
        shapes.push((1, width));
        names.push("out_bias".into());
        shapes.push((1, 1));

        let mut rng = substream(config.seed, "init");
        let dist = Uniform::new_inclusive(-INIT_SCALE, INIT_SCALE);
        let params: Vec<Tensor> = shapes
            .iter()
            .map(|&(rows, cols)| Tensor { rows, cols, data: (0..rows * cols).map(|_| dist.sample(&mut rng)).collect() })
            .collect();
        let zeros: Vec<Tensor> = shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect();
        Ok(RankerModel {
            format: CHECKPOINT_FORMAT,
            config,
            types,
            predicates,
            relationships,
            feature_len,
            feature_shift: vec![0.0; feature_len],
            feature_scale: vec![1.0; feature_len],
            names,
            params,
            adam: AdamState { step: 0, m: zeros.clone(), v: zeros },
        })
    }

    fn input_dim(config: &RankerConfig, feature_len: usize) -> Result<usize> {
        let learned = 3 * config.rnn_size;
        let dim = match config.feature_mode {
            FeatureMode::Learned => learned,
            FeatureMode::HandCrafted => feature_len,
            FeatureMode::Full => learned + feature_len,
        };
        if dim == 0 {
            return Err(Error::Config("hand-crafted mode needs a non-empty feature layout".into()));
        }
        Ok(dim)
    }

    pub fn mode(&self) -> FeatureMode {
        self.config.feature_mode
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_kernel(&self, i: usize) -> bool {
        self.names[i].ends_with("_kernel")
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Shapes must agree with the config and all values must be finite.
    pub fn check(&self) -> Result<()> {
        let mismatch = |m: String| Err(Error::DimensionMismatch(m));
        if self.format != CHECKPOINT_FORMAT {
            return mismatch(format!("checkpoint format {} (expected {CHECKPOINT_FORMAT})", self.format));
        }
        self.config.validate()?;
        let (d, r) = (self.config.d_z, self.config.rnn_size);
        let input = Self::input_dim(&self.config, self.feature_len)?;
        let mut expected = vec![
            (self.types.len(), d),
            (self.predicates.len(), d),
            (self.predicates.len(), d),
            (r, r),
            (r, d),
        ];
        let mut width = input;
        for _ in 0..self.config.alpha {
            expected.push((self.config.beta, width));
            expected.push((1, self.config.beta));
            width = self.config.beta;
        }
        expected.push((1, width));
        expected.push((1, 1));
        let got: Vec<(usize, usize)> = self.params.iter().map(|t| (t.rows, t.cols)).collect();
        if got != expected || self.names.len() != got.len() {
            return mismatch(format!("parameter shapes {got:?} do not match config {expected:?}"));
        }
        if self.params.iter().any(|t| t.data.len() != t.rows * t.cols) {
            return mismatch("tensor data length disagrees with its shape".into());
        }
        if self.feature_shift.len() != self.feature_len || self.feature_scale.len() != self.feature_len {
            return mismatch("feature standardization length".into());
        }
        if self.feature_len != 0 && self.feature_len != crate::features::BASE_FEATURES + self.relationships.len() {
            return mismatch("feature length disagrees with relationship vocabulary".into());
        }
        if self.params.iter().any(|t| t.data.iter().any(|v| !v.is_finite())) {
            return Err(Error::Invariant("non-finite model parameter".into()));
        }
        Ok(())
    }

    fn bind(&self, g: &KnowledgeGraph) -> Binding {
        let type_index: HashMap<&str, usize> = self.types.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let pred_index: HashMap<&str, usize> =
            self.predicates.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let unknown_type = type_index[UNKNOWN_TYPE];
        Binding {
            type_rows: g.type_names().map(|n| type_index.get(n).copied().unwrap_or(unknown_type)).collect(),
            unknown_type,
            pred_rows: g.predicate_ids().map(|p| pred_index.get(g.predicate_name(p)).copied()).collect(),
        }
    }

    fn encoder<'a>(&'a self, g: &'a KnowledgeGraph, binding: &'a Binding, dropout: Option<&'a mut StreamRng>) -> Encoder<'a> {
        Encoder {
            model: self,
            g,
            binding,
            dropout,
            inputs: HashMap::new(),
            states: HashMap::new(),
            dest_sums: HashMap::new(),
        }
    }

    pub fn embed_entity(&self, g: &KnowledgeGraph, e: EntityId) -> Vec<f64> {
        let binding = self.bind(g);
        let mut tape = Tape::new(&self.params);
        let mut enc = self.encoder(g, &binding, None);
        let v = enc.input(&mut tape, Token::Entity(e));
        tape.value(v).to_vec()
    }

    /// Last RNN state over a path's alternating entity/predicate sequence.
    pub fn encode_path(&self, g: &KnowledgeGraph, p: &Path) -> Vec<f64> {
        let binding = self.bind(g);
        let mut tape = Tape::new(&self.params);
        let mut enc = self.encoder(g, &binding, None);
        let v = enc.encode(&mut tape, p);
        tape.value(v).to_vec()
    }

    pub fn encode_fact(&self, g: &KnowledgeGraph, f: &Fact) -> Vec<f64> {
        self.encode_path(g, &Path::from_fact(f))
    }

    pub fn encode_path_set(&self, g: &KnowledgeGraph, set: &PathSet) -> Vec<f64> {
        let binding = self.bind(g);
        let mut tape = Tape::new(&self.params);
        let mut enc = self.encoder(g, &binding, None);
        let parts: Vec<Var> = set.paths.iter().map(|p| enc.encode(&mut tape, p)).collect();
        if parts.is_empty() {
            return vec![0.0; self.config.rnn_size];
        }
        let v = tape.sum(parts);
        tape.value(v).to_vec()
    }

    fn check_features(&self, x: &[f64]) -> Result<()> {
        if self.mode().uses_handcrafted() && x.len() != self.feature_len {
            return Err(Error::DimensionMismatch(format!(
                "feature vector has {} values, model expects {}",
                x.len(),
                self.feature_len
            )));
        }
        Ok(())
    }

    fn score_var(&self, tape: &mut Tape, enc: &mut Encoder, q: &QueryInputs, c: &Fact, x: &[f64]) -> Var {
        let mut parts = Vec::with_capacity(4);
        if self.mode().uses_learned() {
            parts.push(enc.encode(tape, &Path::from_fact(&q.query)));
            parts.push(enc.path_set(tape, 0, q, c));
            parts.push(enc.path_set(tape, 1, q, c));
        }
        if self.mode().uses_handcrafted() {
            let z = x
                .iter()
                .zip(self.feature_shift.iter().zip(&self.feature_scale))
                .map(|(v, (m, s))| (v - m) * s)
                .collect();
            parts.push(tape.constant(z));
        }
        let mut h = tape.concat(parts);
        for l in 0..self.config.alpha {
            let a = tape.matvec(MLP_START + 2 * l, h);
            let a = tape.add_bias(a, MLP_START + 2 * l + 1);
            h = tape.relu(a);
        }
        let out = MLP_START + 2 * self.config.alpha;
        let o = tape.matvec(out, h);
        let o = tape.add_bias(o, out + 1);
        tape.sigmoid(o)
    }

    /// Score every candidate of one query on a shared tape.
    pub fn score_candidates(
        &self,
        g: &KnowledgeGraph,
        q: &QueryInputs,
        candidates: &[Fact],
        features: &[Vec<f64>],
    ) -> Result<Vec<f64>> {
        if self.mode().uses_handcrafted() && features.len() != candidates.len() {
            return Err(Error::LengthMismatch(features.len(), candidates.len()));
        }
        let binding = self.bind(g);
        let mut tape = Tape::new(&self.params);
        let mut enc = self.encoder(g, &binding, None);
        let mut scores = Vec::with_capacity(candidates.len());
        for (i, c) in candidates.iter().enumerate() {
            let x: &[f64] = features.get(i).map_or(&[], Vec::as_slice);
            self.check_features(x)?;
            let v = self.score_var(&mut tape, &mut enc, q, c, x);
            scores.push(tape.value(v)[0]);
        }
        Ok(scores)
    }

    pub fn score(&self, g: &KnowledgeGraph, fq: &Fact, fc: &Fact, x: &[f64]) -> Result<f64> {
        let q = QueryInputs::new(g, fq, self.mode(), self.config.max_paths_per_pair);
        Ok(self.score_candidates(g, &q, std::slice::from_ref(fc), &[x.to_vec()])?[0])
    }

    fn check_batch(batch: &[BatchItem]) -> Result<Fact> {
        let first = batch.first().ok_or(Error::EmptyBatch)?.query;
        if batch.iter().any(|b| b.query != first) {
            return Err(Error::MixedQueryBatch);
        }
        Ok(first)
    }

    pub fn batch_loss(&self, g: &KnowledgeGraph, batch: &[BatchItem]) -> Result<f64> {
        let query = Self::check_batch(batch)?;
        let q = QueryInputs::new(g, &query, self.mode(), self.config.max_paths_per_pair);
        self.query_loss(g, &q, batch)
    }

    /// Forward-only `batch_loss` with the query's paths already gathered.
    pub fn query_loss(&self, g: &KnowledgeGraph, q: &QueryInputs, batch: &[BatchItem]) -> Result<f64> {
        let binding = self.bind(g);
        let mut tape = Tape::new(&self.params);
        let (labels, outs) = self.forward_batch(&mut tape, g, &binding, q, batch, None)?;
        let scores: Vec<f64> = outs.iter().map(|v| tape.value(*v)[0]).collect();
        Ok(super::pairwise_loss(&labels, &scores))
    }

    /// Loss and gradient of `batch_loss` with respect to every parameter tensor.
    pub fn batch_loss_grad(&self, g: &KnowledgeGraph, batch: &[BatchItem]) -> Result<(f64, Vec<Tensor>)> {
        let query = Self::check_batch(batch)?;
        let q = QueryInputs::new(g, &query, self.mode(), self.config.max_paths_per_pair);
        self.loss_and_grad(g, &q, batch, None)
    }

    fn forward_batch(
        &self,
        tape: &mut Tape,
        g: &KnowledgeGraph,
        binding: &Binding,
        q: &QueryInputs,
        batch: &[BatchItem],
        dropout: Option<&mut StreamRng>,
    ) -> Result<(Vec<f64>, Vec<Var>)> {
        if Self::check_batch(batch)? != q.query {
            return Err(Error::MixedQueryBatch);
        }
        let mut enc = self.encoder(g, binding, dropout);
        let mut outs = Vec::with_capacity(batch.len());
        for item in batch {
            self.check_features(&item.features)?;
            outs.push(self.score_var(tape, &mut enc, q, &item.candidate, &item.features));
        }
        Ok((batch.iter().map(|b| b.label).collect(), outs))
    }

    pub(crate) fn loss_and_grad(
        &self,
        g: &KnowledgeGraph,
        q: &QueryInputs,
        batch: &[BatchItem],
        dropout: Option<&mut StreamRng>,
    ) -> Result<(f64, Vec<Tensor>)> {
        let binding = self.bind(g);
        let mut tape = Tape::new(&self.params);
        let (labels, outs) = self.forward_batch(&mut tape, g, &binding, q, batch, dropout)?;
        let scores: Vec<f64> = outs.iter().map(|v| tape.value(*v)[0]).collect();
        let loss = super::pairwise_loss(&labels, &scores);
        let grad = super::pairwise_loss_grad(&labels, &scores);
        let seeds: Vec<(Var, Vec<f64>)> = outs.into_iter().zip(grad).map(|(v, d)| (v, vec![d])).collect();
        Ok((loss, tape.backward(&seeds)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: RankerModel = serde_json::from_str(text)?;
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: &FsPath) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
