//! Neural fact-contextualization ranker: type-based entity embeddings, an
//! RNN over fact and path sequences, summed path sets and an MLP head.

pub mod autodiff;
mod model;
mod train;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fact::Fact;
use crate::features::{FeatureExtractor, FeatureLayout, FeatureTable};
use crate::kg::KnowledgeGraph;

pub use model::{BatchItem, QueryInputs, RankerModel, CHECKPOINT_FORMAT, MAX_ENTITY_TYPES};
pub use train::{
    order_by_score, pairwise_loss, pairwise_loss_grad, rank, train, validation_ndcg, EpochLog, TrainingLog,
};

/// Which inputs reach the MLP head.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureMode {
    /// Learned (encoder) features only.
    #[serde(rename = "LF")]
    Learned,
    /// Hand-crafted features only.
    #[serde(rename = "HF")]
    HandCrafted,
    #[default]
    #[serde(rename = "NFCM")]
    Full,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 3] = [FeatureMode::Full, FeatureMode::Learned, FeatureMode::HandCrafted];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Learned => "LF",
            FeatureMode::HandCrafted => "HF",
            FeatureMode::Full => "NFCM",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LF" => Ok(FeatureMode::Learned),
            "HF" => Ok(FeatureMode::HandCrafted),
            "NFCM" | "FULL" => Ok(FeatureMode::Full),
            _ => Err(Error::Config(format!("unknown feature mode `{s}` (expected LF, HF or NFCM)"))),
        }
    }

    pub fn uses_learned(self) -> bool {
        self != FeatureMode::HandCrafted
    }

    pub fn uses_handcrafted(self) -> bool {
        self != FeatureMode::Learned
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankerConfig {
    pub d_z: usize,
    pub d_p: usize,
    pub rnn_size: usize,
    pub dropout_rate: f64,
    /// Hidden layers in the MLP head.
    pub alpha: usize,
    /// Width of each hidden layer.
    pub beta: usize,
    /// Negatives sampled per batch.
    pub k: usize,
    pub learning_rate: f64,
    pub l2_mlp_kernel: f64,
    pub seed: u64,
    pub epochs: usize,
    pub feature_mode: FeatureMode,
    /// Cap on paths between one pair of entities; 0 keeps all.
    pub max_paths_per_pair: usize,
    /// Rescale hand-crafted features to zero mean and unit variance on the
    /// training split before the MLP. Off feeds the raw values.
    pub standardize_features: bool,
}

impl Default for RankerConfig {
    fn default() -> Self {
        RankerConfig {
            d_z: 32,
            d_p: 32,
            rnn_size: 32,
            dropout_rate: 0.0,
            alpha: 1,
            beta: 50,
            k: 10,
            learning_rate: 1e-3,
            l2_mlp_kernel: 0.0,
            seed: 0,
            epochs: 30,
            feature_mode: FeatureMode::Full,
            max_paths_per_pair: 25,
            standardize_features: false,
        }
    }
}

impl RankerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (name, v) in [("d_z", self.d_z), ("d_p", self.d_p), ("rnn_size", self.rnn_size), ("beta", self.beta)] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.d_z != self.d_p {
            return bad(format!("d_z ({}) must equal d_p ({})", self.d_z, self.d_p));
        }
        if self.alpha == 0 {
            return bad("alpha must be at least 1".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.l2_mlp_kernel >= 0.0 && self.l2_mlp_kernel.is_finite()) {
            return bad(format!("l2_mlp_kernel {} must be non-negative", self.l2_mlp_kernel));
        }
        Ok(())
    }
}

/// Supplies hand-crafted feature vectors for a query's candidates.
pub trait FeatureSource: Sync {
    fn layout(&self) -> &FeatureLayout;
    fn query_features(&self, query: &Fact, candidates: &[Fact]) -> Result<Vec<Vec<f64>>>;
}

impl FeatureSource for FeatureExtractor<'_> {
    fn layout(&self) -> &FeatureLayout {
        FeatureExtractor::layout(self)
    }

    fn query_features(&self, query: &Fact, candidates: &[Fact]) -> Result<Vec<Vec<f64>>> {
        let ctx = self.query_context(query);
        Ok(candidates.iter().map(|c| self.extract(&ctx, c).values).collect())
    }
}

/// Precomputed feature rows, e.g. read back from a feature file.
pub struct FeatureLookup {
    layout: FeatureLayout,
    rows: HashMap<(Fact, Fact), Vec<f64>>,
}

impl FeatureLookup {
    pub fn new(layout: FeatureLayout, rows: HashMap<(Fact, Fact), Vec<f64>>) -> Self {
        FeatureLookup { layout, rows }
    }

    pub fn from_table(g: &KnowledgeGraph, layout: FeatureLayout, table: FeatureTable) -> Result<Self> {
        let mut rows = HashMap::with_capacity(table.len());
        for ((q, c), v) in table {
            rows.insert((Fact::parse(g, &q)?, Fact::parse(g, &c)?), v);
        }
        Ok(FeatureLookup { layout, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl FeatureSource for FeatureLookup {
    fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    fn query_features(&self, query: &Fact, candidates: &[Fact]) -> Result<Vec<Vec<f64>>> {
        candidates
            .iter()
            .map(|c| {
                self.rows
                    .get(&(*query, *c))
                    .cloned()
                    .ok_or_else(|| Error::Malformed("feature file lacks a (query, candidate) pair in use".into()))
            })
            .collect()
    }
}
