use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::autodiff::Tensor;
use super::model::{BatchItem, QueryInputs, RankerModel};
use super::{FeatureSource, RankerConfig};
use crate::error::{Error, Result};
use crate::eval::metrics::ndcg_at;
use crate::fact::Fact;
use crate::features::RelVocab;
use crate::kg::KnowledgeGraph;
use crate::rng::substream;
use crate::supervision::{QueryGroup, Split};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const SELECTION_DEPTH: usize = 5;

/// `(1/|B|) Σ_i Σ_j ((l_i - l_j) - (u_i - u_j))²` over all ordered pairs.
pub fn pairwise_loss(labels: &[f64], scores: &[f64]) -> f64 {
    let n = labels.len();
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = (labels[i] - labels[j]) - (scores[i] - scores[j]);
            total += d * d;
        }
    }
    total / n as f64
}

/// Derivative of `pairwise_loss` with respect to each score.
pub fn pairwise_loss_grad(labels: &[f64], scores: &[f64]) -> Vec<f64> {
    let n = labels.len();
    (0..n)
        .map(|i| {
            let s: f64 = (0..n).map(|j| (labels[i] - labels[j]) - (scores[i] - scores[j])).sum();
            -4.0 * s / n as f64
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_ndcg5: Option<f64>,
    pub selected: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub train_queries: usize,
    pub validation_queries: usize,
}

struct Prepared {
    inputs: QueryInputs,
    items: Vec<(Fact, u8)>,
    features: Vec<Vec<f64>>,
}

fn prepare(
    g: &KnowledgeGraph,
    groups: &[&QueryGroup],
    features: &dyn FeatureSource,
    cfg: &RankerConfig,
) -> Result<Vec<Prepared>> {
    groups
        .par_iter()
        .map(|grp| {
            let candidates: Vec<Fact> = grp.items.iter().map(|(f, _)| *f).collect();
            let feats = if cfg.feature_mode.uses_handcrafted() {
                features.query_features(&grp.query, &candidates)?
            } else {
                vec![Vec::new(); candidates.len()]
            };
            Ok(Prepared {
                inputs: QueryInputs::new(g, &grp.query, cfg.feature_mode, cfg.max_paths_per_pair),
                items: grp.items.clone(),
                features: feats,
            })
        })
        .collect()
}

fn fit_standardization(model: &mut RankerModel, prepared: &[Prepared]) {
    let n = model.feature_len;
    let rows: Vec<&Vec<f64>> = prepared.iter().flat_map(|p| &p.features).filter(|f| f.len() == n).collect();
    if rows.is_empty() || n == 0 {
        return;
    }
    let count = rows.len() as f64;
    for c in 0..n {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / count;
        let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / count;
        model.feature_shift[c] = mean;
        model.feature_scale[c] = if var > 1e-24 { 1.0 / var.sqrt() } else { 1.0 };
    }
}

fn adam_step(model: &mut RankerModel, grads: &[Tensor]) {
    let lr = model.config.learning_rate;
    let st = &mut model.adam;
    st.step += 1;
    let t = st.step as i32;
    let (c1, c2) = (1.0 - ADAM_BETA1.powi(t), 1.0 - ADAM_BETA2.powi(t));
    for (i, g) in grads.iter().enumerate() {
        let (m, v, w) = (&mut st.m[i].data, &mut st.v[i].data, &mut model.params[i].data);
        for j in 0..g.data.len() {
            let d = g.data[j];
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * d;
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * d * d;
            w[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Sort by score descending; equal scores fall back to the serialized fact.
pub fn order_by_score(g: &KnowledgeGraph, scored: Vec<(Fact, f64)>) -> Vec<(Fact, f64)> {
    let mut keyed: Vec<(String, Fact, f64)> = scored.into_iter().map(|(f, s)| (f.serialize(g), f, s)).collect();
    keyed.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
    keyed.into_iter().map(|(_, f, s)| (f, s)).collect()
}

fn prepared_ndcg(model: &RankerModel, g: &KnowledgeGraph, prepared: &[Prepared]) -> Result<f64> {
    let per_query: Vec<f64> = prepared
        .par_iter()
        .map(|p| {
            let candidates: Vec<Fact> = p.items.iter().map(|(f, _)| *f).collect();
            let scores = model.score_candidates(g, &p.inputs, &candidates, &p.features)?;
            let ranked = order_by_score(g, candidates.into_iter().zip(scores).collect());
            let label_of: std::collections::HashMap<Fact, u8> = p.items.iter().copied().collect();
            let grades: Vec<u8> = ranked.iter().map(|(f, _)| label_of[f]).collect();
            Ok(ndcg_at(&grades, SELECTION_DEPTH))
        })
        .collect::<Result<_>>()?;
    Ok(per_query.iter().sum::<f64>() / per_query.len().max(1) as f64)
}

/// Mean NDCG@5 of the model over the validation groups, against their labels.
pub fn validation_ndcg(
    model: &RankerModel,
    g: &KnowledgeGraph,
    groups: &[QueryGroup],
    features: &dyn FeatureSource,
) -> Result<f64> {
    let val: Vec<&QueryGroup> = groups.iter().filter(|q| q.split == Split::Validation).collect();
    prepared_ndcg(model, g, &prepare(g, &val, features, &model.config)?)
}

/// Train with pairwise batches per query; keep the epoch with the best
/// validation NDCG@5.
pub fn train(
    g: &KnowledgeGraph,
    groups: &[QueryGroup],
    features: &dyn FeatureSource,
    cfg: &RankerConfig,
) -> Result<(RankerModel, TrainingLog)> {
    cfg.validate()?;
    let layout = features.layout();
    let train_groups: Vec<&QueryGroup> =
        groups.iter().filter(|q| q.split == Split::Train && q.positives().next().is_some()).collect();
    if train_groups.is_empty() {
        return Err(Error::NoPositives);
    }
    let val_groups: Vec<&QueryGroup> = groups.iter().filter(|q| q.split == Split::Validation).collect();

    let mut model =
        RankerModel::new(g, cfg.clone(), RelVocab::new(layout.relationships.iter().cloned()), layout.length)?;
    let train_set = prepare(g, &train_groups, features, cfg)?;
    let val_set = prepare(g, &val_groups, features, cfg)?;
    if cfg.standardize_features && cfg.feature_mode.uses_handcrafted() {
        fit_standardization(&mut model, &train_set);
    }

    let mut sampling = substream(cfg.seed, "sampling");
    let mut dropout = substream(cfg.seed, "dropout");
    let mut log = TrainingLog {
        train_queries: train_set.len(),
        validation_queries: val_set.len(),
        ..Default::default()
    };
    let mut best: Option<(f64, RankerModel)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut sampling);
        let mut loss_sum = 0.0;
        for &qi in &order {
            let p = &train_set[qi];
            let pos: Vec<usize> = (0..p.items.len()).filter(|&i| p.items[i].1 > 0).collect();
            let neg: Vec<usize> = (0..p.items.len()).filter(|&i| p.items[i].1 == 0).collect();
            let chosen: Vec<usize> = if neg.len() <= cfg.k {
                neg
            } else {
                let mut pick: Vec<usize> = index::sample(&mut sampling, neg.len(), cfg.k).into_iter().map(|i| neg[i]).collect();
                pick.sort_unstable();
                pick
            };
            let batch: Vec<BatchItem> = pos
                .iter()
                .chain(&chosen)
                .map(|&i| BatchItem {
                    query: p.inputs.query,
                    candidate: p.items[i].0,
                    label: f64::from(p.items[i].1),
                    features: p.features[i].clone(),
                })
                .collect();
            let (loss, mut grads) = model.loss_and_grad(g, &p.inputs, &batch, Some(&mut dropout))?;
            if cfg.l2_mlp_kernel > 0.0 {
                for (i, grad) in grads.iter_mut().enumerate() {
                    if model.is_kernel(i) {
                        for (d, w) in grad.data.iter_mut().zip(&model.params[i].data) {
                            *d += cfg.l2_mlp_kernel * w;
                        }
                    }
                }
            }
            adam_step(&mut model, &grads);
            loss_sum += loss;
        }
        if model.params.iter().any(|t| t.data.iter().any(|v| !v.is_finite())) {
            return Err(Error::Invariant(format!("parameters diverged in epoch {epoch}")));
        }
        let val = if val_set.is_empty() { None } else { Some(prepared_ndcg(&model, g, &val_set)?) };
        let selected = match (&best, val) {
            (None, _) => true,
            (Some((b, _)), Some(v)) => v > *b,
            (Some(_), None) => true,
        };
        if selected {
            best = Some((val.unwrap_or(f64::NEG_INFINITY), model.clone()));
            log.best_epoch = epoch;
        }
        log::info!(
            "epoch {epoch}: loss {:.5}, validation ndcg@5 {}",
            loss_sum / order.len() as f64,
            val.map_or("-".to_string(), |v| format!("{v:.4}"))
        );
        log.epochs.push(EpochLog { epoch, train_loss: loss_sum / order.len() as f64, validation_ndcg5: val, selected });
    }
    let model = best.map(|(_, m)| m).unwrap_or(model);
    Ok((model, log))
}

/// Candidates ordered by model score.
pub fn rank(
    model: &RankerModel,
    g: &KnowledgeGraph,
    query: &Fact,
    candidates: &[Fact],
    features: &dyn FeatureSource,
) -> Result<Vec<(Fact, f64)>> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let feats = if model.mode().uses_handcrafted() {
        features.query_features(query, candidates)?
    } else {
        Vec::new()
    };
    let inputs = QueryInputs::new(g, query, model.mode(), model.config.max_paths_per_pair);
    let scores = model.score_candidates(g, &inputs, candidates, &feats)?;
    Ok(order_by_score(g, candidates.iter().copied().zip(scores).collect()))
}
