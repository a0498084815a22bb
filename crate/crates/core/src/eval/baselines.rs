//! Heuristic rankers: candidate informativeness (FI), average predicate
//! similarity (APS) and average entity similarity (AES).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fact::Fact;
use crate::features::{ent_type_sim, informativeness, GraphStats};
use crate::kg::KnowledgeGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Fi,
    Aps,
    Aes,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Fi, Baseline::Aps, Baseline::Aes];

    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::Fi => "fi",
            Baseline::Aps => "aps",
            Baseline::Aes => "aes",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fi" => Ok(Baseline::Fi),
            "aps" => Ok(Baseline::Aps),
            "aes" => Ok(Baseline::Aes),
            _ => Err(Error::Config(format!("unknown baseline `{s}`"))),
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn baseline_fi(g: &KnowledgeGraph, _fq: &Fact, fc: &Fact) -> Result<f64> {
    informativeness(g, fc)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn baseline_aps(stats: &GraphStats, fq: &Fact, fc: &Fact) -> f64 {
    let (pq, pc) = (fq.predicate_set(), fc.predicate_set());
    mean(pq.iter().flat_map(|a| pc.iter().map(move |b| stats.pred_coocc_sim(*a, *b))))
}

pub fn baseline_aes(g: &KnowledgeGraph, fq: &Fact, fc: &Fact) -> f64 {
    let non_cvt = |f: &Fact| f.entities().into_iter().filter(|e| !g.is_cvt(*e)).collect::<Vec<_>>();
    let (eq, ec) = (non_cvt(fq), non_cvt(fc));
    mean(eq.iter().flat_map(|a| ec.iter().map(move |b| ent_type_sim(g, *a, *b))))
}

/// Scores a candidate list with one baseline.
pub struct BaselineScorer<'g> {
    g: &'g KnowledgeGraph,
    stats: GraphStats,
}

impl<'g> BaselineScorer<'g> {
    pub fn new(g: &'g KnowledgeGraph) -> Self {
        BaselineScorer { g, stats: GraphStats::new(g) }
    }

    pub fn score(&self, method: Baseline, fq: &Fact, fc: &Fact) -> Result<f64> {
        Ok(match method {
            Baseline::Fi => baseline_fi(self.g, fq, fc)?,
            Baseline::Aps => baseline_aps(&self.stats, fq, fc),
            Baseline::Aes => baseline_aes(self.g, fq, fc),
        })
    }

    pub fn score_all(&self, method: Baseline, fq: &Fact, candidates: &[Fact]) -> Result<Vec<(Fact, f64)>> {
        candidates.iter().map(|c| Ok((*c, self.score(method, fq, c)?))).collect()
    }
}
