//! Graded and binary ranking metrics plus the paired t-test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

fn gain(grade: u8) -> f64 {
    (1u64 << grade) as f64 - 1.0
}

/// DCG over the first `k` grades, gain `2^g - 1`, discount `log2(rank + 1)`.
pub fn dcg_at(grades: &[u8], k: usize) -> f64 {
    grades.iter().take(k).enumerate().map(|(i, g)| gain(*g) / ((i + 2) as f64).log2()).sum()
}

/// NDCG@k with the ideal ordering drawn from `pool` (typically every judged
/// grade of the query). Zero when the pool holds nothing relevant.
pub fn ndcg_with_ideal(grades: &[u8], pool: &[u8], k: usize) -> f64 {
    let mut ideal = pool.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let best = dcg_at(&ideal, k);
    if best == 0.0 {
        0.0
    } else {
        dcg_at(grades, k) / best
    }
}

/// NDCG@k of a ranked list against its own ideal reordering.
pub fn ndcg_at(grades: &[u8], k: usize) -> f64 {
    ndcg_with_ideal(grades, grades, k)
}

/// Average precision over binary relevance in rank order; `total_relevant`
/// counts relevant items including any the list missed. `None` when nothing
/// is relevant.
pub fn average_precision(relevant: &[bool], total_relevant: usize) -> Option<f64> {
    let total = total_relevant.max(relevant.iter().filter(|r| **r).count());
    if total == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, r) in relevant.iter().enumerate() {
        if *r {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

/// Reciprocal rank of the first relevant item; 0 if the list misses every
/// relevant item, `None` when nothing is relevant at all.
pub fn reciprocal_rank(relevant: &[bool], total_relevant: usize) -> Option<f64> {
    match relevant.iter().position(|r| *r) {
        Some(i) => Some(1.0 / (i + 1) as f64),
        None if total_relevant > 0 => Some(0.0),
        None => None,
    }
}

/// Mean of the defined values; `None` if there are none.
pub fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.into_iter().flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    /// `None` when the differences have zero variance.
    pub t: Option<f64>,
    pub p: f64,
    pub n: usize,
    pub degenerate: bool,
}

/// Paired two-tailed t-test on per-query values `a[i]` vs `b[i]`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::TooFewObservations);
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Ok(TTest { t: None, p: if mean == 0.0 { 1.0 } else { 0.0 }, n, degenerate: true });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
    let p = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
    Ok(TTest { t: Some(t), p, n, degenerate: false })
}
