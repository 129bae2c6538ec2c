//! Classification error and support-recovery scores.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::types::Label;

pub fn misclassification_rate(predicted: &[Label], truth: &[Label]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return domain("no labels to score");
    }
    let wrong = predicted.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / truth.len() as f64)
}

/// True and estimated edge sets over a universe of `universe` edges.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportComparison {
    truth: BTreeSet<usize>,
    estimate: BTreeSet<usize>,
    universe: usize,
}

impl SupportComparison {
    pub fn new(
        truth: impl IntoIterator<Item = usize>,
        estimate: impl IntoIterator<Item = usize>,
        universe: usize,
    ) -> Result<Self> {
        let truth: BTreeSet<usize> = truth.into_iter().collect();
        let estimate: BTreeSet<usize> = estimate.into_iter().collect();
        if truth.iter().chain(&estimate).any(|&k| k >= universe) {
            return domain(format!("edge outside universe of {universe}"));
        }
        Ok(Self {
            truth,
            estimate,
            universe,
        })
    }

    pub fn truth(&self) -> &BTreeSet<usize> {
        &self.truth
    }

    pub fn estimate(&self) -> &BTreeSet<usize> {
        &self.estimate
    }

    pub fn universe(&self) -> usize {
        self.universe
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportMetrics {
    pub tpr: f64,
    pub tnr: f64,
    pub tdr: f64,
}

/// TPR = |T∩E|/|T|, TNR = |Tᶜ∩Eᶜ|/|Tᶜ|, TDR = |T∩E|/|E|.
///
/// An empty denominator gives 1 for TPR and TNR. An empty estimate gives
/// TDR 1 when the truth is empty too and 0 otherwise.
pub fn support_metrics(cmp: &SupportComparison) -> SupportMetrics {
    let t = cmp.truth.len();
    let e = cmp.estimate.len();
    let tp = cmp.truth.intersection(&cmp.estimate).count();
    let negatives = cmp.universe - t;
    let tn = negatives - (e - tp);
    let ratio = |num: usize, den: usize, empty: f64| if den == 0 { empty } else { num as f64 / den as f64 };
    SupportMetrics {
        tpr: ratio(tp, t, 1.0),
        tnr: ratio(tn, negatives, 1.0),
        tdr: ratio(tp, e, if t == 0 { 1.0 } else { 0.0 }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    /// Count threshold: the estimate is {count > tau}.
    pub tau: usize,
    pub recall: f64,
    pub precision: f64,
}

/// Precision/recall of {θ > τ} for τ = B, B−1, …, 0. Thresholds with an
/// empty estimate are skipped; recall is non-decreasing along the result.
pub fn pr_curve(theta_counts: &[usize], truth: &BTreeSet<usize>, replicates: usize) -> Vec<PrPoint> {
    let universe = theta_counts.len();
    (0..=replicates)
        .rev()
        .filter_map(|tau| {
            let est = (0..universe).filter(|&k| theta_counts[k] > tau);
            let cmp = SupportComparison::new(truth.iter().copied(), est, universe).ok()?;
            if cmp.estimate.is_empty() {
                return None;
            }
            let m = support_metrics(&cmp);
            Some(PrPoint {
                tau,
                recall: m.tpr,
                precision: m.tdr,
            })
        })
        .collect()
}

/// Precision/recall of {score ≥ t} over every distinct positive score t,
/// from the largest down. `tau` holds the rank of the threshold.
pub fn score_pr_curve(scores: &[f64], truth: &BTreeSet<usize>) -> Vec<PrPoint> {
    let mut levels: Vec<f64> = scores.iter().copied().filter(|&s| s > 0.0).collect();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();
    let universe = scores.len();
    levels
        .iter()
        .enumerate()
        .map(|(rank, &t)| {
            let est = (0..universe).filter(|&k| scores[k] >= t);
            let cmp = SupportComparison::new(truth.iter().copied(), est, universe).expect("indices in range");
            let m = support_metrics(&cmp);
            PrPoint {
                tau: rank,
                recall: m.tpr,
                precision: m.tdr,
            }
        })
        .collect()
}

/// Trapezoidal area under a recall-ordered curve, anchored at recall 0
/// with the first point's precision.
pub fn pr_auc(points: &[PrPoint]) -> f64 {
    let Some(first) = points.first() else {
        return 0.0;
    };
    let mut area = first.recall * first.precision;
    for w in points.windows(2) {
        area += (w[1].recall - w[0].recall) * 0.5 * (w[0].precision + w[1].precision);
    }
    area
}
