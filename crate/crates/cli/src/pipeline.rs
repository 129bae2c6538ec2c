//! One full simulated run: generate, extract features, fit the ensemble
//! and a single-fit baseline, and score both.

use std::collections::BTreeSet;

use anyhow::Result;
use serde::{Deserialize, Serialize};

use sdncmv_core::ensemble::{fit_ensemble, fit_single, EnsembleModel};
use sdncmv_core::evalmetrics::{
    misclassification_rate, pr_auc, pr_curve, score_pr_curve, support_metrics, PrPoint, SupportComparison,
    SupportMetrics,
};
use sdncmv_core::netstrength::{cohort_features, feature_table, ClimeSettings};
use sdncmv_core::plr::PlrModel;
use sdncmv_core::seed::{derive_seed, stream};
use sdncmv_core::synthgen::gen_scenario;
use sdncmv_core::{CohortDataset, FeatureTable, Label};

use crate::config::ReplicateConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: usize,
    pub seed: u64,
    pub tau: usize,
    pub misclassification: f64,
    pub baseline_misclassification: f64,
    pub support: SupportMetrics,
    pub baseline_support: SupportMetrics,
    pub pr_curve: Vec<PrPoint>,
    pub pr_auc: f64,
    pub baseline_pr_auc: f64,
    /// Subjects whose density target could not be met.
    pub unattainable_subjects: usize,
}

pub fn replication_seed(master: u64, replication: usize) -> u64 {
    derive_seed(master, &[stream::REPLICATION, replication as u64])
}

/// Features for a cohort, failing on any subject error. Also returns how
/// many subjects missed the density band.
pub fn features_strict(data: &CohortDataset, clime: &ClimeSettings) -> Result<(FeatureTable, usize)> {
    let feats = cohort_features(data, clime);
    let unattainable = feats
        .iter()
        .filter(|f| f.as_ref().is_ok_and(|f| !f.tuning.attainable))
        .count();
    Ok((feature_table(data, &feats)?, unattainable))
}

pub fn single_predictions(model: &PlrModel, table: &FeatureTable) -> Result<Vec<Label>> {
    (0..table.len())
        .map(|k| {
            let p = model.predict_proba_full(&table.confounder_row(k), &table.edge_row(k))?;
            Ok(if p > 0.5 { Label::Case } else { Label::Control })
        })
        .collect()
}

pub fn network_support(ensemble: &EnsembleModel, tau: usize) -> Vec<usize> {
    let map = sdncmv_core::EdgeIndexMap::new(ensemble.p);
    ensemble
        .differential_network(tau)
        .edges
        .iter()
        .map(|&(i, j, _)| map.index(i, j).expect("edge in range"))
        .collect()
}

pub fn run_replication(cfg: &ReplicateConfig, replication: usize) -> Result<ReplicationResult> {
    let seed = replication_seed(cfg.seed, replication);
    let scenario = sdncmv_core::synthgen::ScenarioConfig {
        seed,
        ..cfg.scenario
    };
    let sc = gen_scenario(&scenario)?;
    let (train, u_train) = features_strict(&sc.train, &cfg.clime)?;
    let (test, u_test) = features_strict(&sc.test, &cfg.clime)?;
    let ensemble = fit_ensemble(&train, Some(&test), &cfg.ensemble, seed)?;
    let single = fit_single(&train, &cfg.ensemble, seed)?;

    let tau = cfg.tau();
    let universe = train.n_edges();
    let truth: BTreeSet<usize> = sc.truth.support().into_iter().collect();
    let support = support_metrics(&SupportComparison::new(
        truth.iter().copied(),
        network_support(&ensemble, tau),
        universe,
    )?);
    let baseline_support = support_metrics(&SupportComparison::new(truth.iter().copied(), single.support(), universe)?);
    let curve = pr_curve(&ensemble.theta_counts, &truth, ensemble.replicates);
    let mut scores = vec![0.0; universe];
    for (&k, &b) in single.feature_index.iter().zip(&single.beta) {
        scores[k] = b.abs();
    }
    let baseline_curve = score_pr_curve(&scores, &truth);
    Ok(ReplicationResult {
        replication,
        seed,
        tau,
        misclassification: misclassification_rate(&ensemble.vote_labels(), test.labels())?,
        baseline_misclassification: misclassification_rate(&single_predictions(&single, &test)?, test.labels())?,
        support,
        baseline_support,
        pr_auc: pr_auc(&curve),
        pr_curve: curve,
        baseline_pr_auc: pr_auc(&baseline_curve),
        unattainable_subjects: u_train + u_test,
    })
}

/// Mean and standard error (sd / √n, sd with n − 1).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
