//! Stratified-bootstrap ensemble of penalized logistic fits.
//!
//! Each replicate resamples cases and controls separately, tunes and fits a
//! model on the resample, predicts the held-out test subjects and records
//! which edges received a nonzero coefficient. Replicate `b` draws all of
//! its randomness from `(master_seed, b)`, so the result does not depend on
//! scheduling.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::plr::{cv_tune, fit_plr, PlrData, PlrFitSettings, PlrModel};
use crate::seed::{rng_from, stream, Rng};
use crate::types::{FeatureTable, Label};

/// How (λ, α) is chosen for each replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TuningMode {
    /// Cross-validate inside every bootstrap sample.
    #[default]
    PerReplicate,
    /// Cross-validate once on the full training set and reuse the pair.
    Once,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Screening {
    pub keep_fraction: f64,
    /// Re-screen on every bootstrap sample instead of once up front.
    pub per_replicate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSettings {
    pub replicates: usize,
    pub tuning: TuningMode,
    pub screening: Option<Screening>,
    pub plr: PlrFitSettings,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        Self {
            replicates: 200,
            tuning: TuningMode::PerReplicate,
            screening: None,
            plr: PlrFitSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub replicates: usize,
    pub master_seed: u64,
    /// Region count of the edge universe.
    pub p: usize,
    pub models: Vec<PlrModel>,
    pub test_ids: Vec<String>,
    /// Per replicate, the predicted label of every test subject.
    pub predictions: Vec<Vec<u8>>,
    /// Per test subject, how many replicates predicted label 1.
    pub votes: Vec<usize>,
    /// Per edge, how many replicates gave it a nonzero coefficient.
    pub theta_counts: Vec<usize>,
    /// Edges kept by up-front screening, if any.
    pub active_set: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferentialNetwork {
    pub tau: usize,
    /// (i, j, count), 0-based regions with i < j.
    pub edges: Vec<(usize, usize, usize)>,
}

fn screening_count(keep_fraction: f64, d: usize) -> usize {
    ((keep_fraction * d as f64 + 1e-9).floor() as usize).clamp(1, d.max(1))
}

/// Ranks edges by |mean₁ − mean₀| / pooled sd and keeps the top
/// `floor(keep_fraction·d)` (at least one). Returns ascending edge
/// positions. Zero-variance edges rank last; ties keep index order.
pub fn screen_features(w: &nalgebra::DMatrix<f64>, z: &[f64], keep_fraction: f64) -> Result<Vec<usize>> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return domain(format!("keep fraction {keep_fraction} outside (0,1]"));
    }
    let n = z.len();
    if n < 4 || w.nrows() != n {
        return domain("screening needs at least 4 subjects and matching rows");
    }
    let n1 = z.iter().filter(|&&v| v == 1.0).count();
    let n0 = n - n1;
    if n1 < 2 || n0 < 2 {
        return domain("screening needs at least two subjects per group");
    }
    let d = w.ncols();
    let scores: Vec<f64> = (0..d)
        .map(|j| {
            let col = w.column(j);
            let (mut s1, mut s0) = (0.0, 0.0);
            for (x, &zk) in col.iter().zip(z) {
                if zk == 1.0 {
                    s1 += x;
                } else {
                    s0 += x;
                }
            }
            let (m1, m0) = (s1 / n1 as f64, s0 / n0 as f64);
            let mut ss = 0.0;
            for (x, &zk) in col.iter().zip(z) {
                let c = if zk == 1.0 { x - m1 } else { x - m0 };
                ss += c * c;
            }
            let pooled = (ss / (n - 2) as f64).sqrt();
            if pooled > 0.0 {
                (m1 - m0).abs() / pooled
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut keep = order[..screening_count(keep_fraction, d)].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

/// Row indices: n1 draws from the label-1 rows, then n2 from label-0.
pub fn stratified_bootstrap(labels: &[Label], rng: &mut Rng) -> Result<Vec<usize>> {
    let cases: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Case).collect();
    let controls: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Control).collect();
    if cases.is_empty() || controls.is_empty() {
        return domain("both groups must be nonempty");
    }
    let mut out = Vec::with_capacity(labels.len());
    for group in [&cases, &controls] {
        for _ in 0..group.len() {
            out.push(group[rng.random_range(0..group.len())]);
        }
    }
    Ok(out)
}

/// Full-universe PLR design from a feature table.
pub fn plr_data(table: &FeatureTable) -> Result<PlrData> {
    PlrData::new(
        table.confounders().clone(),
        table.edges().clone(),
        table.labels().iter().map(|l| l.as_f64()).collect(),
    )
}

/// The un-bootstrapped comparison model: one cross-validated fit on all
/// training data, screened the same way as the ensemble.
pub fn fit_single(train: &FeatureTable, settings: &EnsembleSettings, master_seed: u64) -> Result<PlrModel> {
    let mut data = plr_data(train)?;
    if let Some(s) = &settings.screening {
        let keep = screen_features(data.features(), data.labels(), s.keep_fraction)?;
        data = data.columns(&keep);
    }
    let mut rng = rng_from(master_seed, &[stream::BASELINE]);
    Ok(cv_tune(&data, &settings.plr, &mut rng)?.model)
}

pub fn fit_ensemble(
    train: &FeatureTable,
    test: Option<&FeatureTable>,
    settings: &EnsembleSettings,
    master_seed: u64,
) -> Result<EnsembleModel> {
    let b_count = settings.replicates;
    if b_count == 0 {
        return domain("need at least one replicate");
    }
    settings.plr.validate()?;
    if let Some(t) = test {
        if t.n_edges() != train.n_edges() || t.n_confounders() != train.n_confounders() {
            return Err(Error::Dimension(format!(
                "test table has {} edges / {} confounders, training has {} / {}",
                t.n_edges(),
                t.n_confounders(),
                train.n_edges(),
                train.n_confounders()
            )));
        }
    }
    let full = plr_data(train)?;
    let active_set = match &settings.screening {
        Some(s) if !s.per_replicate => Some(screen_features(full.features(), full.labels(), s.keep_fraction)?),
        _ => None,
    };
    let base = match &active_set {
        Some(keep) => full.columns(keep),
        None => full.clone(),
    };
    let fixed = match settings.tuning {
        TuningMode::Once => {
            let cv = cv_tune(&base, &settings.plr, &mut rng_from(master_seed, &[stream::FOLDS]))?;
            Some((cv.lambda, cv.alpha))
        }
        TuningMode::PerReplicate => None,
    };

    let fit_one = |b: usize| -> Result<PlrModel> {
        let mut rng = rng_from(master_seed, &[stream::BOOTSTRAP, b as u64]);
        let rows = stratified_bootstrap(train.labels(), &mut rng)?;
        let mut sample = base.rows(&rows);
        if let Some(s) = settings.screening.as_ref().filter(|s| s.per_replicate) {
            let keep = screen_features(sample.features(), sample.labels(), s.keep_fraction)?;
            sample = sample.columns(&keep);
        }
        match fixed {
            Some((lambda, alpha)) => fit_plr(&sample, lambda, alpha, &settings.plr),
            None => {
                let mut folds = rng_from(master_seed, &[stream::FOLDS, b as u64]);
                Ok(cv_tune(&sample, &settings.plr, &mut folds)?.model)
            }
        }
    };
    let results: Vec<Result<PlrModel>> = (0..b_count).into_par_iter().map(fit_one).collect();
    let mut models = Vec::with_capacity(b_count);
    for (b, r) in results.into_iter().enumerate() {
        models.push(r.map_err(|e| Error::Replicate {
            replicate: b,
            source: Box::new(e),
        })?);
    }

    let mut theta_counts = vec![0usize; train.n_edges()];
    for m in &models {
        for k in m.support() {
            theta_counts[k] += 1;
        }
    }
    let (test_ids, predictions, votes) = match test {
        Some(t) => {
            let rows: Vec<(Vec<f64>, Vec<f64>)> =
                (0..t.len()).map(|k| (t.confounder_row(k), t.edge_row(k))).collect();
            let predictions: Vec<Vec<u8>> = models
                .iter()
                .map(|m| {
                    rows.iter()
                        .map(|(q, w)| m.predict_proba_full(q, w).map(|p| u8::from(p > 0.5)))
                        .collect::<Result<Vec<u8>>>()
                })
                .collect::<Result<_>>()?;
            let mut votes = vec![0usize; t.len()];
            for pred in &predictions {
                for (v, &y) in votes.iter_mut().zip(pred) {
                    *v += y as usize;
                }
            }
            (t.ids().to_vec(), predictions, votes)
        }
        None => (Vec::new(), vec![Vec::new(); b_count], Vec::new()),
    };
    Ok(EnsembleModel {
        replicates: b_count,
        master_seed,
        p: train.edge_map().p(),
        models,
        test_ids,
        predictions,
        votes,
        theta_counts,
        active_set,
    })
}

impl EnsembleModel {
    /// Label 1 iff more than half the replicates voted for it.
    pub fn vote_classify(&self, subject: usize) -> Result<Label> {
        let v = *self
            .votes
            .get(subject)
            .ok_or_else(|| Error::Domain(format!("no test subject at index {subject}")))?;
        Ok(if 2 * v > self.replicates { Label::Case } else { Label::Control })
    }

    pub fn vote_labels(&self) -> Vec<Label> {
        (0..self.votes.len()).map(|k| self.vote_classify(k).expect("index in range")).collect()
    }

    /// Edges selected in more than `tau` replicates, most frequent first.
    pub fn differential_network(&self, tau: usize) -> DifferentialNetwork {
        let map = crate::types::EdgeIndexMap::new(self.p);
        let mut edges: Vec<(usize, usize, usize)> = self
            .theta_counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > tau)
            .map(|(k, &c)| {
                let (i, j) = map.pair(k).expect("edge index in range");
                (i, j, c)
            })
            .collect();
        edges.sort_by(|a, b| b.2.cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
        DifferentialNetwork { tau, edges }
    }

    pub fn default_tau(&self) -> usize {
        self.replicates / 2
    }

    /// (τ, number of edges with count > τ) for τ = 0..=B.
    pub fn scree_data(&self) -> Vec<(usize, usize)> {
        let mut hist = vec![0usize; self.replicates + 1];
        for &c in &self.theta_counts {
            hist[c.min(self.replicates)] += 1;
        }
        let mut above = 0;
        let mut out = vec![(0, 0); self.replicates + 1];
        for tau in (0..=self.replicates).rev() {
            out[tau] = (tau, above);
            above += hist[tau];
        }
        out
    }
}
