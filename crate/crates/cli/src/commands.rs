use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use sdncmv_core::ensemble::fit_ensemble;
use sdncmv_core::evalmetrics::{misclassification_rate, pr_curve, support_metrics, SupportComparison};
use sdncmv_core::netstrength::cohort_features;
use sdncmv_core::synthgen::gen_scenario;
use sdncmv_core::{EdgeIndexMap, FeatureTable};

use crate::args::{EvaluateArgs, FeaturesArgs, FitArgs, ReplicateArgs, SimulateArgs};
use crate::config::{ReplicateConfig, RunConfig, TableId};
use crate::formats::{self, float, FeatureLogRow, ModelArtifact, FORMAT_VERSION};
use crate::pipeline::{mean_se, network_support, run_replication, ReplicationResult};

/// Bootstrap replicates for `fit` when `--B` is absent.
pub const DEFAULT_FIT_REPLICATES: usize = 200;
/// Bootstrap replicates for `replicate` (desk scale).
pub const DEFAULT_REPLICATE_REPLICATES: usize = 100;
/// Screening fraction for `fit` on real data.
pub const DEFAULT_FIT_KEEP: f64 = 0.15;
/// Simulated runs use every edge unless asked otherwise.
pub const DEFAULT_REPLICATE_KEEP: f64 = 1.0;

/// What a command left for the exit code to report.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub subject_failures: usize,
}

pub fn simulate(args: &SimulateArgs) -> Result<Outcome> {
    let cfg = args.scenario.config(args.seed);
    let sc = gen_scenario(&cfg)?;
    formats::write_dataset(&args.out.join("train"), &sc.train, Some(args.seed), Some(&cfg))?;
    formats::write_dataset(&args.out.join("test"), &sc.test, Some(args.seed), Some(&cfg))?;
    formats::write_truth(&args.out.join("truth.tsv"), &sc.truth)?;
    println!(
        "wrote {} training and {} test subjects, {} differential edges to {}",
        sc.train.len(),
        sc.test.len(),
        sc.truth.edges().len(),
        args.out.display()
    );
    Ok(Outcome::default())
}

pub fn features(args: &FeaturesArgs) -> Result<Outcome> {
    let (data, _) = formats::read_dataset(&args.data)?;
    let settings = args.clime.settings();
    settings.validate()?;
    let results = cohort_features(&data, &settings);
    let mut log = Vec::with_capacity(results.len());
    let (mut ids, mut labels, mut conf, mut rows) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (k, (subject, res)) in data.subjects().iter().zip(&results).enumerate() {
        match res {
            Ok(f) => {
                log.push(FeatureLogRow {
                    id: subject.id().to_string(),
                    ok: true,
                    lambda: Some(f.tuning.lambda),
                    density: Some(f.estimate().density()),
                    attainable: Some(f.tuning.attainable),
                    message: String::new(),
                });
                ids.push(subject.id().to_string());
                labels.push(subject.label());
                if let Some(c) = data.confounders().get(k) {
                    conf.push(c.clone());
                }
                rows.push(f.features.clone());
            }
            Err(e) => {
                eprintln!("subject {}: {e}", subject.id());
                log.push(FeatureLogRow {
                    id: subject.id().to_string(),
                    ok: false,
                    lambda: None,
                    density: None,
                    attainable: None,
                    message: e.to_string(),
                });
            }
        }
    }
    let failures = log.iter().filter(|r| !r.ok).count();
    formats::write_feature_log(&args.out.join("features_log.tsv"), &log)?;
    ensure!(!rows.is_empty(), "no subject produced features");
    let table = FeatureTable::from_rows(ids, labels, &conf, &rows)?;
    formats::write_features(&args.out.join("features.tsv"), &table)?;
    println!(
        "{} subjects, {} edges, {} failed",
        table.len(),
        table.n_edges(),
        failures
    );
    Ok(Outcome {
        subject_failures: failures,
    })
}

#[derive(Debug, Serialize)]
struct FitReport {
    replicates: usize,
    tau: usize,
    differential_edges: usize,
    misclassification: Option<f64>,
}

pub fn fit(args: &FitArgs) -> Result<Outcome> {
    let train = formats::read_features(&args.train)?;
    let test = args.test.as_deref().map(formats::read_features).transpose()?;
    let plr = args.plr.settings();
    let settings = args
        .ensemble
        .settings(plr, DEFAULT_FIT_REPLICATES, DEFAULT_FIT_KEEP);
    let config = RunConfig {
        clime: None,
        ensemble: settings,
        tau: args.ensemble.tau,
        seed: args.seed,
    };
    let tau = config.tau();
    ensure!(tau <= config.ensemble.replicates, "tau {tau} exceeds B = {}", config.ensemble.replicates);
    let ensemble = fit_ensemble(&train, test.as_ref(), &config.ensemble, args.seed)?;
    let network = ensemble.differential_network(tau);
    formats::write_edges(&args.out.join("edges.tsv"), &network.edges)?;
    formats::write_scree(&args.out.join("scree.tsv"), &ensemble.scree_data())?;
    let misclassification = match &test {
        Some(t) => {
            let predicted = ensemble.vote_labels();
            let rows = (0..t.len())
                .map(|k| {
                    vec![
                        t.ids()[k].clone(),
                        ensemble.votes[k].to_string(),
                        float(ensemble.votes[k] as f64 / ensemble.replicates as f64),
                        predicted[k].as_u8().to_string(),
                        t.labels()[k].as_u8().to_string(),
                    ]
                })
                .collect();
            formats::write_rows(
                &args.out.join("predictions.tsv"),
                &["id", "votes", "share", "predicted", "label"],
                rows,
            )?;
            Some(misclassification_rate(&predicted, t.labels())?)
        }
        None => None,
    };
    let report = FitReport {
        replicates: ensemble.replicates,
        tau,
        differential_edges: network.edges.len(),
        misclassification,
    };
    formats::write_json_file(&args.out.join("fit_report.json"), &report)?;
    formats::write_model(
        &args.out.join("model.json"),
        &ModelArtifact {
            format_version: FORMAT_VERSION,
            config,
            ensemble,
        },
    )?;
    print!("{} differential edges at tau = {tau}", report.differential_edges);
    match misclassification {
        Some(m) => println!(", test misclassification {m}"),
        None => println!(),
    }
    Ok(Outcome::default())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<Outcome> {
    let artifact = formats::read_model(&args.model)?;
    let ens = &artifact.ensemble;
    let map = EdgeIndexMap::new(ens.p);
    let truth_edges = formats::read_truth(&args.truth)?;
    let mut truth = BTreeSet::new();
    for &(i, j, _) in &truth_edges {
        ensure!(j < ens.p, "truth edge ({}, {}) outside a model with p = {}", i + 1, j + 1, ens.p);
        truth.insert(map.index(i, j)?);
    }
    let tau = args.tau.unwrap_or_else(|| artifact.config.tau());
    ensure!(tau <= ens.replicates, "tau {tau} exceeds B = {}", ens.replicates);
    let m = support_metrics(&SupportComparison::new(truth.iter().copied(), network_support(ens, tau), map.len())?);
    formats::write_rows(
        &args.out.join("metrics.tsv"),
        &["tau", "tpr", "tnr", "tdr"],
        vec![vec![tau.to_string(), float(m.tpr), float(m.tnr), float(m.tdr)]],
    )?;
    formats::write_pr_curve(&args.out.join("pr_curve.tsv"), &pr_curve(&ens.theta_counts, &truth, ens.replicates))?;
    println!("tau {tau}: TPR {} TNR {} TDR {}", m.tpr, m.tnr, m.tdr);
    Ok(Outcome::default())
}

pub fn replicate_config(args: &ReplicateArgs) -> ReplicateConfig {
    ReplicateConfig {
        table: args.table,
        replications: args.replications,
        scenario: args.scenario.config(0),
        clime: args.clime.settings(),
        ensemble: args
            .ensemble
            .settings(args.plr.settings(), DEFAULT_REPLICATE_REPLICATES, DEFAULT_REPLICATE_KEEP),
        tau: args.ensemble.tau,
        seed: args.seed,
    }
}

#[derive(Debug, Serialize)]
struct Stat {
    mean: f64,
    se: f64,
}

fn stat(values: &[f64]) -> Stat {
    let (mean, se) = mean_se(values);
    Stat { mean, se }
}

#[derive(Debug, Serialize)]
struct Summary {
    table: TableId,
    completed: usize,
    failed: Vec<usize>,
    misclassification: Stat,
    baseline_misclassification: Stat,
    tpr: Stat,
    tnr: Stat,
    tdr: Stat,
    baseline_tpr: Stat,
    baseline_tnr: Stat,
    baseline_tdr: Stat,
    pr_auc: Stat,
    baseline_pr_auc: Stat,
    /// Share of replications where the ensemble TDR beats the baseline.
    tdr_wins: f64,
    pr_auc_wins: f64,
    unattainable_subjects: usize,
}

fn summarize(table: TableId, results: &[ReplicationResult], failed: Vec<usize>) -> Summary {
    let col = |f: &dyn Fn(&ReplicationResult) -> f64| -> Vec<f64> { results.iter().map(f).collect() };
    let share = |f: &dyn Fn(&ReplicationResult) -> bool| {
        results.iter().filter(|r| f(r)).count() as f64 / results.len().max(1) as f64
    };
    Summary {
        table,
        completed: results.len(),
        failed,
        misclassification: stat(&col(&|r| r.misclassification)),
        baseline_misclassification: stat(&col(&|r| r.baseline_misclassification)),
        tpr: stat(&col(&|r| r.support.tpr)),
        tnr: stat(&col(&|r| r.support.tnr)),
        tdr: stat(&col(&|r| r.support.tdr)),
        baseline_tpr: stat(&col(&|r| r.baseline_support.tpr)),
        baseline_tnr: stat(&col(&|r| r.baseline_support.tnr)),
        baseline_tdr: stat(&col(&|r| r.baseline_support.tdr)),
        pr_auc: stat(&col(&|r| r.pr_auc)),
        baseline_pr_auc: stat(&col(&|r| r.baseline_pr_auc)),
        tdr_wins: share(&|r| r.support.tdr > r.baseline_support.tdr),
        pr_auc_wins: share(&|r| r.pr_auc > r.baseline_pr_auc),
        unattainable_subjects: results.iter().map(|r| r.unattainable_subjects).sum(),
    }
}

fn pct(s: &Stat) -> String {
    format!("{:.1} ({:.1})", 100.0 * s.mean, 100.0 * s.se)
}

fn write_report(out: &Path, s: &Summary, results: &[ReplicationResult], replicates: usize) -> Result<()> {
    let (header, rows, text): (Vec<&str>, Vec<Vec<String>>, String) = match s.table {
        TableId::Table1 => (
            vec!["method", "misclassification_mean", "misclassification_se"],
            vec![
                vec!["SDNCMV".into(), float(s.misclassification.mean), float(s.misclassification.se)],
                vec!["PLR".into(), float(s.baseline_misclassification.mean), float(s.baseline_misclassification.se)],
            ],
            format!(
                "method\tmisclassification %\nSDNCMV\t{}\nPLR\t{}\n",
                pct(&s.misclassification),
                pct(&s.baseline_misclassification)
            ),
        ),
        TableId::Table2 => (
            vec!["method", "tpr_mean", "tpr_se", "tnr_mean", "tnr_se", "tdr_mean", "tdr_se"],
            [("SDNCMV", &s.tpr, &s.tnr, &s.tdr), ("PLR", &s.baseline_tpr, &s.baseline_tnr, &s.baseline_tdr)]
                .iter()
                .map(|(name, a, b, c)| {
                    vec![
                        name.to_string(),
                        float(a.mean),
                        float(a.se),
                        float(b.mean),
                        float(b.se),
                        float(c.mean),
                        float(c.se),
                    ]
                })
                .collect(),
            format!(
                "method\tTPR %\tTNR %\tTDR %\nSDNCMV\t{}\t{}\t{}\nPLR\t{}\t{}\t{}\n",
                pct(&s.tpr),
                pct(&s.tnr),
                pct(&s.tdr),
                pct(&s.baseline_tpr),
                pct(&s.baseline_tnr),
                pct(&s.baseline_tdr)
            ),
        ),
        TableId::Prcurve => {
            let mut rows = Vec::new();
            for tau in (0..=replicates).rev() {
                let pts: Vec<_> = results
                    .iter()
                    .filter_map(|r| r.pr_curve.iter().find(|p| p.tau == tau))
                    .collect();
                if pts.is_empty() {
                    continue;
                }
                let rec = stat(&pts.iter().map(|p| p.recall).collect::<Vec<_>>());
                let prec = stat(&pts.iter().map(|p| p.precision).collect::<Vec<_>>());
                rows.push(vec![
                    tau.to_string(),
                    pts.len().to_string(),
                    float(rec.mean),
                    float(rec.se),
                    float(prec.mean),
                    float(prec.se),
                ]);
            }
            (
                vec!["tau", "replications", "recall_mean", "recall_se", "precision_mean", "precision_se"],
                rows,
                format!(
                    "method\tPR AUC %\nSDNCMV\t{}\nPLR\t{}\n",
                    pct(&s.pr_auc),
                    pct(&s.baseline_pr_auc)
                ),
            )
        }
    };
    formats::write_rows(&out.join("report.tsv"), &header, rows)?;
    formats::write_atomic(&out.join("report.txt"), text.as_bytes())?;
    formats::write_json_file(&out.join("summary.json"), s)
}

pub fn replicate(args: &ReplicateArgs) -> Result<Outcome> {
    let cfg = replicate_config(args);
    ensure!(cfg.replications > 0, "need at least one replication");
    cfg.clime.validate()?;
    cfg.ensemble.plr.validate()?;
    cfg.scenario.validate()?;
    ensure!(cfg.tau() <= cfg.ensemble.replicates, "tau exceeds B");
    replicate_with(&cfg, &args.out)
}

pub fn replicate_with(cfg: &ReplicateConfig, out: &Path) -> Result<Outcome> {
    formats::write_json_file(&out.join("config.json"), cfg)?;
    let seeds: Vec<Vec<String>> = (0..cfg.replications)
        .map(|r| vec![(r + 1).to_string(), crate::pipeline::replication_seed(cfg.seed, r).to_string()])
        .collect();
    formats::write_rows(&out.join("seeds.tsv"), &["replication", "seed"], seeds)?;
    let results: Vec<Result<ReplicationResult>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let res = run_replication(cfg, r).with_context(|| format!("replication {}", r + 1))?;
            formats::write_json_file(&out.join("replications").join(format!("rep_{:04}.json", r + 1)), &res)?;
            Ok(res)
        })
        .collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(v) => ok.push(v),
            Err(e) => {
                eprintln!("{e:#}");
                failed.push(r + 1);
            }
        }
    }
    let summary = summarize(cfg.table, &ok, failed.clone());
    if !ok.is_empty() {
        write_report(out, &summary, &ok, cfg.ensemble.replicates)?;
        print!("{}", std::fs::read_to_string(out.join("report.txt"))?);
    }
    if !failed.is_empty() {
        bail!("{} of {} replications failed: {:?}", failed.len(), cfg.replications, failed);
    }
    Ok(Outcome::default())
}

