use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use sdncmv_core::ensemble::{EnsembleSettings, Screening, TuningMode};
use sdncmv_core::netstrength::ClimeSettings;
use sdncmv_core::plr::PlrFitSettings;
use sdncmv_core::synthgen::ScenarioConfig;

use crate::config::TableId;

#[derive(Debug, Parser)]
#[command(name = "sdncmv", version, about = "Differential network analysis and classification for matrix-variate data")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SDNCMV_JOBS")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic train/test cohort with known differential edges.
    Simulate(SimulateArgs),
    /// Compute per-subject edge features for a dataset.
    Features(FeaturesArgs),
    /// Fit the bootstrap ensemble on a features table.
    Fit(FitArgs),
    /// Score a fitted model against a ground-truth edge list.
    Evaluate(EvaluateArgs),
    /// Run many simulated pipelines and aggregate the metrics.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub scenario: u8,
    #[arg(long, default_value_t = 50)]
    pub p: usize,
    #[arg(long, default_value_t = 50)]
    pub q: usize,
    #[arg(long, default_value_t = 20)]
    pub n1: usize,
    #[arg(long, default_value_t = 20)]
    pub n2: usize,
    /// Test cases (default: n1).
    #[arg(long)]
    pub n1_test: Option<usize>,
    /// Test controls (default: n2).
    #[arg(long)]
    pub n2_test: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub hub_blocks: usize,
    #[arg(long, default_value_t = 10)]
    pub subgraphs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub rewire_prob: f64,
    #[arg(long, default_value_t = 0.02)]
    pub perturb_var: f64,
}

impl ScenarioArgs {
    pub fn config(&self, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            scenario: self.scenario,
            p: self.p,
            q: self.q,
            n1: self.n1,
            n2: self.n2,
            n1_test: self.n1_test.unwrap_or(self.n1),
            n2_test: self.n2_test.unwrap_or(self.n2),
            hub_blocks: self.hub_blocks,
            small_world_subgraphs: self.subgraphs,
            rewire_prob: self.rewire_prob,
            perturb_var: self.perturb_var,
            seed,
            ..ScenarioConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ClimeArgs {
    /// Target off-diagonal density of each precision estimate.
    #[arg(long, default_value_t = 0.5)]
    pub density: f64,
    #[arg(long, default_value_t = 0.05)]
    pub density_band: f64,
    #[arg(long, default_value_t = 1e-7)]
    pub lp_tolerance: f64,
    #[arg(long, default_value_t = 30)]
    pub max_bisection_steps: usize,
    /// Lower end of the λ search bracket.
    #[arg(long, requires = "lambda_hi")]
    pub lambda_lo: Option<f64>,
    /// Upper end of the λ search bracket.
    #[arg(long, requires = "lambda_lo")]
    pub lambda_hi: Option<f64>,
}

impl ClimeArgs {
    pub fn settings(&self) -> ClimeSettings {
        ClimeSettings {
            target_density: self.density,
            density_band: self.density_band,
            lp_tolerance: self.lp_tolerance,
            max_bisection_steps: self.max_bisection_steps,
            lambda_bounds: self.lambda_lo.zip(self.lambda_hi),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PlrArgs {
    /// Elastic-net mixing values searched by cross-validation.
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.75,1")]
    pub alpha_grid: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    pub path_length: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lambda_min_ratio: f64,
    #[arg(long, default_value_t = 5)]
    pub cv_folds: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub tolerance: f64,
    /// Drop the unpenalized intercept.
    #[arg(long)]
    pub no_intercept: bool,
}

impl PlrArgs {
    pub fn settings(&self) -> PlrFitSettings {
        PlrFitSettings {
            alpha_grid: self.alpha_grid.clone(),
            path_length: self.path_length,
            lambda_min_ratio: self.lambda_min_ratio,
            cv_folds: self.cv_folds,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            fit_intercept: !self.no_intercept,
            ..PlrFitSettings::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EnsembleArgs {
    /// Bootstrap replicates.
    #[arg(long = "B", visible_alias = "replicates")]
    pub b: Option<usize>,
    /// Edge threshold on occurrence counts (default B/2).
    #[arg(long)]
    pub tau: Option<usize>,
    /// Tune (λ, α) once on the full training set.
    #[arg(long)]
    pub tune_once: bool,
    /// Fraction of edges kept by marginal screening (1 disables it).
    #[arg(long)]
    pub keep_fraction: Option<f64>,
    /// Screen inside every bootstrap sample.
    #[arg(long)]
    pub screen_per_replicate: bool,
}

impl EnsembleArgs {
    pub fn settings(&self, plr: PlrFitSettings, default_b: usize, default_keep: f64) -> EnsembleSettings {
        let keep = self.keep_fraction.unwrap_or(default_keep);
        EnsembleSettings {
            replicates: self.b.unwrap_or(default_b),
            tuning: if self.tune_once { TuningMode::Once } else { TuningMode::PerReplicate },
            screening: (keep < 1.0).then_some(Screening {
                keep_fraction: keep,
                per_replicate: self.screen_per_replicate,
            }),
            plr,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Dataset directory containing manifest.json.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub clime: ClimeArgs,
    /// Output directory for features.tsv and features_log.tsv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[command(flatten)]
    pub plr: PlrArgs,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Threshold (default: the model's τ).
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    #[arg(long, value_enum)]
    pub table: TableId,
    #[arg(long, default_value_t = 20)]
    pub replications: usize,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub clime: ClimeArgs,
    #[command(flatten)]
    pub plr: PlrArgs,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}
