use serde::{Deserialize, Serialize};

use sdncmv_core::ensemble::EnsembleSettings;
use sdncmv_core::netstrength::ClimeSettings;
use sdncmv_core::synthgen::ScenarioConfig;

/// Everything that determines a fit, persisted next to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Feature settings, when the fit was produced from raw matrices here.
    pub clime: Option<ClimeSettings>,
    pub ensemble: EnsembleSettings,
    /// Count threshold; `None` means B/2.
    pub tau: Option<usize>,
    pub seed: u64,
}

impl RunConfig {
    pub fn tau(&self) -> usize {
        self.tau.unwrap_or(self.ensemble.replicates / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TableId {
    Table1,
    Table2,
    Prcurve,
}

/// A batch of simulated pipelines. Replication r uses the scenario with its
/// seed replaced by a seed derived from (`seed`, r).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateConfig {
    pub table: TableId,
    pub replications: usize,
    pub scenario: ScenarioConfig,
    pub clime: ClimeSettings,
    pub ensemble: EnsembleSettings,
    pub tau: Option<usize>,
    pub seed: u64,
}

impl ReplicateConfig {
    pub fn tau(&self) -> usize {
        self.tau.unwrap_or(self.ensemble.replicates / 2)
    }
}
