//! Simultaneous differential network analysis and classification for
//! matrix-variate (region × time) data.
//!
//! The pipeline has three stages: per-subject network strengths
//! ([`netstrength`]), elastic-net logistic regression on those strengths
//! ([`plr`]), and a stratified-bootstrap ensemble that votes on labels and
//! counts how often each edge is selected ([`ensemble`]). [`synthgen`]
//! produces matrix-normal cohorts with a known differential network and
//! [`evalmetrics`] scores the results.

pub mod ensemble;
pub mod error;
pub mod evalmetrics;
pub mod netstrength;
pub mod plr;
pub mod seed;
pub mod synthgen;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    edge_index, CohortDataset, EdgeFeatureVector, EdgeIndexMap, FeatureTable, Label, PrecisionEstimate, SubjectMatrix,
};
