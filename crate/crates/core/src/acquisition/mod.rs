//! Acquisition strategies. Baselines produce an ordered candidate stream;
//! the cluster strategies interleave selection and annotation.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pool::LabeledExample;

pub mod cluster;
pub mod scores;
pub mod uncertainty;

pub use cluster::{
    acquire_distance_cl, acquire_random_cl, compute_quotas, exclude_nonid_cluster,
    nonid_proportion_argmax, ClusterPick, RadiusRefresh,
};
pub use scores::{score_entropy, score_least_confidence};
pub use uncertainty::{
    acquire_uncertainty, annotate_stream, aux_filter, aux_filter_with_model, random_order,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Random,
    LeastConfidence,
    Entropy,
    RandomCl,
    DistanceCl,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Random,
        Strategy::LeastConfidence,
        Strategy::Entropy,
        Strategy::RandomCl,
        Strategy::DistanceCl,
    ];

    /// Strategies that work on the contrastive feature space.
    pub fn is_contrastive(self) -> bool {
        matches!(self, Strategy::RandomCl | Strategy::DistanceCl)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::LeastConfidence => "least_confidence",
            Strategy::Entropy => "entropy",
            Strategy::RandomCl => "random_cl",
            Strategy::DistanceCl => "distance_cl",
        }
    }

    /// Display name used in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            Strategy::Random => "Random",
            Strategy::LeastConfidence => "Least Confidence",
            Strategy::Entropy => "Entropy",
            Strategy::RandomCl => "Random (CL)",
            Strategy::DistanceCl => "Distance (CL)",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = Strategy::ALL.iter().map(|s| s.as_str()).collect();
                Error::config(
                    "strategy",
                    format!("unknown strategy `{s}`; valid: {}", valid.join(", ")),
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcquisitionRequest {
    pub strategy: Strategy,
    /// Number of iD samples to acquire.
    pub n_id: usize,
    pub seed: u64,
    pub radius_refresh: RadiusRefresh,
}

impl AcquisitionRequest {
    pub fn new(strategy: Strategy, n_id: usize, seed: u64) -> Self {
        Self {
            strategy,
            n_id,
            seed,
            radius_refresh: RadiusRefresh::PerPass,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_id == 0 {
            return Err(Error::config("n_id", "must be at least 1"));
        }
        Ok(())
    }
}

/// Annotated samples of one acquisition call, in annotation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AcquisitionOutcome {
    pub annotated: Vec<LabeledExample>,
    /// Candidates ran out before the requested iD count was reached.
    pub exhausted: bool,
    /// Per-pick details for the cluster strategies.
    pub trace: Vec<ClusterPick>,
}

impl AcquisitionOutcome {
    pub fn in_distribution(&self, classes: usize) -> usize {
        self.annotated.iter().filter(|e| e.y <= classes).count()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.annotated.iter().map(|e| e.sample_id).collect()
    }
}
