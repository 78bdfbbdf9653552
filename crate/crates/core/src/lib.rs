//! Pool-based active learning for unlabeled pools contaminated with
//! ambiguous and out-of-distribution samples.
//!
//! The crate covers the whole simulation loop: contrastive representation
//! training over labeled and unlabeled pools, k-means on the learned
//! features, cluster-distance acquisition and the usual uncertainty
//! baselines, a simulated oracle with exact cost accounting, and a
//! synthetic benchmark generator.

pub mod acquisition;
pub mod benchgen;
pub mod clustering;
pub mod config;
pub mod dataset;
pub mod driver;
pub mod error;
pub mod learner;
pub mod ledger;
pub mod oracle;
pub mod pool;
pub mod rng;

pub use acquisition::{AcquisitionOutcome, AcquisitionRequest, Strategy};
pub use clustering::{centroid_distance, kmeans_fit, ClusterModel, KMeansConfig};
pub use config::RunConfig;
pub use benchgen::{assemble, BenchmarkSpec};
pub use driver::{run_experiment, ExperimentConfig, ExperimentData};
pub use dataset::{Category, Dataset, FeatureTable, GroundTruth, Origin, Sample, SampleId, Truth};
pub use error::{Error, ErrorKind, Result};
pub use ledger::{ledger_totals, AnnotationLedger, LedgerTotals, StageCounts};
pub use oracle::{AnnotationService, Oracle, SimulatedOracle};
pub use pool::{pool_update, LabeledExample, PoolState};
