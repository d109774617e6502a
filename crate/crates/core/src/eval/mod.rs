//! Scoring and experiments: accuracy metrics, experiment grids, the
//! feature-stability study and the classifier ensemble.

mod classifier;
mod ensemble;
mod experiment;
mod metrics;
mod stability;

use thiserror::Error;

use crate::profiler::ProfileError;
use crate::sim::SimError;
use crate::site::SiteError;

pub use classifier::{
    compute_validation_threshold, threshold_from_probabilities, trace_features, NearestCentroid,
    TraceClassifier,
};
pub use ensemble::{
    engineer_collisions, ensemble_predict, gate, run_ensemble_study, single_page_traces,
    EnsembleConfig, EnsembleDecision, EnsembleSource, EnsembleSpec, EnsembleStudyReport,
    PageAttribution,
};
pub use experiment::{
    run_experiment, CellReport, CellSpec, ExperimentReport, ExperimentSpec, GeneralizationFactors,
    HintPolicy,
};
pub use metrics::{
    fingerprinting_accuracy, session_counts, AccuracyReport, Counts, PageBreakdown,
    ResourceBreakdown,
};
pub use stability::{
    assess_feature_stability, coefficient_of_variation, StabilityFeature, StabilityRow,
    StabilityTable,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{predictions} predictions but {truths} ground truths")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error("classifier is not trained")]
    Untrained,
    #[error("classifier failure: {0}")]
    Classifier(String),
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("invalid ensemble configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Site(#[from] SiteError),
}
