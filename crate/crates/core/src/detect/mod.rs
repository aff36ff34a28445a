//! Seizure detector and the evaluation protocol around it: a random forest
//! over the 108 features, gmean scoring, per-arm aggregation with patient
//! exclusion, the Wilcoxon signed-rank test and report emission.

mod experiment;
mod forest;
mod metrics;
mod report;
mod wilcoxon;

pub use experiment::{
    evaluate_patient, run_experiment, summarise, ExperimentConfig, RepeatOutcome,
};
pub use forest::{DecisionTree, ForestConfig, Node, RandomForest, TrainingSet};
pub use metrics::{aggregate, geometric_mean, gmean, ConfusionCounts, Gmean, Totals};
pub use report::{
    read_table, verify_table, Check, ExperimentReport, Histogram, PatientResult, PublishedClaims,
    SkippedPatient, Tolerances, EXCLUSION_FLOOR, PUBLISHED_TABLE_CSV,
};
pub use wilcoxon::{
    wilcoxon_signed_rank, wilcoxon_with_method, WilcoxonMethod, WilcoxonResult, EXACT_MAX_N,
    MIN_NONZERO,
};

use thiserror::Error;

use crate::data::DataError;
use crate::features::FeatureError;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("training set holds a single class")]
    SingleClass,
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    Empty(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("inconsistent report: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type DetectResult<T> = std::result::Result<T, DetectError>;
