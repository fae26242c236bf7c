//! Ground-truth evaluation: linkage metrics, similarity distributions,
//! threshold calibration, risk surfaces, self-linkage, bootstrap intervals,
//! and utility proxies.

pub mod bootstrap;
pub mod calibrate;
pub mod metrics;
pub mod surface;
pub mod utility;

use thiserror::Error;

use crate::data::Dataset;
use crate::linkage::{run_self_pipeline, AssessmentReport, LinkageError, PipelineConfig};

pub use bootstrap::{bootstrap_ci, percentile_bootstrap};
pub use calibrate::{calibrate_threshold, integrated_risk, worst_case_risk, CalibrationResult};
pub use metrics::{metrics, similarity_distributions, MetricBundle, SimilarityDistributions};
pub use surface::{risk_surface, RiskSurface};
pub use utility::{utility, UtilityReport};

#[derive(Error, Debug)]
pub enum EvalError {
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("report carries no ground-truth pair similarities")]
    MissingGroundTruth,
    #[error("sample is empty")]
    EmptySample,
    #[error("alpha must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("threshold range is empty")]
    EmptyRange,
    #[error(transparent)]
    Linkage(#[from] LinkageError),
}

/// Leave-one-out self-linkage rate of a dataset against itself at `tau`.
///
/// Identity matches are excluded from every candidate set; a low rate means
/// the representation lacks discriminative power for linkage at this
/// threshold, a diagnostic for audits without ground truth.
pub fn self_linkage(dataset: &Dataset, config: &PipelineConfig, tau: f64) -> Result<f64, EvalError> {
    let report = self_linkage_report(dataset, config)?;
    Ok(report.cvpl_lr(tau))
}

/// Full leave-one-out self-assessment, for callers that need the curve.
pub fn self_linkage_report(
    dataset: &Dataset,
    config: &PipelineConfig,
) -> Result<AssessmentReport, EvalError> {
    Ok(run_self_pipeline(dataset, config)?)
}
