//! The linkage operator pipeline: blocking, vectorization, latent projection,
//! similarity scoring, per-record assessment, and progressive relaxation.

pub mod assess;
pub mod blocking;
pub mod encode;
pub mod progressive;
pub mod project;
pub mod similarity;

use thiserror::Error;

use crate::data::{DataError, Dataset, GroundTruth};

pub use assess::{
    assess, cvpl_lr, AssessOptions, AssessmentReport, BlockSummary, GtPairSimilarity,
    PipelineFingerprint, RecordAssessment,
};
pub use blocking::{
    assign_blocks, blocking_recall, candidate_set, is_relaxation, BlockIndex, BlockKey,
    BlockingScheme, Generalization,
};
pub use encode::{fit_encoder, ColumnSpan, Encoder, EncodingPlan};
pub use progressive::{progressive_assess, ProgressiveResult};
pub use project::{fit_projection, project, FitStrategy, Projection};
pub use similarity::{cosine, euclidean_converted, Similarity};

#[derive(Error, Debug)]
pub enum LinkageError {
    #[error("unknown attribute: {0}")]
    UnknownAttribute(String),
    #[error("blocking key {0:?} is not a quasi-identifier")]
    KeyNotQuasiIdentifier(String),
    #[error("attribute {attr:?} is not {expected}")]
    KindMismatch { attr: String, expected: &'static str },
    #[error("null value at row {row}, attribute {attr:?}")]
    NullValue { row: usize, attr: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input has no variance; nothing to project")]
    RankZero,
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("ladder step {step} is not a relaxation of its predecessor")]
    RelaxationViolation { step: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Everything needed to run the pipeline end to end on a dataset pair.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub scheme: BlockingScheme,
    pub plan: EncodingPlan,
    pub variance_retained: f64,
    pub min_components: usize,
    pub max_components: usize,
    pub strategy: FitStrategy,
    pub similarity: Similarity,
    pub max_block_size: Option<usize>,
    pub nonmatch_sample_size: usize,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn with_scheme(scheme: BlockingScheme) -> Self {
        Self {
            scheme,
            plan: EncodingPlan::default(),
            variance_retained: 0.90,
            min_components: 3,
            max_components: 50,
            strategy: FitStrategy::Joint,
            similarity: Similarity::Cosine,
            max_block_size: Some(5_000),
            nonmatch_sample_size: 100,
            seed: 42,
        }
    }

    pub fn options(&self) -> AssessOptions {
        AssessOptions {
            similarity: self.similarity,
            max_block_size: self.max_block_size,
            nonmatch_sample_size: self.nonmatch_sample_size,
            seed: self.seed,
            exclude_identity: false,
        }
    }
}

/// Fitted pipeline components, reusable across assessments of the same pair.
pub struct FittedPipeline {
    pub encoder: Encoder,
    pub projection: Projection,
}

/// Fit encoder and projection on a dataset pair.
pub fn fit_pipeline(
    dor: &Dataset,
    dpr: &Dataset,
    config: &PipelineConfig,
) -> Result<FittedPipeline, LinkageError> {
    let encoder = fit_encoder(dor, dpr, &config.plan)?;
    let projection = fit_projection(
        &encoder.encode(dor)?,
        &encoder.encode(dpr)?,
        config.variance_retained,
        config.min_components,
        config.max_components,
        config.strategy,
    )?;
    Ok(FittedPipeline { encoder, projection })
}

/// Fit and assess in one call.
pub fn run_pipeline(
    dor: &Dataset,
    dpr: &Dataset,
    config: &PipelineConfig,
    gt: Option<&GroundTruth>,
) -> Result<AssessmentReport, LinkageError> {
    let fitted = fit_pipeline(dor, dpr, config)?;
    assess(dor, dpr, &config.scheme, &fitted.encoder, &fitted.projection, &config.options(), gt)
}

/// Leave-one-out self-assessment of a dataset against itself: identity
/// matches are excluded from every candidate set.
pub fn run_self_pipeline(
    dataset: &Dataset,
    config: &PipelineConfig,
) -> Result<AssessmentReport, LinkageError> {
    let fitted = fit_pipeline(dataset, dataset, config)?;
    let options = AssessOptions { exclude_identity: true, ..config.options() };
    assess(dataset, dataset, &config.scheme, &fitted.encoder, &fitted.projection, &options, None)
}
