//! Serializable assessment document: the JSON artifact written by the CLI.
//!
//! Every document embeds the resolved configuration and seed, carries the
//! full per-record array, the block summary, the linkage-rate curve, and a
//! capped non-match sample. Ground-truth metrics appear only when ground
//! truth was supplied; otherwise the document carries a no-ground-truth
//! banner and the self-linkage diagnostic.

use rand::Rng;
use serde::Serialize;

use crate::eval::{
    calibrate_threshold, integrated_risk, worst_case_risk, CalibrationResult, MetricBundle,
};
use crate::linkage::{AssessmentReport, BlockSummary, PipelineFingerprint, RecordAssessment};
use crate::rng::{substream, tag};
use crate::stats::quantile;

/// Current document schema version.
pub const SCHEMA_VERSION: u32 = 1;
/// Cap on the serialized pooled non-match sample.
const S_MINUS_CAP: usize = 10_000;

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub tau: f64,
    pub cvpl_lr: f64,
}

/// Five-number summary of a similarity sample.
#[derive(Debug, Clone, Serialize)]
pub struct SampleSummary {
    pub count: usize,
    pub mean: f64,
    pub p05: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

impl SampleSummary {
    pub fn from(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            count: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            p05: quantile(values, 0.05),
            p25: quantile(values, 0.25),
            p50: quantile(values, 0.50),
            p75: quantile(values, 0.75),
            p95: quantile(values, 0.95),
        })
    }
}

/// The on-disk assessment report.
#[derive(Debug, Clone, Serialize)]
pub struct AssessmentDocument {
    pub schema_version: u32,
    pub method: String,
    pub fingerprint: PipelineFingerprint,
    /// Resolved configuration, for the audit trail.
    pub config: serde_json::Value,
    pub n_original: usize,
    pub n_protected: usize,
    pub tau_default: f64,
    pub block_summary: BlockSummary,
    pub curve: Vec<CurvePoint>,
    pub worst_case_risk: f64,
    pub integrated_risk: f64,
    pub records: Vec<RecordAssessment>,
    /// Pooled non-match sample, deterministically capped.
    pub s_minus_sample: Vec<f64>,
    pub s_minus_truncated: bool,
    pub s_minus_summary: Option<SampleSummary>,
    /// Present only when ground truth was supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_plus_summary: Option<SampleSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Vec<MetricBundle>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationResult>,
    /// Leave-one-out self-linkage of the release at the default threshold;
    /// reported in blind-audit mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub self_linkage: Option<f64>,
    pub no_ground_truth: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub banner: Option<String>,
}

/// Assemble the document from an assessed report.
///
/// `bundles` must be present exactly when the report carries ground-truth
/// pairs; `self_linkage` is attached in blind-audit mode.
pub fn build_document(
    report: &AssessmentReport,
    config: serde_json::Value,
    taus: &[f64],
    tau_default: f64,
    bundles: Option<Vec<MetricBundle>>,
    self_linkage: Option<f64>,
) -> AssessmentDocument {
    let pooled = report.pooled_nonmatch();
    let (s_minus_sample, s_minus_truncated) = if pooled.len() > S_MINUS_CAP {
        let mut rng = substream(report.fingerprint.seed, &[tag("s_minus_cap")]);
        let mut pool = pooled.clone();
        for i in 0..S_MINUS_CAP {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        pool.truncate(S_MINUS_CAP);
        (pool, true)
    } else {
        (pooled.clone(), false)
    };

    let s_plus: Vec<f64> = report
        .gt_pairs
        .as_ref()
        .map(|pairs| pairs.iter().filter(|p| p.co_blocked).map(|p| p.similarity).collect())
        .unwrap_or_default();

    let calibration = if pooled.is_empty() {
        None
    } else {
        calibrate_threshold(&pooled, 0.05, report.mean_candidates()).ok()
    };

    let no_ground_truth = bundles.is_none();
    AssessmentDocument {
        schema_version: SCHEMA_VERSION,
        method: "cvpl".into(),
        fingerprint: report.fingerprint.clone(),
        config,
        n_original: report.n_original,
        n_protected: report.n_protected,
        tau_default,
        block_summary: report.block_summary.clone(),
        curve: taus.iter().map(|&tau| CurvePoint { tau, cvpl_lr: report.cvpl_lr(tau) }).collect(),
        worst_case_risk: worst_case_risk(report, taus).unwrap_or(0.0),
        integrated_risk: integrated_risk(report, taus).unwrap_or(0.0),
        records: report.records.clone(),
        s_minus_sample,
        s_minus_truncated,
        s_minus_summary: SampleSummary::from(&pooled),
        s_plus_summary: SampleSummary::from(&s_plus),
        metrics: bundles,
        calibration,
        self_linkage,
        no_ground_truth,
        banner: no_ground_truth.then(|| {
            "no ground truth supplied: linkage rates are reported without validation; \
             the self-linkage diagnostic checks representation power only"
                .to_string()
        }),
    }
}
