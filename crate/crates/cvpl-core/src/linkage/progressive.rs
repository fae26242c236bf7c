//! Progressive blocking relaxation with early stopping.
//!
//! Evaluating the linkage rate along a validated relaxation ladder yields a
//! nondecreasing sequence, so every prefix is a valid lower bound on the final
//! estimate and evaluation can stop once the increment falls below tolerance.

use serde::Serialize;

use crate::data::{Dataset, GroundTruth};

use super::assess::{assess_latents, AssessOptions, AssessmentReport, PipelineFingerprint, PreparedBlocks};
use super::blocking::{assign_blocks, is_relaxation, BlockingScheme};
use super::encode::Encoder;
use super::project::{project, Projection};
use super::LinkageError;

/// Result of a progressive run.
#[derive(Debug, Clone, Serialize)]
pub struct ProgressiveResult {
    /// Scheme labels actually evaluated, in ladder order.
    pub labels: Vec<String>,
    /// Linkage rate per evaluated step.
    pub rates: Vec<f64>,
    /// Number of evaluated steps (== rates.len()).
    pub stop_index: usize,
    /// Whether the increment fell below tolerance before the ladder ended.
    pub converged: bool,
    pub tau: f64,
    pub epsilon: f64,
}

/// Evaluate the linkage rate along a relaxation ladder, stopping once the
/// increment drops below `epsilon`.
///
/// Every consecutive pair is validated as a relaxation on the supplied
/// datasets; candidate evaluation is exhaustive (no block truncation), as the
/// monotonicity guarantee requires.
pub fn progressive_assess(
    dor: &Dataset,
    dpr: &Dataset,
    ladder: &[BlockingScheme],
    encoder: &Encoder,
    projection: &Projection,
    options: &AssessOptions,
    tau: f64,
    epsilon: f64,
) -> Result<ProgressiveResult, LinkageError> {
    if ladder.is_empty() {
        return Err(LinkageError::InvalidParam("ladder must contain at least one scheme".into()));
    }
    for (step, pair) in ladder.windows(2).enumerate() {
        if !is_relaxation(&pair[0], &pair[1], &[dor, dpr])? {
            return Err(LinkageError::RelaxationViolation { step: step + 1 });
        }
    }

    // The encoder and projection are scheme-independent: project once.
    let z_or = project(projection, &encoder.encode(dor)?)?;
    let z_pr = project(projection, &encoder.encode(dpr)?)?;
    let exhaustive = AssessOptions { max_block_size: None, ..options.clone() };

    let mut rates = Vec::new();
    let mut labels = Vec::new();
    let mut converged = false;
    let mut prev: Option<f64> = None;
    for scheme in ladder {
        let blocks = PreparedBlocks {
            or_blocks: assign_blocks(dor, scheme)?,
            pr_blocks: assign_blocks(dpr, scheme)?,
        };
        let fingerprint = PipelineFingerprint {
            scheme_label: scheme.label.clone(),
            encoder_hash: encoder.hash(),
            projection_strategy: projection.strategy.as_str().to_string(),
            similarity: exhaustive.similarity.as_str().to_string(),
            seed: exhaustive.seed,
            lower_bound_mode: false,
        };
        let report = assess_latents(&z_or, &z_pr, &blocks, &exhaustive, None, fingerprint)?;
        let rate = report.cvpl_lr(tau);
        rates.push(rate);
        labels.push(scheme.label.clone());
        if let Some(p) = prev {
            if rate - p < epsilon {
                converged = true;
                break;
            }
        }
        prev = Some(rate);
    }

    Ok(ProgressiveResult {
        labels,
        stop_index: rates.len(),
        rates,
        converged,
        tau,
        epsilon,
    })
}

/// Full single-scheme assessment used by progressive callers that also want
/// the final report.
pub fn assess_step(
    dor: &Dataset,
    dpr: &Dataset,
    scheme: &BlockingScheme,
    encoder: &Encoder,
    projection: &Projection,
    options: &AssessOptions,
    gt: Option<&GroundTruth>,
) -> Result<AssessmentReport, LinkageError> {
    let exhaustive = AssessOptions { max_block_size: None, ..options.clone() };
    super::assess::assess(dor, dpr, scheme, encoder, projection, &exhaustive, gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttrDef, AttrKind, AttrRole, AttributeSchema, Value};
    use crate::linkage::blocking::{BlockKey, Generalization};
    use crate::linkage::encode::{fit_encoder, EncodingPlan};
    use crate::linkage::project::{fit_projection, FitStrategy};
    use std::sync::Arc;

    fn schema() -> Arc<AttributeSchema> {
        Arc::new(
            AttributeSchema::new(vec![
                AttrDef::new("grp", AttrKind::Categorical, AttrRole::QuasiIdentifier),
                AttrDef::new("sub", AttrKind::Categorical, AttrRole::QuasiIdentifier),
                AttrDef::new("a", AttrKind::Numeric, AttrRole::Analytical),
            ])
            .unwrap(),
        )
    }

    fn dataset(rows: &[(&str, &str, f64)]) -> Dataset {
        Dataset::new(
            schema(),
            rows.iter()
                .map(|&(g, s, a)| vec![Value::Text(g.into()), Value::Text(s.into()), Value::Number(a)])
                .collect(),
            "toy",
        )
        .unwrap()
    }

    fn key_scheme(keys: &[&str], label: &str) -> BlockingScheme {
        BlockingScheme::new(
            keys.iter().map(|k| BlockKey::new(k, Generalization::Identity)).collect(),
            label,
        )
    }

    fn fitted(dor: &Dataset, dpr: &Dataset) -> (Encoder, Projection) {
        let enc = fit_encoder(dor, dpr, &EncodingPlan::default()).unwrap();
        let proj = fit_projection(
            &enc.encode(dor).unwrap(),
            &enc.encode(dpr).unwrap(),
            1.0,
            1,
            50,
            FitStrategy::Identity,
        )
        .unwrap();
        (enc, proj)
    }

    #[test]
    fn single_step_ladder_equals_plain_assessment() {
        let rows = [("g", "u", 1.0), ("g", "v", 2.0), ("h", "u", 3.0)];
        let dor = dataset(&rows);
        let dpr = dataset(&rows);
        let (enc, proj) = fitted(&dor, &dpr);
        let opts = AssessOptions::default();
        let ladder = [key_scheme(&["grp", "sub"], "full")];
        let result =
            progressive_assess(&dor, &dpr, &ladder, &enc, &proj, &opts, 0.9, 0.01).unwrap();
        assert_eq!(result.rates.len(), 1);
        let direct = assess_step(&dor, &dpr, &ladder[0], &enc, &proj, &opts, None).unwrap();
        assert_eq!(result.rates[0], direct.cvpl_lr(0.9));
        assert!(!result.converged);
    }

    #[test]
    fn identical_consecutive_schemes_stop_after_two_steps() {
        let rows = [("g", "u", 1.0), ("g", "v", 2.0)];
        let dor = dataset(&rows);
        let dpr = dataset(&rows);
        let (enc, proj) = fitted(&dor, &dpr);
        let ladder = [
            key_scheme(&["grp"], "s1"),
            key_scheme(&["grp"], "s2"),
            key_scheme(&[], "s3"),
        ];
        let result = progressive_assess(
            &dor,
            &dpr,
            &ladder,
            &enc,
            &proj,
            &AssessOptions::default(),
            0.5,
            0.01,
        )
        .unwrap();
        assert_eq!(result.stop_index, 2);
        assert!(result.converged);
        assert_eq!(result.rates[0], result.rates[1]);
    }

    #[test]
    fn invalid_ladder_reports_offending_step() {
        let rows = [("g", "u", 1.0), ("g", "v", 2.0), ("h", "u", 3.0)];
        let dor = dataset(&rows);
        let dpr = dataset(&rows);
        let (enc, proj) = fitted(&dor, &dpr);
        // Step 2 tightens instead of relaxing.
        let ladder = [
            key_scheme(&["grp"], "coarse"),
            key_scheme(&["grp", "sub"], "finer"),
        ];
        let err = progressive_assess(
            &dor,
            &dpr,
            &ladder,
            &enc,
            &proj,
            &AssessOptions::default(),
            0.9,
            0.01,
        )
        .unwrap_err();
        assert!(matches!(err, LinkageError::RelaxationViolation { step: 1 }));
    }

    #[test]
    fn rates_are_nondecreasing_along_relaxation() {
        let rows: Vec<(String, String, f64)> = (0..60)
            .map(|i| {
                (
                    format!("g{}", i % 3),
                    format!("s{}", i % 5),
                    (i as f64 * 0.37).sin() * 2.0,
                )
            })
            .collect();
        let refs: Vec<(&str, &str, f64)> = rows.iter().map(|(g, s, a)| (g.as_str(), s.as_str(), *a)).collect();
        let dor = dataset(&refs);
        let dpr = dataset(&refs);
        let (enc, proj) = fitted(&dor, &dpr);
        let ladder = [
            key_scheme(&["grp", "sub"], "full"),
            key_scheme(&["grp"], "grp"),
            key_scheme(&[], "all"),
        ];
        let result = progressive_assess(
            &dor,
            &dpr,
            &ladder,
            &enc,
            &proj,
            &AssessOptions::default(),
            0.99,
            -1.0, // never stop early
        )
        .unwrap();
        for w in result.rates.windows(2) {
            assert!(w[0] <= w[1] + 1e-15);
        }
    }
}
