//! Threshold calibration and threshold-free risk summaries.

use serde::Serialize;

use crate::linkage::AssessmentReport;

use super::EvalError;

/// Result of precision-constrained threshold calibration.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationResult {
    /// Smallest candidate threshold whose empirical non-match exceedance is
    /// at most alpha.
    pub tau_hat: f64,
    /// False when no candidate satisfied the bound and the top of the sample
    /// range was returned instead.
    pub satisfied: bool,
    /// Pairwise target rate, as supplied.
    pub alpha: f64,
    /// Bonferroni-style per-pair rate alpha / mean candidate count.
    pub alpha_bonferroni: Option<f64>,
    /// Existential exceedance estimate 1 - (1 - alpha)^m at the mean
    /// candidate count m.
    pub existential_estimate: f64,
}

/// Pairwise-calibrated threshold: the smallest sample value tau with
/// empirical P(S- >= tau) <= alpha.
///
/// Candidate thresholds are the observed sample values; between two observed
/// values the empirical exceedance is constant, so the sample points are the
/// canonical grid. Controls the pairwise false-link rate; the existential
/// rate additionally grows with candidate-set size, which the returned
/// estimate quantifies.
pub fn calibrate_threshold(
    s_minus: &[f64],
    alpha: f64,
    mean_candidates: f64,
) -> Result<CalibrationResult, EvalError> {
    if !(0.0 < alpha && alpha <= 1.0) {
        return Err(EvalError::InvalidAlpha(alpha));
    }
    if s_minus.is_empty() {
        return Err(EvalError::EmptySample);
    }
    let mut sorted = s_minus.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    // Exceedance count of a candidate v is the number of samples >= v;
    // scanning ascending finds the smallest satisfying value.
    let mut chosen: Option<f64> = None;
    let mut i = 0usize;
    while i < sorted.len() {
        let v = sorted[i];
        let exceed = (sorted.len() - sorted.partition_point(|x| *x < v)) as f64;
        if exceed / n <= alpha {
            chosen = Some(v);
            break;
        }
        // Skip the rest of this tie run.
        i = sorted.partition_point(|x| *x <= v);
    }
    let (tau_hat, satisfied) = match chosen {
        Some(v) => (v, true),
        None => (*sorted.last().unwrap(), false),
    };
    let alpha_bonferroni = (mean_candidates > 0.0).then(|| alpha / mean_candidates);
    let existential_estimate = 1.0 - (1.0 - alpha).powf(mean_candidates);
    Ok(CalibrationResult { tau_hat, satisfied, alpha, alpha_bonferroni, existential_estimate })
}

/// Supremum of the linkage rate over the threshold range.
pub fn worst_case_risk(report: &AssessmentReport, taus: &[f64]) -> Result<f64, EvalError> {
    if taus.is_empty() {
        return Err(EvalError::EmptyRange);
    }
    Ok(taus.iter().map(|&t| report.cvpl_lr(t)).fold(f64::MIN, f64::max))
}

/// Trapezoidal integral of the linkage rate over the threshold range.
pub fn integrated_risk(report: &AssessmentReport, taus: &[f64]) -> Result<f64, EvalError> {
    if taus.is_empty() {
        return Err(EvalError::EmptyRange);
    }
    let mut sorted = taus.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let values: Vec<f64> = sorted.iter().map(|&t| report.cvpl_lr(t)).collect();
    let mut integral = 0.0;
    for i in 1..sorted.len() {
        integral += (sorted[i] - sorted[i - 1]) * 0.5 * (values[i] + values[i - 1]);
    }
    Ok(integral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linkage::{
        AssessmentReport, BlockSummary, PipelineFingerprint, RecordAssessment,
    };
    use approx::assert_abs_diff_eq;

    fn report_with_maxima(maxima: &[Option<f64>]) -> AssessmentReport {
        AssessmentReport {
            fingerprint: PipelineFingerprint {
                scheme_label: "t".into(),
                encoder_hash: "0".into(),
                projection_strategy: "identity".into(),
                similarity: "cosine".into(),
                seed: 0,
                lower_bound_mode: false,
            },
            n_original: maxima.len(),
            n_protected: maxima.len(),
            records: maxima
                .iter()
                .map(|&s| RecordAssessment {
                    block: "b".into(),
                    candidates: usize::from(s.is_some()),
                    max_similarity: s,
                    argmax: s.map(|_| 0),
                    true_similarity: None,
                })
                .collect(),
            nonmatch_samples: vec![Vec::new(); maxima.len()],
            gt_pairs: None,
            block_summary: BlockSummary { blocks: 1, min: 1, max: 1, median: 1.0, mean: 1.0 },
        }
    }

    #[test]
    fn ten_value_sample_alpha_point_two() {
        let sample: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let result = calibrate_threshold(&sample, 0.2, 10.0).unwrap();
        // Exceedance at 0.9 is exactly 2/10.
        assert_abs_diff_eq!(result.tau_hat, 0.9, epsilon = 1e-12);
        assert!(result.satisfied);
    }

    #[test]
    fn alpha_one_is_vacuous() {
        let sample: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let result = calibrate_threshold(&sample, 1.0, 5.0).unwrap();
        assert_abs_diff_eq!(result.tau_hat, 0.1, epsilon = 1e-12);
        assert!(result.satisfied);
    }

    #[test]
    fn unattainable_alpha_returns_top_with_flag() {
        let sample = vec![0.5, 0.5, 0.5];
        let result = calibrate_threshold(&sample, 0.01, 5.0).unwrap();
        assert!(!result.satisfied);
        assert_abs_diff_eq!(result.tau_hat, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn existential_estimate_is_exact_arithmetic() {
        let sample = vec![0.1, 0.9];
        let result = calibrate_threshold(&sample, 0.01, 20.0).unwrap();
        assert_eq!(result.existential_estimate, 1.0 - 0.99f64.powf(20.0));
        assert!((result.existential_estimate - 0.1821).abs() < 1e-3);
        assert_abs_diff_eq!(result.alpha_bonferroni.unwrap(), 0.01 / 20.0, epsilon = 1e-15);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(calibrate_threshold(&[0.5], 0.0, 1.0), Err(EvalError::InvalidAlpha(_))));
        assert!(matches!(calibrate_threshold(&[], 0.1, 1.0), Err(EvalError::EmptySample)));
    }

    #[test]
    fn constant_rate_worst_case_and_integral() {
        // All records link at every threshold below 1: rate is constant 1.
        let report = report_with_maxima(&[Some(1.0), Some(1.0)]);
        let taus: Vec<f64> = (0..=10).map(|i| 0.8 + i as f64 * 0.01).collect();
        assert_abs_diff_eq!(worst_case_risk(&report, &taus).unwrap(), 1.0, epsilon = 1e-12);
        let integral = integrated_risk(&report, &taus).unwrap();
        assert_abs_diff_eq!(integral, 0.1, epsilon = 1e-9); // c * (b - a)
    }

    #[test]
    fn single_point_integral_is_zero() {
        let report = report_with_maxima(&[Some(0.9)]);
        assert_eq!(integrated_risk(&report, &[0.9]).unwrap(), 0.0);
    }

    #[test]
    fn step_function_trapezoid_by_hand() {
        // Maxima 0.85 and 0.95: rate is 1.0 for tau <= 0.85, 0.5 in
        // (0.85, 0.95], 0 above. Grid {0.8, 0.9, 1.0}:
        // trapezoid = 0.1*(1.0+0.5)/2 + 0.1*(0.5+0.0)/2 = 0.1.
        let report = report_with_maxima(&[Some(0.85), Some(0.95)]);
        let integral = integrated_risk(&report, &[0.8, 0.9, 1.0]).unwrap();
        assert_abs_diff_eq!(integral, 0.1, epsilon = 1e-12);
    }
}
