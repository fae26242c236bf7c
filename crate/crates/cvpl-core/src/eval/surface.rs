//! Risk surfaces: linkage rate over (protection parameter, threshold).

use serde::Serialize;

use crate::linkage::AssessmentReport;

/// Grid of linkage rates over protection levels (rows) and thresholds
/// (columns). Each fixed-level row is nonincreasing along the threshold axis;
/// no monotonicity holds along the protection axis.
#[derive(Debug, Clone, Serialize)]
pub struct RiskSurface {
    pub lambda_labels: Vec<String>,
    pub taus: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl RiskSurface {
    /// Flat (lambda, tau, value) triples for CSV export.
    pub fn flat_rows(&self) -> Vec<(String, f64, f64)> {
        let mut out = Vec::with_capacity(self.lambda_labels.len() * self.taus.len());
        for (label, row) in self.lambda_labels.iter().zip(&self.values) {
            for (&tau, &v) in self.taus.iter().zip(row) {
                out.push((label.clone(), tau, v));
            }
        }
        out
    }

    pub fn value(&self, lambda: usize, tau: usize) -> f64 {
        self.values[lambda][tau]
    }
}

/// Fill the surface by re-thresholding each level's report.
pub fn risk_surface(assessments: &[(String, &AssessmentReport)], taus: &[f64]) -> RiskSurface {
    let values = assessments
        .iter()
        .map(|(_, report)| taus.iter().map(|&t| report.cvpl_lr(t)).collect())
        .collect();
    RiskSurface {
        lambda_labels: assessments.iter().map(|(l, _)| l.clone()).collect(),
        taus: taus.to_vec(),
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linkage::{BlockSummary, PipelineFingerprint, RecordAssessment};

    fn report(maxima: &[f64]) -> AssessmentReport {
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
                    candidates: 1,
                    max_similarity: Some(s),
                    argmax: Some(0),
                    true_similarity: None,
                })
                .collect(),
            nonmatch_samples: vec![Vec::new(); maxima.len()],
            gt_pairs: None,
            block_summary: BlockSummary { blocks: 1, min: 1, max: 1, median: 1.0, mean: 1.0 },
        }
    }

    #[test]
    fn one_by_one_grid() {
        let r = report(&[0.95, 0.5]);
        let surface = risk_surface(&[("k=5".into(), &r)], &[0.9]);
        assert_eq!(surface.values, vec![vec![0.5]]);
        assert_eq!(surface.flat_rows(), vec![("k=5".to_string(), 0.9, 0.5)]);
    }

    #[test]
    fn rows_are_nonincreasing_in_tau() {
        let r1 = report(&[0.7, 0.85, 0.92, 0.99]);
        let r2 = report(&[0.8, 0.8, 0.96, 0.5]);
        let taus: Vec<f64> = (0..=29).map(|i| 0.7 + i as f64 * 0.01).collect();
        let surface = risk_surface(&[("a".into(), &r1), ("b".into(), &r2)], &taus);
        for row in &surface.values {
            for w in row.windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }
}
