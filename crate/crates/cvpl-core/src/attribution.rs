//! Feature-level contribution analysis: which raw attributes drive the
//! latent similarity space.
//!
//! The contribution of an attribute is the explained-variance-weighted sum of
//! its squared component loadings, aggregated over all encoded columns the
//! attribute occupies and normalized across attributes. One-hot attributes
//! aggregate over their whole dictionary, so cardinality alone does not
//! inflate contribution beyond the variance it actually carries. This is a
//! structural measure of influence on the similarity space, not a marginal
//! effect estimate.

use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::data::{AttrRole, Dataset};
use crate::linkage::{fit_encoder, fit_projection, Encoder, EncodingPlan, LinkageError, PipelineConfig, Projection};
use crate::rng::{substream, tag};
use crate::stats::pop_std;

#[derive(Error, Debug)]
pub enum AttributionError {
    #[error("contributions are undefined under the identity projection")]
    IdentityProjection,
    #[error("need at least 2 bootstrap resamples, got {0}")]
    TooFewResamples(usize),
    #[error(transparent)]
    Linkage(#[from] LinkageError),
}

/// One attribute's share of the similarity space.
#[derive(Debug, Clone, Serialize)]
pub struct AttributionEntry {
    pub attr: String,
    /// Whether the attribute is a quasi-identifier.
    pub quasi_identifier: bool,
    /// Normalized contribution fraction; entries sum to 1.
    pub contribution: f64,
    /// Bootstrap standard deviation, when stability was computed.
    pub stability_sd: Option<f64>,
}

/// Per-attribute contributions with the QI / non-QI rollup.
#[derive(Debug, Clone, Serialize)]
pub struct ContributionReport {
    pub entries: Vec<AttributionEntry>,
    pub qi_share: f64,
    pub non_qi_share: f64,
}

/// Contribution of each raw attribute to the fitted latent space.
pub fn feature_contribution(
    projection: &Projection,
    encoder: &Encoder,
) -> Result<ContributionReport, AttributionError> {
    if projection.is_identity() {
        return Err(AttributionError::IdentityProjection);
    }
    let k = projection.k();
    let ratios = &projection.explained_variance_ratio;
    let mut raw: Vec<(String, bool, f64)> = Vec::with_capacity(encoder.spans().len());
    for span in encoder.spans() {
        let mut weight = 0.0;
        for comp in 0..k {
            let row = projection.components.row(comp);
            let mut sq = 0.0;
            for j in span.start..span.start + span.len {
                sq += row[j] * row[j];
            }
            weight += ratios[comp] * sq;
        }
        raw.push((span.attr.clone(), span.role == AttrRole::QuasiIdentifier, weight));
    }
    let total: f64 = raw.iter().map(|(_, _, w)| w).sum();
    if total <= 0.0 {
        return Err(AttributionError::Linkage(LinkageError::RankZero));
    }
    let entries: Vec<AttributionEntry> = raw
        .into_iter()
        .map(|(attr, quasi_identifier, w)| AttributionEntry {
            attr,
            quasi_identifier,
            contribution: w / total,
            stability_sd: None,
        })
        .collect();
    let qi_share = entries.iter().filter(|e| e.quasi_identifier).map(|e| e.contribution).sum();
    let non_qi_share = entries.iter().filter(|e| !e.quasi_identifier).map(|e| e.contribution).sum();
    Ok(ContributionReport { entries, qi_share, non_qi_share })
}

fn resample(dataset: &Dataset, seed: u64, tags: &[u64]) -> Dataset {
    let n = dataset.n_rows();
    let mut rng = substream(seed, tags);
    let rows = (0..n).map(|_| dataset.row(rng.gen_range(0..n)).to_vec()).collect();
    dataset.with_rows(rows, dataset.provenance()).expect("same shape")
}

/// Bootstrap standard deviation of each attribute's contribution over
/// record-resampled refits of the encoder and projection.
pub fn contribution_stability(
    dor: &Dataset,
    dpr: &Dataset,
    config: &PipelineConfig,
    resamples: usize,
    seed: u64,
) -> Result<HashMap<String, f64>, AttributionError> {
    if resamples < 2 {
        return Err(AttributionError::TooFewResamples(resamples));
    }
    let mut samples: HashMap<String, Vec<f64>> = HashMap::new();
    for b in 0..resamples {
        let boot_or = resample(dor, seed, &[tag("attr_boot_or"), b as u64]);
        let boot_pr = resample(dpr, seed, &[tag("attr_boot_pr"), b as u64]);
        let encoder = fit_encoder(&boot_or, &boot_pr, &EncodingPlan::default())?;
        let projection = fit_projection(
            &encoder.encode(&boot_or)?,
            &encoder.encode(&boot_pr)?,
            config.variance_retained,
            config.min_components,
            config.max_components,
            config.strategy,
        )?;
        let report = feature_contribution(&projection, &encoder)?;
        for entry in report.entries {
            samples.entry(entry.attr).or_default().push(entry.contribution);
        }
    }
    Ok(samples.into_iter().map(|(attr, values)| (attr, pop_std(&values))).collect())
}

/// Attach stability estimates to a contribution report.
pub fn with_stability(
    mut report: ContributionReport,
    stability: &HashMap<String, f64>,
) -> ContributionReport {
    for entry in &mut report.entries {
        entry.stability_sd = stability.get(&entry.attr).copied();
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttrDef, AttrKind, AttributeSchema, Value};
    use crate::linkage::{BlockingScheme, FitStrategy};
    use crate::rng::substream;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use std::sync::Arc;

    fn numeric_dataset(names: &[&str], rows: Vec<Vec<f64>>) -> Dataset {
        let schema = Arc::new(
            AttributeSchema::new(
                names
                    .iter()
                    .map(|n| AttrDef::new(n, AttrKind::Numeric, AttrRole::Analytical))
                    .collect(),
            )
            .unwrap(),
        );
        Dataset::new(
            schema,
            rows.into_iter().map(|r| r.into_iter().map(Value::Number).collect()).collect(),
            "t",
        )
        .unwrap()
    }

    fn fit(ds: &Dataset, variance: f64, min_c: usize) -> (Encoder, Projection) {
        let enc = fit_encoder(ds, ds, &EncodingPlan::default()).unwrap();
        let m = enc.encode(ds).unwrap();
        let proj = fit_projection(&m, &m, variance, min_c, 50, FitStrategy::Joint).unwrap();
        (enc, proj)
    }

    #[test]
    fn single_attribute_contributes_everything() {
        let mut rng = substream(1, &[1]);
        let rows: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.gen::<f64>()]).collect();
        let ds = numeric_dataset(&["x"], rows);
        let (enc, proj) = fit(&ds, 1.0, 1);
        let report = feature_contribution(&proj, &enc).unwrap();
        assert_abs_diff_eq!(report.entries[0].contribution, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.qi_share + report.non_qi_share, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_independent_unit_variance_attributes_split_evenly() {
        // Isotropic 2-D data: each attribute carries half of the variance.
        let mut rng = substream(2, &[2]);
        let rows: Vec<Vec<f64>> = (0..2_000)
            .map(|_| {
                vec![
                    rng.gen::<f64>() + rng.gen::<f64>() - 1.0,
                    rng.gen::<f64>() + rng.gen::<f64>() - 1.0,
                ]
            })
            .collect();
        let ds = numeric_dataset(&["a", "b"], rows);
        let (enc, proj) = fit(&ds, 1.0, 2);
        let report = feature_contribution(&proj, &enc).unwrap();
        for entry in &report.entries {
            assert!((entry.contribution - 0.5).abs() < 0.05, "{}: {}", entry.attr, entry.contribution);
        }
    }

    #[test]
    fn contributions_sum_to_one_and_rollup_is_exact() {
        let ds = crate::sim::generate(&crate::sim::SimConfig {
            n_records: 500,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        let (enc, proj) = fit(&ds, 0.9, 3);
        let report = feature_contribution(&proj, &enc).unwrap();
        let sum: f64 = report.entries.iter().map(|e| e.contribution).sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
        let qi_sum: f64 =
            report.entries.iter().filter(|e| e.quasi_identifier).map(|e| e.contribution).sum();
        let non_qi_sum: f64 =
            report.entries.iter().filter(|e| !e.quasi_identifier).map(|e| e.contribution).sum();
        assert_eq!(qi_sum, report.qi_share);
        assert_eq!(non_qi_sum, report.non_qi_share);
        assert_abs_diff_eq!(report.qi_share + report.non_qi_share, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn identity_projection_is_flagged() {
        let ds = numeric_dataset(&["x"], (0..10).map(|i| vec![i as f64]).collect());
        let enc = fit_encoder(&ds, &ds, &EncodingPlan::default()).unwrap();
        let m = enc.encode(&ds).unwrap();
        let proj = fit_projection(&m, &m, 0.9, 1, 50, FitStrategy::Identity).unwrap();
        assert!(matches!(
            feature_contribution(&proj, &enc),
            Err(AttributionError::IdentityProjection)
        ));
    }

    #[test]
    fn pre_scaling_is_removed_and_variance_dominates() {
        // Column b is column a scaled by 100: standardization removes the
        // scale, so their contributions coincide. Column c is constant and
        // therefore encodes to zero variance: the varying signal dominates it
        // in every resample.
        let mut rng = substream(3, &[3]);
        let rows: Vec<Vec<f64>> = (0..1_000)
            .map(|_| {
                let a: f64 = rng.gen::<f64>() * 2.0 - 1.0;
                vec![a, 100.0 * a, 3.25]
            })
            .collect();
        let ds = numeric_dataset(&["a", "b", "c"], rows);
        let (enc, proj) = fit(&ds, 1.0, 3);
        let report = feature_contribution(&proj, &enc).unwrap();
        let by_name: HashMap<&str, f64> =
            report.entries.iter().map(|e| (e.attr.as_str(), e.contribution)).collect();
        assert_abs_diff_eq!(by_name["a"], by_name["b"], epsilon = 1e-6);
        assert!(by_name["a"] > by_name["c"]);
        assert!(by_name["c"] < 1e-9);
        // Dominance is stable under bootstrap refits.
        let cfg = PipelineConfig::with_scheme(BlockingScheme::new(vec![], "all"));
        for b in 0..3u64 {
            let boot = resample(&ds, 17, &[b]);
            let enc = fit_encoder(&boot, &boot, &EncodingPlan::default()).unwrap();
            let m = enc.encode(&boot).unwrap();
            let proj = fit_projection(
                &m,
                &m,
                cfg.variance_retained,
                1,
                cfg.max_components,
                FitStrategy::Joint,
            )
            .unwrap();
            let r = feature_contribution(&proj, &enc).unwrap();
            let by: HashMap<&str, f64> =
                r.entries.iter().map(|e| (e.attr.as_str(), e.contribution)).collect();
            assert!(by["a"] > by["c"] && by["b"] > by["c"]);
        }
    }

    #[test]
    fn duplicate_resamples_give_zero_sd() {
        // A one-row dataset resamples to itself, so every refit is identical.
        let ds = numeric_dataset(&["x", "y"], vec![vec![1.0, 2.0], vec![1.0, 2.0]]);
        let cfg = PipelineConfig::with_scheme(BlockingScheme::new(vec![], "all"));
        let err = contribution_stability(&ds, &ds, &cfg, 1, 7);
        assert!(matches!(err, Err(AttributionError::TooFewResamples(1))));
        // Constant data has no variance at all; use a tiny varying dataset
        // where both resamples drawing the same single row distribution
        // produce identical contributions.
        let single = numeric_dataset(&["x", "y"], vec![vec![1.0, 2.0]]);
        let sds = contribution_stability(&single, &single, &cfg, 2, 7);
        // A single row has zero variance, so the projection cannot be fit.
        assert!(sds.is_err());
    }

    #[test]
    fn stability_sds_are_finite_on_simulated_data() {
        let ds = crate::sim::generate(&crate::sim::SimConfig {
            n_records: 400,
            seed: 8,
            ..Default::default()
        })
        .unwrap();
        let cfg = PipelineConfig::with_scheme(BlockingScheme::new(vec![], "all"));
        let sds = contribution_stability(&ds, &ds, &cfg, 4, 11).unwrap();
        assert!(!sds.is_empty());
        for (attr, sd) in &sds {
            assert!(sd.is_finite() && *sd >= 0.0, "{attr}: {sd}");
            assert!(*sd < 0.5, "{attr}: implausible instability {sd}");
        }
    }
}
