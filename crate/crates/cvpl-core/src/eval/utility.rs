//! Utility proxies comparing a release against its source.
//!
//! Four complementary components are reported together with their mean, so
//! no single metric drives the comparison: correlation preservation over the
//! encoded feature space, marginal similarity via Jensen-Shannon divergence,
//! a downstream nearest-centroid accuracy ratio, and pairwise distance
//! preservation over ground-truth-corresponding record pairs.

use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;

use crate::data::{AttrKind, AttrRole, Dataset, GroundTruth, Value};
use crate::linkage::{fit_encoder, EncodingPlan};
use crate::matrix::Matrix;
use crate::rng::{substream, tag};
use crate::stats::{jensen_shannon, pearson, spearman};

use super::EvalError;

/// Number of equal-width bins for numeric marginals.
const MARGINAL_BINS: usize = 20;
/// Number of sampled record pairs for distance preservation.
const DISTANCE_PAIRS: usize = 2_000;
/// Held-out fraction of the source for the downstream task.
const HOLDOUT_FRACTION: f64 = 0.2;

/// Utility components; absent components were not computable and are
/// excluded from the composite mean.
#[derive(Debug, Clone, Serialize)]
pub struct UtilityReport {
    pub correlation_preservation: Option<f64>,
    pub marginal_similarity: Option<f64>,
    pub downstream_accuracy_ratio: Option<f64>,
    pub pairwise_distance_preservation: Option<f64>,
    pub composite: f64,
}

impl UtilityReport {
    fn assemble(
        correlation_preservation: Option<f64>,
        marginal_similarity: Option<f64>,
        downstream_accuracy_ratio: Option<f64>,
        pairwise_distance_preservation: Option<f64>,
    ) -> Self {
        let parts: Vec<f64> = [
            correlation_preservation,
            marginal_similarity,
            downstream_accuracy_ratio,
            pairwise_distance_preservation,
        ]
        .iter()
        .flatten()
        .copied()
        .collect();
        let composite = if parts.is_empty() {
            0.0
        } else {
            parts.iter().sum::<f64>() / parts.len() as f64
        };
        Self {
            correlation_preservation,
            marginal_similarity,
            downstream_accuracy_ratio,
            pairwise_distance_preservation,
            composite,
        }
    }
}

fn column_correlations(m: &Matrix) -> Vec<Vec<Option<f64>>> {
    let d = m.n_cols();
    let n = m.n_rows();
    let cols: Vec<Vec<f64>> = (0..d).map(|j| (0..n).map(|i| m.get(i, j)).collect()).collect();
    let mut out = vec![vec![None; d]; d];
    for a in 0..d {
        for b in a + 1..d {
            out[a][b] = pearson(&cols[a], &cols[b]);
        }
    }
    out
}

fn correlation_preservation(enc_or: &Matrix, enc_pr: &Matrix) -> Option<f64> {
    let c_or = column_correlations(enc_or);
    let c_pr = column_correlations(enc_pr);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for a in 0..c_or.len() {
        for b in a + 1..c_or.len() {
            if let (Some(x), Some(y)) = (c_or[a][b], c_pr[a][b]) {
                xs.push(x);
                ys.push(y);
            }
        }
    }
    pearson(&xs, &ys)
}

fn marginal_similarity(dor: &Dataset, dpr: &Dataset) -> Option<f64> {
    let schema = dor.schema();
    let mut divergences = Vec::new();
    for (c, attr) in schema.attrs().iter().enumerate() {
        if attr.role == AttrRole::HiddenId {
            continue;
        }
        let (p, q) = match attr.kind {
            AttrKind::Categorical => {
                let mut categories: Vec<&str> = Vec::new();
                let counts = |ds: &Dataset| -> HashMap<String, f64> {
                    let mut m = HashMap::new();
                    for row in ds.rows() {
                        if let Value::Text(s) = &row[c] {
                            *m.entry(s.clone()).or_insert(0.0) += 1.0;
                        }
                    }
                    m
                };
                let m_or = counts(dor);
                let m_pr = counts(dpr);
                let mut union: Vec<&String> = m_or.keys().chain(m_pr.keys()).collect();
                union.sort_unstable();
                union.dedup();
                categories.extend(union.iter().map(|s| s.as_str()));
                let p: Vec<f64> = categories.iter().map(|s| *m_or.get(*s).unwrap_or(&0.0)).collect();
                let q: Vec<f64> = categories.iter().map(|s| *m_pr.get(*s).unwrap_or(&0.0)).collect();
                (p, q)
            }
            AttrKind::Numeric | AttrKind::Timestamp => {
                let value = |v: &Value| match v {
                    Value::Number(x) => *x,
                    Value::Time(t) => *t as f64,
                    _ => f64::NAN,
                };
                let all: Vec<f64> = dor
                    .rows()
                    .iter()
                    .chain(dpr.rows())
                    .map(|r| value(&r[c]))
                    .collect();
                let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if !(hi > lo) {
                    divergences.push(0.0);
                    continue;
                }
                let width = (hi - lo) / MARGINAL_BINS as f64;
                let hist = |ds: &Dataset| -> Vec<f64> {
                    let mut h = vec![0.0; MARGINAL_BINS];
                    for row in ds.rows() {
                        let v = value(&row[c]);
                        let bin = (((v - lo) / width) as usize).min(MARGINAL_BINS - 1);
                        h[bin] += 1.0;
                    }
                    h
                };
                (hist(dor), hist(dpr))
            }
        };
        divergences.push(jensen_shannon(&p, &q));
    }
    if divergences.is_empty() {
        return None;
    }
    Some(1.0 - divergences.iter().sum::<f64>() / divergences.len() as f64)
}

/// Nearest-centroid accuracy predicting labels from feature rows.
fn nearest_centroid_accuracy(
    train_rows: &[usize],
    train_labels: &[&str],
    train_m: &Matrix,
    test_rows: &[usize],
    test_labels: &[&str],
    test_m: &Matrix,
    feature_cols: &[usize],
) -> f64 {
    let mut centroids: HashMap<&str, (Vec<f64>, usize)> = HashMap::new();
    for (&row, &label) in train_rows.iter().zip(train_labels) {
        let entry = centroids.entry(label).or_insert_with(|| (vec![0.0; feature_cols.len()], 0));
        for (slot, &col) in entry.0.iter_mut().zip(feature_cols) {
            *slot += train_m.get(row, col);
        }
        entry.1 += 1;
    }
    let mut classes: Vec<(&str, Vec<f64>)> = centroids
        .into_iter()
        .map(|(label, (sum, count))| (label, sum.iter().map(|s| s / count as f64).collect()))
        .collect();
    classes.sort_by(|a, b| a.0.cmp(b.0));
    if classes.is_empty() || test_rows.is_empty() {
        return 0.0;
    }
    let mut hits = 0usize;
    for (&row, &label) in test_rows.iter().zip(test_labels) {
        let mut best: Option<(f64, &str)> = None;
        for (class, centroid) in &classes {
            let mut dist = 0.0;
            for (&col, c) in feature_cols.iter().zip(centroid) {
                let d = test_m.get(row, col) - c;
                dist += d * d;
            }
            if best.map_or(true, |(bd, _)| dist < bd) {
                best = Some((dist, class));
            }
        }
        if best.is_some_and(|(_, c)| c == label) {
            hits += 1;
        }
    }
    hits as f64 / test_rows.len() as f64
}

fn downstream_ratio(
    dor: &Dataset,
    dpr: &Dataset,
    enc_or: &Matrix,
    enc_pr: &Matrix,
    feature_cols: &[usize],
    seed: u64,
) -> Option<f64> {
    let channel_col = dor.schema().position("ad_channel")?;
    let labels_or: Vec<&str> =
        dor.rows().iter().map(|r| r[channel_col].as_text().unwrap_or("")).collect();
    let labels_pr: Vec<&str> =
        dpr.rows().iter().map(|r| r[channel_col].as_text().unwrap_or("")).collect();

    let n = dor.n_rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = substream(seed, &[tag("utility_split")]);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let test_n = ((n as f64 * HOLDOUT_FRACTION).round() as usize).clamp(1, n - 1);
    let test: Vec<usize> = order[..test_n].to_vec();
    let train: Vec<usize> = order[test_n..].to_vec();
    let test_labels: Vec<&str> = test.iter().map(|&i| labels_or[i]).collect();

    // Release-side training set mirrors the source split when sizes match,
    // so an identity release scores exactly 1.
    let (pr_rows, pr_labels): (Vec<usize>, Vec<&str>) = if dpr.n_rows() == n {
        (train.clone(), train.iter().map(|&i| labels_pr[i]).collect())
    } else {
        ((0..dpr.n_rows()).collect(), labels_pr.clone())
    };

    let train_labels: Vec<&str> = train.iter().map(|&i| labels_or[i]).collect();
    let acc_or = nearest_centroid_accuracy(
        &train, &train_labels, enc_or, &test, &test_labels, enc_or, feature_cols,
    );
    let acc_pr = nearest_centroid_accuracy(
        &pr_rows, &pr_labels, enc_pr, &test, &test_labels, enc_or, feature_cols,
    );
    (acc_or > 0.0).then(|| acc_pr / acc_or)
}

fn distance_preservation(
    enc_or: &Matrix,
    enc_pr: &Matrix,
    gt: &GroundTruth,
    seed: u64,
) -> Option<f64> {
    let by_original = gt.by_original();
    let eligible: Vec<(usize, usize)> =
        by_original.iter().map(|(&i, js)| (i, js[0])).collect();
    if eligible.len() < 2 {
        return None;
    }
    let mut rng = substream(seed, &[tag("utility_pairs")]);
    let dist = |m: &Matrix, a: usize, b: usize| -> f64 {
        m.row(a)
            .iter()
            .zip(m.row(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut d_or = Vec::with_capacity(DISTANCE_PAIRS);
    let mut d_pr = Vec::with_capacity(DISTANCE_PAIRS);
    for _ in 0..DISTANCE_PAIRS {
        let a = rng.gen_range(0..eligible.len());
        let mut b = rng.gen_range(0..eligible.len());
        while b == a {
            b = rng.gen_range(0..eligible.len());
        }
        let (i1, j1) = eligible[a];
        let (i2, j2) = eligible[b];
        d_or.push(dist(enc_or, i1, i2));
        d_pr.push(dist(enc_pr, j1, j2));
    }
    spearman(&d_or, &d_pr)
}

/// Utility of a release relative to its source.
pub fn utility(
    dor: &Dataset,
    dpr: &Dataset,
    gt: Option<&GroundTruth>,
    seed: u64,
) -> Result<UtilityReport, EvalError> {
    let encoder = fit_encoder(dor, dpr, &EncodingPlan::default())?;
    let enc_or = encoder.encode(dor)?;
    let enc_pr = encoder.encode(dpr)?;

    let corr = correlation_preservation(&enc_or, &enc_pr);
    let marginal = marginal_similarity(dor, dpr);
    let feature_cols: Vec<usize> = encoder
        .spans()
        .iter()
        .filter(|s| s.attr != "ad_channel")
        .flat_map(|s| s.start..s.start + s.len)
        .collect();
    let downstream = downstream_ratio(dor, dpr, &enc_or, &enc_pr, &feature_cols, seed);
    let distances = gt.and_then(|gt| distance_preservation(&enc_or, &enc_pr, gt, seed));

    Ok(UtilityReport::assemble(corr, marginal, downstream, distances))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttrDef, AttributeSchema};
    use crate::sim::{generate, SimConfig};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    #[test]
    fn identity_release_scores_one_everywhere() {
        let ds = generate(&SimConfig { n_records: 400, seed: 5, ..SimConfig::default() }).unwrap();
        let gt = GroundTruth::identity(ds.n_rows());
        let report = utility(&ds, &ds, Some(&gt), 7).unwrap();
        assert_abs_diff_eq!(report.correlation_preservation.unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(report.marginal_similarity.unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(report.downstream_accuracy_ratio.unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(report.pairwise_distance_preservation.unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(report.composite, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn marginal_similarity_two_bins_by_hand() {
        // Values split the pooled range [0, 1] into bins; with 15 of 20 rows
        // in the low half for the source and 5 of 20 for the release, the
        // per-attribute JSD is the closed-form two-point divergence.
        let schema = Arc::new(
            AttributeSchema::new(vec![AttrDef::new("x", AttrKind::Numeric, AttrRole::Analytical)]).unwrap(),
        );
        let mk = |low: usize| {
            let rows: Vec<Vec<Value>> = (0..20)
                .map(|i| vec![Value::Number(if i < low { 0.0 } else { 1.0 })])
                .collect();
            Dataset::new(schema.clone(), rows, "t").unwrap()
        };
        let dor = mk(15);
        let dpr = mk(5);
        let report = utility(&dor, &dpr, None, 1).unwrap();
        let expected_jsd = {
            let p: [f64; 2] = [0.75, 0.25];
            let q: [f64; 2] = [0.25, 0.75];
            let m: [f64; 2] = [0.5, 0.5];
            let mut j = 0.0;
            for i in 0..2 {
                j += 0.5 * p[i] * (p[i] / m[i]).log2() + 0.5 * q[i] * (q[i] / m[i]).log2();
            }
            j
        };
        assert_abs_diff_eq!(report.marginal_similarity.unwrap(), 1.0 - expected_jsd, epsilon = 1e-9);
    }

    #[test]
    fn missing_channel_flags_downstream_component() {
        let schema = Arc::new(
            AttributeSchema::new(vec![AttrDef::new("x", AttrKind::Numeric, AttrRole::Analytical)]).unwrap(),
        );
        let ds = Dataset::new(
            schema,
            (0..10).map(|i| vec![Value::Number(i as f64)]).collect(),
            "t",
        )
        .unwrap();
        let report = utility(&ds, &ds, None, 1).unwrap();
        assert!(report.downstream_accuracy_ratio.is_none());
        assert!(report.pairwise_distance_preservation.is_none()); // no gt
        assert!(report.marginal_similarity.is_some());
    }

    #[test]
    fn perturbation_reduces_utility() {
        let ds = generate(&SimConfig { n_records: 1_500, seed: 9, ..SimConfig::default() }).unwrap();
        let (low, gt_low) = crate::protect::perturb(&ds, crate::protect::PerturbLevel::Low, 3).unwrap();
        let (high, gt_high) = crate::protect::perturb(&ds, crate::protect::PerturbLevel::High, 3).unwrap();
        let u_low = utility(&ds, &low, Some(&gt_low), 7).unwrap();
        let u_high = utility(&ds, &high, Some(&gt_high), 7).unwrap();
        assert!(
            u_low.composite > u_high.composite,
            "low {} vs high {}",
            u_low.composite,
            u_high.composite
        );
    }
}
