//! Distance-based disclosure diagnostics: DCR, NNDR, and RCE.
//!
//! All three scan each protected record against every original record in the
//! standardized encoded space, before projection. One pass computes the two
//! smallest distances and the nearest index, from which all three metrics
//! follow.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Dataset, GroundTruth};
use crate::linkage::{fit_encoder, EncodingPlan};

use super::BaselineError;

/// Per-protected-record nearest-neighbor geometry against the originals.
#[derive(Debug, Clone, Serialize)]
pub struct DistanceDiagnostics {
    /// Distance to the closest original record.
    pub dcr: Vec<f64>,
    pub dcr_mean: f64,
    /// Ratio of first to second nearest-neighbor distance, in [0, 1].
    pub nndr: Vec<f64>,
    pub nndr_mean: f64,
    /// Index of the nearest original record (lowest index wins ties).
    pub nearest: Vec<usize>,
}

/// One scan computing DCR, NNDR, and nearest indices together.
pub fn distance_diagnostics(dpr: &Dataset, dor: &Dataset) -> Result<DistanceDiagnostics, BaselineError> {
    if dor.n_rows() < 2 {
        return Err(BaselineError::TooFewOriginals);
    }
    let encoder = fit_encoder(dor, dpr, &EncodingPlan::default())?;
    let f_or = encoder.encode_factored(dor)?;
    let f_pr = encoder.encode_factored(dpr)?;
    let n = dor.n_rows();

    let per_record: Vec<(f64, f64, usize)> = (0..dpr.n_rows())
        .into_par_iter()
        .map(|j| {
            let mut d1 = f64::INFINITY;
            let mut d2 = f64::INFINITY;
            let mut nearest = 0usize;
            for i in 0..n {
                let d = f_pr.sq_dist(j, &f_or, i);
                if d < d1 {
                    d2 = d1;
                    d1 = d;
                    nearest = i;
                } else if d < d2 {
                    d2 = d;
                }
            }
            (d1.sqrt(), d2.sqrt(), nearest)
        })
        .collect();

    let dcr: Vec<f64> = per_record.iter().map(|&(d1, _, _)| d1).collect();
    let nndr: Vec<f64> = per_record
        .iter()
        .map(|&(d1, d2, _)| {
            if d2 == 0.0 {
                // Exact duplicates twice over: the match is maximally
                // ambiguous, so the ratio saturates at 1.
                1.0
            } else {
                d1 / d2
            }
        })
        .collect();
    let nearest = per_record.iter().map(|&(_, _, i)| i).collect();
    let m = dpr.n_rows() as f64;
    Ok(DistanceDiagnostics {
        dcr_mean: dcr.iter().sum::<f64>() / m,
        nndr_mean: nndr.iter().sum::<f64>() / m,
        dcr,
        nndr,
        nearest,
    })
}

/// Minimum encoded-space distance from each protected record to the
/// originals, with the mean.
pub fn dcr(dpr: &Dataset, dor: &Dataset) -> Result<(Vec<f64>, f64), BaselineError> {
    let diag = distance_diagnostics(dpr, dor)?;
    Ok((diag.dcr, diag.dcr_mean))
}

/// First-to-second nearest-neighbor distance ratios, with the mean.
pub fn nndr(dpr: &Dataset, dor: &Dataset) -> Result<(Vec<f64>, f64), BaselineError> {
    let diag = distance_diagnostics(dpr, dor)?;
    Ok((diag.nndr, diag.nndr_mean))
}

/// Fraction of protected records whose nearest original record is one of
/// their ground-truth sources (a memorization diagnostic).
pub fn rce(
    diagnostics: &DistanceDiagnostics,
    gt: &GroundTruth,
    n_protected: usize,
) -> Result<f64, BaselineError> {
    if gt.is_empty() {
        return Err(BaselineError::EmptyGroundTruth);
    }
    let mut sources: Vec<Vec<usize>> = vec![Vec::new(); n_protected];
    for &(i, j) in gt.pairs() {
        sources[j].push(i);
    }
    let hits = diagnostics
        .nearest
        .iter()
        .enumerate()
        .filter(|(j, &i)| sources[*j].contains(&i))
        .count();
    Ok(hits as f64 / n_protected as f64)
}
