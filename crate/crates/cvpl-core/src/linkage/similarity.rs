//! Latent-space similarity functions.

use serde::Serialize;

use super::LinkageError;

/// Similarity used for candidate scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Similarity {
    Cosine,
    /// Euclidean distance converted to a bounded score, 1 / (1 + dist).
    EuclideanConverted,
}

impl Similarity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Similarity::Cosine => "cosine",
            Similarity::EuclideanConverted => "euclidean-converted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cosine" => Some(Similarity::Cosine),
            "euclidean" | "euclidean-converted" => Some(Similarity::EuclideanConverted),
            _ => None,
        }
    }

    #[inline]
    pub(crate) fn score(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Similarity::Cosine => cosine_unchecked(a, b),
            Similarity::EuclideanConverted => {
                let mut acc = 0.0;
                for (x, y) in a.iter().zip(b) {
                    let d = x - y;
                    acc += d * d;
                }
                1.0 / (1.0 + acc.sqrt())
            }
        }
    }
}

#[inline]
fn cosine_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    // Zero-norm vectors are never similar to anything; this keeps the value
    // defined and below any realistic decision threshold.
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Cosine similarity of two latent vectors, in [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, LinkageError> {
    if a.len() != b.len() {
        return Err(LinkageError::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    Ok(cosine_unchecked(a, b))
}

/// Euclidean similarity score 1 / (1 + dist), in (0, 1].
pub fn euclidean_converted(a: &[f64], b: &[f64]) -> Result<f64, LinkageError> {
    if a.len() != b.len() {
        return Err(LinkageError::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    Ok(Similarity::EuclideanConverted.score(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identical_vectors_score_one() {
        assert_abs_diff_eq!(cosine(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_vectors_score_zero() {
        assert_abs_diff_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn forty_five_degrees() {
        let s = cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((s - 0.707107).abs() < 1e-6);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_norm_convention() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn euclidean_score_is_bounded() {
        assert_abs_diff_eq!(euclidean_converted(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 1.0, epsilon = 1e-12);
        let s = euclidean_converted(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(s, 1.0 / 6.0, epsilon = 1e-12);
    }
}
