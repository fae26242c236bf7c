//! Latent projection: principal components of the encoded feature space.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::matrix::Matrix;

use super::LinkageError;

/// Which rows the projection is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitStrategy {
    /// Pooled original and released rows (default; captures shared structure).
    Joint,
    /// Original rows only.
    SourceOnly,
    /// Released rows only.
    TargetOnly,
    /// No projection; the raw feature space is kept.
    Identity,
}

impl FitStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitStrategy::Joint => "joint",
            FitStrategy::SourceOnly => "source-only",
            FitStrategy::TargetOnly => "target-only",
            FitStrategy::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "joint" => Some(FitStrategy::Joint),
            "source-only" | "source_only" | "source" => Some(FitStrategy::SourceOnly),
            "target-only" | "target_only" | "target" => Some(FitStrategy::TargetOnly),
            "identity" | "none" => Some(FitStrategy::Identity),
            _ => None,
        }
    }
}

/// Fitted linear latent map.
#[derive(Debug, Clone)]
pub struct Projection {
    pub strategy: FitStrategy,
    /// Feature-space mean of the fitting set (empty for identity).
    pub mean: Vec<f64>,
    /// Row-orthonormal components, k x d (empty for identity).
    pub components: Matrix,
    /// Explained-variance ratios of the retained components, nonincreasing.
    pub explained_variance_ratio: Vec<f64>,
    pub variance_retained_target: f64,
    input_dim: usize,
}

impl Projection {
    /// Latent dimension.
    pub fn k(&self) -> usize {
        if self.strategy == FitStrategy::Identity {
            self.input_dim
        } else {
            self.components.n_rows()
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn is_identity(&self) -> bool {
        self.strategy == FitStrategy::Identity
    }

    /// Cumulative explained variance of the retained components.
    pub fn variance_retained(&self) -> f64 {
        self.explained_variance_ratio.iter().sum()
    }
}

/// Fit the projection on the configured row set.
///
/// `variance_retained` picks the smallest k whose cumulative explained
/// variance reaches the target, clamped to `[min_components, max_components]`
/// (and to the feature dimension).
pub fn fit_projection(
    source: &Matrix,
    target: &Matrix,
    variance_retained: f64,
    min_components: usize,
    max_components: usize,
    strategy: FitStrategy,
) -> Result<Projection, LinkageError> {
    if source.n_cols() != target.n_cols() {
        return Err(LinkageError::DimensionMismatch { expected: source.n_cols(), got: target.n_cols() });
    }
    let d = source.n_cols();
    if strategy == FitStrategy::Identity {
        return Ok(Projection {
            strategy,
            mean: Vec::new(),
            components: Matrix::zeros(0, 0),
            explained_variance_ratio: Vec::new(),
            variance_retained_target: variance_retained,
            input_dim: d,
        });
    }
    if !(0.0 < variance_retained && variance_retained <= 1.0) {
        return Err(LinkageError::InvalidParam(format!(
            "variance_retained must lie in (0, 1], got {variance_retained}"
        )));
    }

    let rows: Vec<&[f64]> = match strategy {
        FitStrategy::SourceOnly => (0..source.n_rows()).map(|i| source.row(i)).collect(),
        FitStrategy::TargetOnly => (0..target.n_rows()).map(|i| target.row(i)).collect(),
        _ => (0..source.n_rows())
            .map(|i| source.row(i))
            .chain((0..target.n_rows()).map(|i| target.row(i)))
            .collect(),
    };
    let n = rows.len();
    if n < 2 {
        return Err(LinkageError::InvalidParam("projection needs at least 2 fitting rows".into()));
    }

    let mut mean = vec![0.0; d];
    for row in &rows {
        for (m, v) in mean.iter_mut().zip(*row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // Sample covariance (upper triangle, then mirrored).
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for row in &rows {
        for (c, (v, m)) in centered.iter_mut().zip(row.iter().zip(&mean)) {
            *c = v - m;
        }
        for a in 0..d {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            for b in a..d {
                cov[(a, b)] += ca * centered[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(LinkageError::RankZero);
    }

    let ratios: Vec<f64> = eigenvalues.iter().map(|v| v / total).collect();
    let mut k = d;
    let mut cum = 0.0;
    for (i, r) in ratios.iter().enumerate() {
        cum += r;
        if cum >= variance_retained - 1e-12 {
            k = i + 1;
            break;
        }
    }
    let k = k.clamp(min_components.max(1), max_components.max(1)).min(d);

    let mut components = Matrix::zeros(k, d);
    for (out_row, &src) in order[..k].iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        // Deterministic sign: the largest-magnitude entry is positive.
        let mut pivot = 0usize;
        for j in 1..d {
            if col[j].abs() > col[pivot].abs() {
                pivot = j;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components.set(out_row, j, sign * col[j]);
        }
    }

    Ok(Projection {
        strategy,
        mean,
        components,
        explained_variance_ratio: ratios[..k].to_vec(),
        variance_retained_target: variance_retained,
        input_dim: d,
    })
}

/// Map encoded rows into the latent space (identity passes through).
pub fn project(projection: &Projection, matrix: &Matrix) -> Result<Matrix, LinkageError> {
    if matrix.n_cols() != projection.input_dim {
        return Err(LinkageError::DimensionMismatch {
            expected: projection.input_dim,
            got: matrix.n_cols(),
        });
    }
    if projection.is_identity() {
        return Ok(matrix.clone());
    }
    let k = projection.k();
    let d = projection.input_dim;
    let mut out = Matrix::zeros(matrix.n_rows(), k);
    for i in 0..matrix.n_rows() {
        let row = matrix.row(i);
        let dest = out.row_mut(i);
        for (c, slot) in dest.iter_mut().enumerate() {
            let comp = projection.components.row(c);
            let mut acc = 0.0;
            for j in 0..d {
                acc += (row[j] - projection.mean[j]) * comp[j];
            }
            *slot = acc;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Jacobi eigensolver for small symmetric matrices, used as an
    /// independent oracle against the nalgebra-backed implementation.
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _ in 0..200 {
            let mut p = 0;
            let mut q = 1;
            let mut off = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    if a[i][j].abs() > a[p][q].abs() {
                        p = i;
                        q = j;
                    }
                    off += a[i][j] * a[i][j];
                }
            }
            if off < 1e-24 {
                break;
            }
            let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..n {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..n {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
        ev
    }

    fn toy_5x3() -> Matrix {
        Matrix::from_rows(vec![
            vec![1.0, 2.0, 0.5],
            vec![2.0, 1.0, 1.5],
            vec![3.0, 4.0, -1.0],
            vec![4.0, 3.0, 2.0],
            vec![5.0, 6.0, 0.0],
        ])
    }

    fn sample_cov(m: &Matrix) -> Vec<Vec<f64>> {
        let d = m.n_cols();
        let n = m.n_rows();
        let means = m.col_means();
        let mut cov = vec![vec![0.0; d]; d];
        for i in 0..n {
            for a in 0..d {
                for b in 0..d {
                    cov[a][b] += (m.get(i, a) - means[a]) * (m.get(i, b) - means[b]);
                }
            }
        }
        for row in &mut cov {
            for v in row.iter_mut() {
                *v /= (n - 1) as f64;
            }
        }
        cov
    }

    #[test]
    fn eigenvalues_match_jacobi_oracle() {
        let m = toy_5x3();
        let proj = fit_projection(&m, &m, 1.0, 1, 3, FitStrategy::SourceOnly).unwrap();
        let oracle = jacobi_eigenvalues(sample_cov(&m));
        let total: f64 = oracle.iter().sum();
        for (i, ev) in oracle.iter().enumerate() {
            assert_abs_diff_eq!(proj.explained_variance_ratio[i], ev / total, epsilon = 1e-8);
        }
    }

    #[test]
    fn rank_one_line_explains_everything_with_one_component() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| {
            let t = i as f64;
            vec![2.0 * t, -t, 0.5 * t]
        }).collect();
        let m = Matrix::from_rows(rows);
        let proj = fit_projection(&m, &m, 0.99, 1, 3, FitStrategy::Joint).unwrap();
        assert_eq!(proj.k(), 1);
        assert_abs_diff_eq!(proj.explained_variance_ratio[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn k_is_clamped_to_min_components() {
        let m = toy_5x3();
        // Variance target reachable with 1 component is forced up to 3.
        let proj = fit_projection(&m, &m, 0.01, 3, 50, FitStrategy::Joint).unwrap();
        assert_eq!(proj.k(), 3);
    }

    #[test]
    fn components_are_row_orthonormal() {
        let m = toy_5x3();
        let proj = fit_projection(&m, &m, 1.0, 1, 3, FitStrategy::Joint).unwrap();
        let k = proj.k();
        for a in 0..k {
            for b in 0..k {
                let dot: f64 = proj
                    .components
                    .row(a)
                    .iter()
                    .zip(proj.components.row(b))
                    .map(|(x, y)| x * y)
                    .sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot, expected, epsilon = 1e-8);
            }
        }
        // And ratios are nonincreasing.
        for w in proj.explained_variance_ratio.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
    }

    #[test]
    fn identity_strategy_passes_rows_through() {
        let m = toy_5x3();
        let proj = fit_projection(&m, &m, 0.9, 3, 50, FitStrategy::Identity).unwrap();
        let z = project(&proj, &m).unwrap();
        assert_eq!(z, m);
        assert_eq!(proj.k(), 3);
    }

    #[test]
    fn rank_zero_input_is_an_error() {
        let m = Matrix::from_rows(vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(matches!(
            fit_projection(&m, &m, 0.9, 1, 5, FitStrategy::Joint),
            Err(LinkageError::RankZero)
        ));
    }

    #[test]
    fn projection_reproduces_centered_dot_products() {
        let m = toy_5x3();
        let proj = fit_projection(&m, &m, 1.0, 3, 3, FitStrategy::SourceOnly).unwrap();
        let z = project(&proj, &m).unwrap();
        // Full-rank projection preserves pairwise distances of centered rows.
        for i in 0..m.n_rows() {
            for j in 0..m.n_rows() {
                let d_raw: f64 = m
                    .row(i)
                    .iter()
                    .zip(m.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let d_lat: f64 = z
                    .row(i)
                    .iter()
                    .zip(z.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                assert_abs_diff_eq!(d_raw, d_lat, epsilon = 1e-8);
            }
        }
    }
}
