//! Protection mechanisms: k-anonymity generalization, perturbation, and
//! Gaussian-copula synthesis.
//!
//! All three are pure functions of (dataset, parameters, seed) and return the
//! protected release together with the ground-truth correspondence their
//! construction defines.

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::data::{AttrKind, AttrRole, DataError, Dataset, GroundTruth, Value};
use crate::linkage::Generalization;
use crate::matrix::Matrix;
use crate::rng::{substream, tag};

#[derive(Error, Debug)]
pub enum ProtectError {
    #[error("unknown attribute: {0}")]
    UnknownAttribute(String),
    #[error("k = {k} exceeds the dataset size {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be at least 1")]
    KZero,
    #[error("qi name list must not be empty")]
    EmptyQiList,
    #[error("dataset lacks required attribute {0:?}")]
    MissingAttr(&'static str),
    #[error("invalid correlation retention {0}; expected [0, 1]")]
    InvalidRho(f64),
    #[error("internal invariant violated: {0}")]
    Internal(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Week granularity in seconds, the coarsest time rounding.
const WEEK: i64 = 604_800;

/// One global-recoding ladder position. Region level 0 suppresses the region
/// to `*`; the terminal position also suppresses gender so a single
/// equivalence class remains and any k up to n is satisfiable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LadderPoint {
    pub age_bin_width: u32,
    pub region_level: u8,
    pub time_granularity: i64,
    pub suppress_gender: bool,
}

const fn point(age: u32, region: u8, time: i64, suppress_gender: bool) -> LadderPoint {
    LadderPoint { age_bin_width: age, region_level: region, time_granularity: time, suppress_gender }
}

/// Coarsening ladder, least to most coarse. Time is pinned at week rounding
/// so every release in the family carries the same temporal generalization;
/// hour/day rounding remain available through [`Generalization::TimeRound`]
/// for blocking schemes.
const LADDER: [LadderPoint; 7] = [
    point(5, 2, WEEK, false),
    point(10, 2, WEEK, false),
    point(10, 1, WEEK, false),
    point(20, 1, WEEK, false),
    point(30, 1, WEEK, false),
    point(200, 0, WEEK, false),
    point(200, 0, WEEK, true),
];

/// Fraction of rows that may be suppressed before falling through to the
/// next coarser ladder position.
const SUPPRESSION_BUDGET: f64 = 0.02;

/// Chosen generalization ladder position plus the rows it suppressed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneralizationMap {
    pub age_bin_width: u32,
    pub region_level: u8,
    pub time_granularity: i64,
    pub gender_suppressed: bool,
    pub ladder_position: usize,
    pub suppressed_rows: Vec<usize>,
}

impl GeneralizationMap {
    /// Blocking scheme aligned with this generalization: the same age bins,
    /// the same region level, and gender. Under aligned blocking the
    /// candidate set of a record is exactly its equivalence class, so all
    /// true pairs share a block and candidate pools scale with k.
    pub fn aligned_scheme(&self) -> crate::linkage::BlockingScheme {
        use crate::linkage::{BlockKey, BlockingScheme, Generalization};
        let mut keys = vec![BlockKey::new("age", Generalization::AgeBin(self.age_bin_width))];
        let mut label = format!("aligned:age_bin:{}", self.age_bin_width);
        if self.region_level >= 1 {
            keys.push(BlockKey::new("region", Generalization::RegionLevel(self.region_level)));
            label.push_str(&format!("+region_level:{}", self.region_level));
        }
        if !self.gender_suppressed {
            keys.push(BlockKey::new("gender", Generalization::Identity));
            label.push_str("+gender");
        }
        BlockingScheme::new(keys, &label)
    }
}

impl fmt::Display for GeneralizationMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ladder_position {}", self.ladder_position)?;
        writeln!(f, "age_bin_width {}", self.age_bin_width)?;
        writeln!(f, "region_level {}", self.region_level)?;
        writeln!(f, "time_granularity {}", self.time_granularity)?;
        writeln!(f, "gender_suppressed {}", self.gender_suppressed)?;
        writeln!(f, "suppressed {}", self.suppressed_rows.len())?;
        for r in &self.suppressed_rows {
            writeln!(f, "suppressed_row {r}")?;
        }
        Ok(())
    }
}

/// Size of the smallest group of rows sharing identical values on `qi_names`.
pub fn min_equivalence_class(dataset: &Dataset, qi_names: &[String]) -> Result<usize, ProtectError> {
    if qi_names.is_empty() {
        return Err(ProtectError::EmptyQiList);
    }
    let cols: Vec<usize> = qi_names
        .iter()
        .map(|n| dataset.schema().position(n).ok_or_else(|| ProtectError::UnknownAttribute(n.clone())))
        .collect::<Result<_, _>>()?;
    let mut classes: HashMap<String, usize> = HashMap::new();
    for row in dataset.rows() {
        let key: Vec<String> = cols.iter().map(|&c| row[c].to_field()).collect();
        *classes.entry(key.join("|")).or_default() += 1;
    }
    Ok(classes.values().copied().min().unwrap_or(0))
}

fn generalize_rows(dataset: &Dataset, point: LadderPoint) -> Result<Vec<Vec<Value>>, ProtectError> {
    let schema = dataset.schema();
    let age_col = schema.position("age").ok_or(ProtectError::MissingAttr("age"))?;
    let region_col = schema.position("region").ok_or(ProtectError::MissingAttr("region"))?;
    let gender_col = schema.position("gender").ok_or(ProtectError::MissingAttr("gender"))?;
    let time_col = schema
        .attrs()
        .iter()
        .position(|a| a.kind == AttrKind::Timestamp)
        .ok_or(ProtectError::MissingAttr("timestamp"))?;
    let mut rows = dataset.rows().to_vec();
    let wf = f64::from(point.age_bin_width);
    for row in &mut rows {
        if let Value::Number(a) = row[age_col] {
            // Bin midpoint keeps the released value numeric and centered.
            row[age_col] = Value::Number((a / wf).floor() * wf + wf / 2.0);
        }
        row[region_col] = if point.region_level == 0 {
            Value::Text("*".into())
        } else {
            Value::Text(Generalization::RegionLevel(point.region_level).apply(&row[region_col]))
        };
        if point.suppress_gender {
            row[gender_col] = Value::Text("*".into());
        }
        if let Value::Time(t) = row[time_col] {
            row[time_col] = Value::Time(t.div_euclid(point.time_granularity) * point.time_granularity);
        }
    }
    Ok(rows)
}

fn qi_names_of(dataset: &Dataset) -> Vec<String> {
    dataset
        .schema()
        .attrs()
        .iter()
        .filter(|a| a.role == AttrRole::QuasiIdentifier)
        .map(|a| a.name.clone())
        .collect()
}

fn undersized_rows(rows: &[Vec<Value>], qi_cols: &[usize], k: usize) -> Vec<usize> {
    let mut classes: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, row) in rows.iter().enumerate() {
        let key: Vec<String> = qi_cols.iter().map(|&c| row[c].to_field()).collect();
        classes.entry(key.join("|")).or_default().push(i);
    }
    let mut out = Vec::new();
    for members in classes.values() {
        if members.len() < k {
            out.extend_from_slice(members);
        }
    }
    out.sort_unstable();
    out
}

/// Global-recoding k-anonymization over the quasi-identifiers.
///
/// Walks the fixed coarsening ladder and takes the least-coarse position
/// whose undersized classes fit in the suppression budget, then suppresses
/// those rows. The output is re-verified to satisfy the class-size bound.
/// Row order and hidden ids are preserved, so the ground truth is the
/// identity pairing on surviving rows.
pub fn k_anonymize(
    dataset: &Dataset,
    k: usize,
) -> Result<(Dataset, GeneralizationMap, GroundTruth), ProtectError> {
    if k == 0 {
        return Err(ProtectError::KZero);
    }
    let n = dataset.n_rows();
    if k > n {
        return Err(ProtectError::KTooLarge { k, n });
    }
    let qi_names = qi_names_of(dataset);
    if qi_names.is_empty() {
        return Err(ProtectError::EmptyQiList);
    }
    let qi_cols: Vec<usize> =
        qi_names.iter().map(|q| dataset.schema().position(q).unwrap()).collect();
    let budget = (SUPPRESSION_BUDGET * n as f64).ceil() as usize;

    let mut chosen: Option<(usize, Vec<Vec<Value>>, Vec<usize>)> = None;
    for (pos, &point) in LADDER.iter().enumerate() {
        let rows = generalize_rows(dataset, point)?;
        let undersized = undersized_rows(&rows, &qi_cols, k);
        let last = pos + 1 == LADDER.len();
        if undersized.len() <= budget || last {
            chosen = Some((pos, rows, undersized));
            break;
        }
    }
    let (pos, rows, suppressed) = chosen.expect("ladder is nonempty");
    let kept_rows: Vec<Vec<Value>> = rows
        .iter()
        .enumerate()
        .filter(|(i, _)| suppressed.binary_search(i).is_err())
        .map(|(_, r)| r.clone())
        .collect();
    if kept_rows.is_empty() {
        return Err(ProtectError::Internal("suppression removed every row".into()));
    }
    let out = dataset.with_rows(kept_rows, &format!("{} k-anon(k={k})", dataset.provenance()))?;

    let verified = min_equivalence_class(&out, &qi_names)?;
    if verified < k {
        return Err(ProtectError::Internal(format!(
            "class-size bound violated after suppression: {verified} < {k}"
        )));
    }

    let pairs: Vec<(usize, usize)> = (0..n)
        .filter(|i| suppressed.binary_search(i).is_err())
        .enumerate()
        .map(|(new_idx, orig_idx)| (orig_idx, new_idx))
        .collect();
    let gt = GroundTruth::new(pairs, n, out.n_rows())?;
    let chosen_point = LADDER[pos];
    let map = GeneralizationMap {
        age_bin_width: chosen_point.age_bin_width,
        region_level: chosen_point.region_level,
        time_granularity: chosen_point.time_granularity,
        gender_suppressed: chosen_point.suppress_gender,
        ladder_position: pos,
        suppressed_rows: suppressed,
    };
    Ok((out, map, gt))
}

/// Perturbation strength levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbLevel {
    Low,
    Medium,
    High,
}

impl PerturbLevel {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "low" => Some(PerturbLevel::Low),
            "medium" => Some(PerturbLevel::Medium),
            "high" => Some(PerturbLevel::High),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PerturbLevel::Low => "low",
            PerturbLevel::Medium => "medium",
            PerturbLevel::High => "high",
        }
    }

    /// (age jitter years, time jitter seconds, categorical swap probability).
    pub fn magnitudes(&self) -> (i64, i64, f64) {
        match self {
            PerturbLevel::Low => (1, 3_600, 0.05),
            PerturbLevel::Medium => (3, 86_400, 0.15),
            PerturbLevel::High => (5, 604_800, 0.30),
        }
    }
}

/// Noise-based protection: age jitter, time jitter, and categorical swaps
/// drawn from each column's empirical marginal. Schema and row count are
/// preserved; the ground truth is the identity pairing.
pub fn perturb(
    dataset: &Dataset,
    level: PerturbLevel,
    seed: u64,
) -> Result<(Dataset, GroundTruth), ProtectError> {
    let (age_mag, time_mag, swap_p) = level.magnitudes();
    perturb_with(dataset, age_mag, time_mag, swap_p, level.as_str(), seed)
}

/// Perturbation with explicit magnitudes: uniform integer age jitter in
/// [-age_mag, age_mag], uniform time jitter in [-time_mag, time_mag] seconds,
/// and per-cell categorical swap probability.
pub fn perturb_with(
    dataset: &Dataset,
    age_mag: i64,
    time_mag: i64,
    swap_p: f64,
    label: &str,
    seed: u64,
) -> Result<(Dataset, GroundTruth), ProtectError> {
    let schema = dataset.schema();
    let age_col = schema.position("age");
    let mut rng = substream(seed, &[tag("perturb"), tag(label)]);

    // Empirical marginals for the swappable categorical columns.
    let mut marginals: HashMap<usize, Vec<(String, usize)>> = HashMap::new();
    for (c, attr) in schema.attrs().iter().enumerate() {
        if attr.kind == AttrKind::Categorical && attr.role != AttrRole::HiddenId {
            let mut counts: HashMap<String, usize> = HashMap::new();
            for row in dataset.rows() {
                if let Value::Text(s) = &row[c] {
                    *counts.entry(s.clone()).or_default() += 1;
                }
            }
            let mut pairs: Vec<(String, usize)> = counts.into_iter().collect();
            pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            marginals.insert(c, pairs);
        }
    }
    let draw_marginal = |rng: &mut rand_chacha::ChaCha8Rng, pairs: &[(String, usize)]| -> String {
        let total: usize = pairs.iter().map(|(_, c)| c).sum();
        let mut u = rng.gen_range(0..total);
        for (v, c) in pairs {
            if u < *c {
                return v.clone();
            }
            u -= c;
        }
        pairs.last().expect("nonempty marginal").0.clone()
    };

    let mut rows = dataset.rows().to_vec();
    for row in &mut rows {
        for (c, attr) in schema.attrs().iter().enumerate() {
            match attr.kind {
                AttrKind::Numeric if Some(c) == age_col => {
                    if let Value::Number(a) = row[c] {
                        let delta = rng.gen_range(-age_mag..=age_mag) as f64;
                        row[c] = Value::Number(a + delta);
                    }
                }
                AttrKind::Timestamp => {
                    if let Value::Time(t) = row[c] {
                        let delta = rng.gen_range(-time_mag..=time_mag);
                        row[c] = Value::Time(t + delta);
                    }
                }
                AttrKind::Categorical if attr.role != AttrRole::HiddenId => {
                    if rng.gen::<f64>() < swap_p {
                        let pairs = &marginals[&c];
                        row[c] = Value::Text(draw_marginal(&mut rng, pairs));
                    }
                }
                _ => {}
            }
        }
    }
    let out = dataset.with_rows(rows, &format!("{} perturb({label})", dataset.provenance()))?;
    let gt = GroundTruth::identity(dataset.n_rows());
    Ok((out, gt))
}

/// One fitted per-attribute marginal for the copula.
enum Marginal {
    /// Sorted source values (numeric or epoch seconds) and per-row normal scores.
    Numeric { sorted: Vec<f64>, is_time: bool },
    /// Categories ordered by descending frequency then lexicographic, with
    /// cumulative interval bounds.
    Categorical { categories: Vec<String>, cumulative: Vec<f64> },
    /// Single distinct value; passed through unchanged.
    Constant(Value),
}

struct CopulaFit {
    /// Attribute column indices that carry latent dimensions.
    latent_cols: Vec<usize>,
    marginals: HashMap<usize, Marginal>,
    /// n x p matrix of per-row normal scores.
    scores: Matrix,
    /// Cholesky factor of the latent correlation matrix.
    chol: DMatrix<f64>,
}

fn fit_copula(dataset: &Dataset, seed: u64) -> Result<CopulaFit, ProtectError> {
    let normal = Normal::standard();
    let schema = dataset.schema();
    let n = dataset.n_rows();
    let mut marginals = HashMap::new();
    let mut latent_cols = Vec::new();
    let mut score_cols: Vec<Vec<f64>> = Vec::new();

    // Each row's latent score is drawn uniformly within its value's CDF
    // interval (latent dithering), so scores are exactly standard normal even
    // for heavily tied or categorical columns. Without this, quantized scores
    // have variance below 1 and the rho blend under-retains.
    let dither = |col: usize, row: usize, lo: f64, hi: f64| -> f64 {
        let mut rng = substream(seed, &[tag("score_dither"), col as u64, row as u64]);
        let u = lo + rng.gen::<f64>() * (hi - lo);
        normal.inverse_cdf(u.clamp(1e-12, 1.0 - 1e-12))
    };

    for (c, attr) in schema.attrs().iter().enumerate() {
        if attr.role == AttrRole::HiddenId {
            continue;
        }
        match attr.kind {
            AttrKind::Numeric | AttrKind::Timestamp => {
                let is_time = attr.kind == AttrKind::Timestamp;
                let values: Vec<f64> = dataset
                    .rows()
                    .iter()
                    .map(|row| match &row[c] {
                        Value::Number(x) => Ok(*x),
                        Value::Time(t) => Ok(*t as f64),
                        _ => Err(ProtectError::Internal(format!("non-numeric value in {}", attr.name))),
                    })
                    .collect::<Result<_, _>>()?;
                let mut sorted = values.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                if sorted.first() == sorted.last() {
                    marginals.insert(c, Marginal::Constant(dataset.value(0, c).clone()));
                    continue;
                }
                // Tie runs share a CDF interval: a value equal to sorted
                // positions [lo, hi) occupies (lo/n, hi/n).
                let lower = |v: f64| sorted.partition_point(|x| *x < v) as f64 / n as f64;
                let upper = |v: f64| sorted.partition_point(|x| *x <= v) as f64 / n as f64;
                let scores: Vec<f64> = values
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| dither(c, i, lower(v), upper(v)))
                    .collect();
                marginals.insert(c, Marginal::Numeric { sorted, is_time });
                latent_cols.push(c);
                score_cols.push(scores);
            }
            AttrKind::Categorical => {
                let mut counts: HashMap<String, usize> = HashMap::new();
                for row in dataset.rows() {
                    if let Value::Text(s) = &row[c] {
                        *counts.entry(s.clone()).or_default() += 1;
                    }
                }
                if counts.len() <= 1 {
                    marginals.insert(c, Marginal::Constant(dataset.value(0, c).clone()));
                    continue;
                }
                let mut pairs: Vec<(String, usize)> = counts.into_iter().collect();
                pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                let mut cumulative = Vec::with_capacity(pairs.len() + 1);
                cumulative.push(0.0);
                let mut acc = 0.0;
                for (_, count) in &pairs {
                    acc += *count as f64 / n as f64;
                    cumulative.push(acc.min(1.0));
                }
                *cumulative.last_mut().unwrap() = 1.0;
                let index: HashMap<&String, usize> =
                    pairs.iter().enumerate().map(|(i, (v, _))| (v, i)).collect();
                let scores: Vec<f64> = dataset
                    .rows()
                    .iter()
                    .enumerate()
                    .map(|(i, row)| {
                        let Value::Text(s) = &row[c] else { unreachable!() };
                        let k = index[&s];
                        dither(c, i, cumulative[k], cumulative[k + 1])
                    })
                    .collect();
                marginals.insert(
                    c,
                    Marginal::Categorical {
                        categories: pairs.into_iter().map(|(v, _)| v).collect(),
                        cumulative,
                    },
                );
                latent_cols.push(c);
                score_cols.push(scores);
            }
        }
    }

    let p = latent_cols.len();
    let mut scores = Matrix::zeros(n, p);
    for (j, col) in score_cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            scores.set(i, j, *v);
        }
    }

    // Latent correlation with an eigenvalue floor so Cholesky succeeds.
    let mut corr = DMatrix::<f64>::identity(p, p);
    for a in 0..p {
        for b in a + 1..p {
            let col_a: Vec<f64> = (0..n).map(|i| scores.get(i, a)).collect();
            let col_b: Vec<f64> = (0..n).map(|i| scores.get(i, b)).collect();
            let r = crate::stats::pearson(&col_a, &col_b).unwrap_or(0.0);
            corr[(a, b)] = r;
            corr[(b, a)] = r;
        }
    }
    let eig = corr.clone().symmetric_eigen();
    let floor = 1e-8;
    if eig.eigenvalues.iter().any(|&v| v < floor) {
        let mut rebuilt = DMatrix::<f64>::zeros(p, p);
        for idx in 0..p {
            let v = eig.eigenvalues[idx].max(floor);
            let vec = eig.eigenvectors.column(idx);
            for a in 0..p {
                for b in 0..p {
                    rebuilt[(a, b)] += v * vec[a] * vec[b];
                }
            }
        }
        // Restore unit diagonal.
        for a in 0..p {
            let da = rebuilt[(a, a)].sqrt();
            for b in 0..p {
                rebuilt[(a, b)] /= da;
            }
        }
        for b in 0..p {
            let db = rebuilt[(b, b)].sqrt();
            for a in 0..p {
                rebuilt[(a, b)] /= db;
            }
        }
        corr = rebuilt;
    }
    let chol = corr
        .clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| ProtectError::Internal("latent correlation is not positive definite".into()))?;

    Ok(CopulaFit { latent_cols, marginals, scores, chol })
}

fn inverse_marginal(marginal: &Marginal, u: f64) -> Value {
    match marginal {
        Marginal::Numeric { sorted, is_time } => {
            let n = sorted.len();
            let idx = ((u * n as f64).floor() as usize).min(n - 1);
            if *is_time {
                Value::Time(sorted[idx].round() as i64)
            } else {
                Value::Number(sorted[idx])
            }
        }
        Marginal::Categorical { categories, cumulative } => {
            let mut idx = categories.len() - 1;
            for i in 0..categories.len() {
                if u < cumulative[i + 1] {
                    idx = i;
                    break;
                }
            }
            Value::Text(categories[idx].clone())
        }
        Marginal::Constant(v) => v.clone(),
    }
}

#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct SynthesisTrace {
    pub source_scores: Matrix,
    pub synthetic_scores: Matrix,
}

pub(crate) fn synthesize_traced(
    dataset: &Dataset,
    rho: f64,
    seed: u64,
) -> Result<(Dataset, GroundTruth, SynthesisTrace), ProtectError> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(ProtectError::InvalidRho(rho));
    }
    let normal = Normal::standard();
    let fit = fit_copula(dataset, seed)?;
    let n = dataset.n_rows();
    let p = fit.latent_cols.len();
    let schema = dataset.schema();
    let hidden = schema.hidden_id();
    let blend = (1.0 - rho * rho).sqrt();

    let mut synthetic_scores = Matrix::zeros(n, p);
    let mut rows = Vec::with_capacity(n);
    let mut eps = vec![0.0; p];
    let mut raw = vec![0.0; p];
    for i in 0..n {
        // Correlated fresh noise keeps every latent dimension standard normal
        // and the cross-attribute correlation intact at any rho.
        let mut rng = substream(seed, &[tag("synmake"), i as u64]);
        for r in raw.iter_mut() {
            *r = StandardNormal.sample(&mut rng);
        }
        for (a, e) in eps.iter_mut().enumerate() {
            let mut acc = 0.0;
            for b in 0..=a {
                acc += fit.chol[(a, b)] * raw[b];
            }
            *e = acc;
        }
        let mut row: Vec<Value> = dataset.row(i).to_vec();
        for (j, &c) in fit.latent_cols.iter().enumerate() {
            let z = rho * fit.scores.get(i, j) + blend * eps[j];
            synthetic_scores.set(i, j, z);
            let u = normal.cdf(z).clamp(0.0, 1.0 - 1e-15);
            row[c] = inverse_marginal(&fit.marginals[&c], u);
        }
        for (c, _) in schema.attrs().iter().enumerate() {
            if Some(c) == hidden || fit.latent_cols.contains(&c) {
                continue;
            }
            if let Some(m) = fit.marginals.get(&c) {
                if let Marginal::Constant(v) = m {
                    row[c] = v.clone();
                }
            }
        }
        rows.push(row);
    }
    let out = dataset.with_rows(rows, &format!("{} synthetic(rho={rho})", dataset.provenance()))?;
    let gt = GroundTruth::identity(n);
    Ok((out, gt, SynthesisTrace { source_scores: fit.scores, synthetic_scores }))
}

/// Gaussian-copula synthesis with per-row correlation retention `rho`.
///
/// Per-attribute empirical marginals and the latent normal-score correlation
/// are fitted on the input; each source row's latent vector is blended with
/// fresh correlated noise and mapped back through the inverse marginals.
/// Row i of the output corresponds to source row i.
pub fn synthesize(
    dataset: &Dataset,
    rho: f64,
    seed: u64,
) -> Result<(Dataset, GroundTruth), ProtectError> {
    let (out, gt, _) = synthesize_traced(dataset, rho, seed)?;
    Ok((out, gt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttrDef, AttributeSchema};
    use crate::sim::{generate, SimConfig};
    use crate::stats::pearson;

    fn sim(n: usize, seed: u64) -> Dataset {
        generate(&SimConfig { n_records: n, seed, ..SimConfig::default() }).unwrap()
    }

    /// Independent equivalence-class counter used as the test oracle.
    fn oracle_min_class(ds: &Dataset, qi: &[String]) -> usize {
        let cols: Vec<usize> = qi.iter().map(|q| ds.schema().position(q).unwrap()).collect();
        let mut seen: Vec<(Vec<String>, usize)> = Vec::new();
        for row in ds.rows() {
            let key: Vec<String> = cols.iter().map(|&c| row[c].to_field()).collect();
            match seen.iter_mut().find(|(k, _)| *k == key) {
                Some((_, c)) => *c += 1,
                None => seen.push((key, 1)),
            }
        }
        seen.iter().map(|(_, c)| *c).min().unwrap()
    }

    fn qi_names(ds: &Dataset) -> Vec<String> {
        ds.schema()
            .attrs()
            .iter()
            .filter(|a| a.role == AttrRole::QuasiIdentifier)
            .map(|a| a.name.clone())
            .collect()
    }

    #[test]
    fn k_one_uses_finest_position_without_suppression() {
        let ds = sim(300, 1);
        let (out, map, gt) = k_anonymize(&ds, 1).unwrap();
        assert_eq!(map.ladder_position, 0);
        assert!(map.suppressed_rows.is_empty());
        assert_eq!(out.n_rows(), ds.n_rows());
        assert_eq!(gt.len(), ds.n_rows());
    }

    #[test]
    fn k_five_on_toy_with_unique_combination() {
        let ds = sim(20, 3);
        let (out, _, _) = k_anonymize(&ds, 5).unwrap();
        let qi = qi_names(&out);
        assert!(oracle_min_class(&out, &qi) >= 5);
        assert!(min_equivalence_class(&out, &qi).unwrap() >= 5);
    }

    #[test]
    fn full_k_grid_is_accepted_and_verified() {
        let ds = sim(2_000, 7);
        for k in [2usize, 3, 5, 7, 10, 15, 20, 30, 50] {
            let (out, _, gt) = k_anonymize(&ds, k).unwrap();
            let qi = qi_names(&out);
            assert!(min_equivalence_class(&out, &qi).unwrap() >= k, "k = {k}");
            assert!(!gt.is_empty());
        }
    }

    #[test]
    fn k_larger_than_n_is_an_error() {
        let ds = sim(50, 1);
        assert!(matches!(k_anonymize(&ds, 51), Err(ProtectError::KTooLarge { .. })));
    }

    #[test]
    fn hidden_ids_survive_anonymization() {
        let ds = sim(500, 5);
        let (out, _, gt) = k_anonymize(&ds, 10).unwrap();
        let derived = crate::data::ground_truth_from_hidden_id(&ds, &out).unwrap();
        assert_eq!(derived.pairs(), gt.pairs());
    }

    #[test]
    fn min_class_trivial_cases() {
        let schema = Arc::new(
            AttributeSchema::new(vec![AttrDef::new("q", AttrKind::Categorical, AttrRole::QuasiIdentifier)])
                .unwrap(),
        );
        let same = Dataset::new(
            schema.clone(),
            vec![vec![Value::Text("a".into())]; 4],
            "t",
        )
        .unwrap();
        assert_eq!(min_equivalence_class(&same, &["q".into()]).unwrap(), 4);
        let distinct = Dataset::new(
            schema.clone(),
            (0..4).map(|i| vec![Value::Text(format!("v{i}"))]).collect(),
            "t",
        )
        .unwrap();
        assert_eq!(min_equivalence_class(&distinct, &["q".into()]).unwrap(), 1);
        // Classes {3, 2, 1} on a 6-row toy.
        let mixed = Dataset::new(
            schema,
            ["a", "a", "a", "b", "b", "c"].iter().map(|s| vec![Value::Text((*s).into())]).collect(),
            "t",
        )
        .unwrap();
        assert_eq!(min_equivalence_class(&mixed, &["q".into()]).unwrap(), 1);
    }

    #[test]
    fn min_class_unknown_attribute() {
        let ds = sim(10, 1);
        assert!(matches!(
            min_equivalence_class(&ds, &["nope".into()]),
            Err(ProtectError::UnknownAttribute(_))
        ));
    }

    #[test]
    fn perturb_low_magnitudes() {
        let ds = sim(400, 11);
        let (out, gt) = perturb(&ds, PerturbLevel::Low, 9).unwrap();
        assert_eq!(out.n_rows(), ds.n_rows());
        assert_eq!(gt.len(), ds.n_rows());
        let age = ds.schema().position("age").unwrap();
        let time = ds.schema().position("purchase_time").unwrap();
        let lag = ds.schema().position("days_after_ad").unwrap();
        for (a, b) in ds.rows().iter().zip(out.rows()) {
            let da = (a[age].as_number().unwrap() - b[age].as_number().unwrap()).abs();
            assert!(da <= 1.0, "age jitter exceeded low magnitude");
            let dt = (a[time].as_time().unwrap() - b[time].as_time().unwrap()).abs();
            assert!(dt <= 3_600, "time jitter exceeded low magnitude");
            // Non-perturbed numerics must be untouched.
            assert_eq!(a[lag], b[lag]);
        }
    }

    #[test]
    fn perturb_is_deterministic() {
        let ds = sim(300, 2);
        for level in [PerturbLevel::Low, PerturbLevel::Medium, PerturbLevel::High] {
            let (a, _) = perturb(&ds, level, 5).unwrap();
            let (b, _) = perturb(&ds, level, 5).unwrap();
            assert_eq!(a.rows(), b.rows());
        }
    }

    #[test]
    fn perturb_changes_are_confined_to_noised_attributes() {
        let ds = sim(300, 4);
        let (out, _) = perturb(&ds, PerturbLevel::High, 8).unwrap();
        let schema = ds.schema();
        let id = schema.hidden_id().unwrap();
        let lag = schema.position("days_after_ad").unwrap();
        for (a, b) in ds.rows().iter().zip(out.rows()) {
            assert_eq!(a[id], b[id]);
            assert_eq!(a[lag], b[lag]);
        }
    }

    #[test]
    fn synthesize_rho_one_reproduces_quantile_positions() {
        let ds = sim(500, 21);
        let (out, gt) = synthesize(&ds, 1.0, 3).unwrap();
        assert_eq!(gt.len(), ds.n_rows());
        let lag = ds.schema().position("days_after_ad").unwrap();
        // days_after_ad values are essentially distinct, so rank mapping
        // reproduces each source value exactly.
        let mut same = 0usize;
        for (a, b) in ds.rows().iter().zip(out.rows()) {
            if a[lag] == b[lag] {
                same += 1;
            }
        }
        assert!(same >= ds.n_rows() * 99 / 100, "only {same} lag values preserved at rho = 1");
    }

    #[test]
    fn synthesize_rho_zero_preserves_marginals_and_breaks_coupling() {
        let ds = sim(2_000, 22);
        let (out, _) = synthesize(&ds, 0.0, 4).unwrap();
        let age = ds.schema().position("age").unwrap();
        // Every synthetic numeric value is a source value (inverse-CDF
        // quantization onto the empirical support).
        let source: std::collections::HashSet<String> =
            ds.rows().iter().map(|r| r[age].to_field()).collect();
        for row in out.rows() {
            assert!(source.contains(&row[age].to_field()));
        }
        // Per-row coupling is gone.
        let src: Vec<f64> = ds.rows().iter().map(|r| r[age].as_number().unwrap()).collect();
        let syn: Vec<f64> = out.rows().iter().map(|r| r[age].as_number().unwrap()).collect();
        let r = pearson(&src, &syn).unwrap();
        assert!(r.abs() < 0.08, "rho = 0 left correlation {r}");
    }

    #[test]
    fn synthesize_latent_retention_matches_rho() {
        let ds = sim(10_000, 23);
        for rho in [0.6, 0.8, 0.95] {
            let (_, _, trace) = synthesize_traced(&ds, rho, 5).unwrap();
            let n = trace.source_scores.n_rows();
            let p = trace.source_scores.n_cols();
            for j in 0..p {
                let src: Vec<f64> = (0..n).map(|i| trace.source_scores.get(i, j)).collect();
                let syn: Vec<f64> = (0..n).map(|i| trace.synthetic_scores.get(i, j)).collect();
                let r = pearson(&src, &syn).unwrap();
                // Fisher-style bound: 3 standard errors of a correlation
                // estimate at this sample size.
                let se = (1.0 - rho * rho) / (n as f64).sqrt();
                assert!(
                    (r - rho).abs() <= 3.0 * se + 0.01,
                    "latent retention {r} vs rho {rho} (dim {j})"
                );
            }
        }
    }

    #[test]
    fn synthesize_constant_column_passes_through() {
        let schema = Arc::new(
            AttributeSchema::new(vec![
                AttrDef::new("c", AttrKind::Categorical, AttrRole::Analytical),
                AttrDef::new("x", AttrKind::Numeric, AttrRole::Analytical),
            ])
            .unwrap(),
        );
        let ds = Dataset::new(
            schema,
            (0..50).map(|i| vec![Value::Text("only".into()), Value::Number(i as f64)]).collect(),
            "t",
        )
        .unwrap();
        let (out, _) = synthesize(&ds, 0.5, 1).unwrap();
        for row in out.rows() {
            assert_eq!(row[0], Value::Text("only".into()));
        }
    }

    #[test]
    fn synthesize_is_deterministic() {
        let ds = sim(300, 2);
        let (a, _) = synthesize(&ds, 0.8, 5).unwrap();
        let (b, _) = synthesize(&ds, 0.8, 5).unwrap();
        assert_eq!(a.rows(), b.rows());
    }

    #[test]
    fn invalid_rho_is_rejected() {
        let ds = sim(10, 1);
        assert!(matches!(synthesize(&ds, 1.5, 0), Err(ProtectError::InvalidRho(_))));
    }

    use std::sync::Arc;
}
