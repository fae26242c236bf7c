//! Classical log-likelihood-ratio record linkage over attribute agreement
//! patterns, fitted under conditional independence.

use rand::Rng;
use serde::Serialize;

use crate::data::{AttrKind, AttrRole, Dataset, GroundTruth, Value};
use crate::linkage::{assign_blocks, BlockIndex, BlockingScheme, Generalization};
use crate::rng::{substream, tag};

use super::BaselineError;

/// Non-pair sample size per original record when estimating u.
const U_SAMPLE_PER_RECORD: usize = 10;
/// Cap on the total number of sampled non-pairs.
const U_SAMPLE_CAP: usize = 100_000;

/// How two values are compared for agreement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Comparator {
    /// Exact equality; hierarchical labels compare at the coarser of the two
    /// levels, mirroring a generalized release.
    Text,
    /// Equal bins of the given width.
    NumericBinned(u32),
    /// Equal after rounding to the nearest integer.
    NumericRounded,
    /// Same UTC day.
    SameDay,
}

impl Comparator {
    fn agree(&self, a: &Value, b: &Value) -> bool {
        match self {
            Comparator::Text => match (a, b) {
                (Value::Text(x), Value::Text(y)) => {
                    let xc = x.contains('/');
                    let yc = y.contains('/');
                    if xc != yc {
                        let prefix = |s: &str| s.split('/').next().unwrap_or(s).to_string();
                        prefix(x) == prefix(y)
                    } else {
                        x == y
                    }
                }
                _ => a == b,
            },
            Comparator::NumericBinned(w) => match (a.as_number(), b.as_number()) {
                (Some(x), Some(y)) => {
                    let w = f64::from(*w);
                    (x / w).floor() == (y / w).floor()
                }
                _ => false,
            },
            Comparator::NumericRounded => match (a.as_number(), b.as_number()) {
                (Some(x), Some(y)) => x.round() == y.round(),
                _ => false,
            },
            Comparator::SameDay => match (a.as_time(), b.as_time()) {
                (Some(x), Some(y)) => x.div_euclid(86_400) == y.div_euclid(86_400),
                _ => false,
            },
        }
    }
}

/// One attribute's fitted match/non-match model.
#[derive(Debug, Clone, Serialize)]
pub struct FsAttr {
    pub name: String,
    #[serde(skip)]
    col: usize,
    comparator: Comparator,
    /// Smoothed agreement rate on co-blocked true pairs.
    pub m: f64,
    /// Smoothed agreement rate on sampled co-blocked non-pairs.
    pub u: f64,
    /// log(m/u).
    pub weight_agree: f64,
    /// log((1-m)/(1-u)).
    pub weight_disagree: f64,
    /// Attribute carries no discriminating signal; its weights are zero.
    pub no_variation: bool,
}

impl FsAttr {
    /// Net per-agreement weight in the linear form sum(gamma_i * w_i) + c.
    pub fn net_weight(&self) -> f64 {
        self.weight_agree - self.weight_disagree
    }
}

/// Fitted likelihood-ratio model.
#[derive(Debug, Clone, Serialize)]
pub struct FsModel {
    pub attrs: Vec<FsAttr>,
    pub smoothing: f64,
}

impl FsModel {
    /// Constant term c: the all-disagreement composite.
    pub fn constant(&self) -> f64 {
        self.attrs.iter().map(|a| a.weight_disagree).sum()
    }

    /// Composite log-likelihood ratio of one record pair.
    pub fn score(&self, x: &[Value], y: &[Value]) -> f64 {
        let mut total = 0.0;
        for attr in &self.attrs {
            if attr.no_variation {
                continue;
            }
            if attr.comparator.agree(&x[attr.col], &y[attr.col]) {
                total += attr.weight_agree;
            } else {
                total += attr.weight_disagree;
            }
        }
        total
    }

    /// Agreement pattern of one record pair (true = agree).
    pub fn agreement_vector(&self, x: &[Value], y: &[Value]) -> Vec<bool> {
        self.attrs.iter().map(|a| a.comparator.agree(&x[a.col], &y[a.col])).collect()
    }
}

fn comparator_for(
    name: &str,
    kind: AttrKind,
    scheme: &BlockingScheme,
) -> Comparator {
    for key in &scheme.keys {
        if key.attr == name {
            if let Generalization::AgeBin(w) = key.generalization {
                return Comparator::NumericBinned(w);
            }
        }
    }
    match kind {
        AttrKind::Categorical => Comparator::Text,
        AttrKind::Timestamp => Comparator::SameDay,
        AttrKind::Numeric => {
            if name == "age" {
                Comparator::NumericBinned(10)
            } else {
                Comparator::NumericRounded
            }
        }
    }
}

/// Supervised fit: m from co-blocked true pairs, u from a seeded sample of
/// co-blocked non-pairs, both Laplace-smoothed.
pub fn fs_fit(
    dor: &Dataset,
    dpr: &Dataset,
    scheme: &BlockingScheme,
    gt: &GroundTruth,
    smoothing: f64,
) -> Result<FsModel, BaselineError> {
    if gt.is_empty() {
        return Err(BaselineError::EmptyGroundTruth);
    }
    let schema = dor.schema();
    let or_blocks = assign_blocks(dor, scheme)?;
    let pr_blocks = assign_blocks(dpr, scheme)?;
    let index = BlockIndex::build(&pr_blocks);

    let mut attrs: Vec<(String, usize, Comparator, bool)> = Vec::new();
    for (c, attr) in schema.attrs().iter().enumerate() {
        if !matches!(attr.role, AttrRole::QuasiIdentifier | AttrRole::Analytical) {
            continue;
        }
        // Constant columns cannot discriminate; flag them up front.
        let mut distinct: Option<&Value> = None;
        let mut constant = true;
        for row in dor.rows().iter().chain(dpr.rows()) {
            match distinct {
                None => distinct = Some(&row[c]),
                Some(v) if v == &row[c] => {}
                _ => {
                    constant = false;
                    break;
                }
            }
        }
        attrs.push((attr.name.clone(), c, comparator_for(&attr.name, attr.kind, scheme), constant));
    }

    let by_original = gt.by_original();
    let mut m_agree = vec![0usize; attrs.len()];
    let mut m_total = 0usize;
    for &(i, j) in gt.pairs() {
        if or_blocks[i] != pr_blocks[j] {
            continue;
        }
        m_total += 1;
        for (k, (_, c, cmp, _)) in attrs.iter().enumerate() {
            if cmp.agree(&dor.row(i)[*c], &dpr.row(j)[*c]) {
                m_agree[k] += 1;
            }
        }
    }

    let mut u_agree = vec![0usize; attrs.len()];
    let mut u_total = 0usize;
    'outer: for (i, block) in or_blocks.iter().enumerate() {
        let cands = index.candidates(block);
        if cands.is_empty() {
            continue;
        }
        let truths = by_original.get(&i);
        let mut rng = substream(0xF5, &[tag("fs_u"), i as u64]);
        let mut drawn = 0usize;
        let mut attempts = 0usize;
        while drawn < U_SAMPLE_PER_RECORD && attempts < U_SAMPLE_PER_RECORD * 4 {
            attempts += 1;
            let j = cands[rng.gen_range(0..cands.len())];
            if truths.is_some_and(|t| t.contains(&j)) {
                continue;
            }
            drawn += 1;
            u_total += 1;
            for (k, (_, c, cmp, _)) in attrs.iter().enumerate() {
                if cmp.agree(&dor.row(i)[*c], &dpr.row(j)[*c]) {
                    u_agree[k] += 1;
                }
            }
            if u_total >= U_SAMPLE_CAP {
                break 'outer;
            }
        }
    }

    let rate = |agree: usize, total: usize| (agree as f64 + smoothing) / (total as f64 + 2.0 * smoothing);
    let fitted = attrs
        .into_iter()
        .enumerate()
        .map(|(k, (name, col, comparator, constant))| {
            let (m, u) = if constant {
                (0.5, 0.5)
            } else {
                (rate(m_agree[k], m_total), rate(u_agree[k], u_total))
            };
            let no_variation = constant || (m - u).abs() < 1e-12;
            let (wa, wd) = if no_variation {
                (0.0, 0.0)
            } else {
                ((m / u).ln(), ((1.0 - m) / (1.0 - u)).ln())
            };
            FsAttr { name, col, comparator, m, u, weight_agree: wa, weight_disagree: wd, no_variation }
        })
        .collect();
    Ok(FsModel { attrs: fitted, smoothing })
}

/// Per-record outcome of the likelihood-ratio linker.
#[derive(Debug, Clone, Serialize)]
pub struct FsRecord {
    pub candidates: usize,
    pub max_score: Option<f64>,
    pub argmax: Option<usize>,
    /// Some candidate scored at or above the neutral cut (log-ratio 0).
    pub linked: bool,
}

/// Existential report of the likelihood-ratio linker.
#[derive(Debug, Clone, Serialize)]
pub struct FsReport {
    pub records: Vec<FsRecord>,
    /// Fraction of originals with at least one linked candidate.
    pub fs_lr: f64,
}

/// Score every within-block pair; a pair is linked when its composite
/// log-likelihood ratio is at or above zero.
pub fn fs_assess(
    model: &FsModel,
    dor: &Dataset,
    dpr: &Dataset,
    scheme: &BlockingScheme,
) -> Result<FsReport, BaselineError> {
    let or_blocks = assign_blocks(dor, scheme)?;
    let pr_blocks = assign_blocks(dpr, scheme)?;
    let index = BlockIndex::build(&pr_blocks);
    let mut records = Vec::with_capacity(dor.n_rows());
    let mut linked_count = 0usize;
    for (i, block) in or_blocks.iter().enumerate() {
        let cands = index.candidates(block);
        let mut best: Option<(f64, usize)> = None;
        let mut linked = false;
        for &j in cands {
            let s = model.score(dor.row(i), dpr.row(j));
            if s >= 0.0 {
                linked = true;
            }
            if best.map_or(true, |(bs, _)| s > bs) {
                best = Some((s, j));
            }
        }
        if linked {
            linked_count += 1;
        }
        records.push(FsRecord {
            candidates: cands.len(),
            max_score: best.map(|(s, _)| s),
            argmax: best.map(|(_, j)| j),
            linked,
        });
    }
    let fs_lr = linked_count as f64 / dor.n_rows() as f64;
    Ok(FsReport { records, fs_lr })
}

/// Top-1 precision of the likelihood-ratio linker under ground truth.
pub fn fs_precision_at_1(report: &FsReport, gt: &GroundTruth) -> Result<f64, BaselineError> {
    if gt.is_empty() {
        return Err(BaselineError::EmptyGroundTruth);
    }
    let by_original = gt.by_original();
    let hits = by_original
        .iter()
        .filter(|(&i, targets)| report.records[i].argmax.is_some_and(|j| targets.contains(&j)))
        .count();
    Ok(hits as f64 / by_original.len() as f64)
}

/// Consistency check between the two algebraic routes to the composite score
/// on an all-binary instance: the weighted dot product over the agreement
/// vector must equal the two-term likelihood composite minus its constant.
///
/// Returns the maximum absolute gap over all within-block pairs.
pub fn fs_equals_cvpl_check(
    model: &FsModel,
    dor: &Dataset,
    dpr: &Dataset,
    scheme: &BlockingScheme,
) -> Result<f64, BaselineError> {
    for attr in &model.attrs {
        let is_key = scheme.keys.iter().any(|k| k.attr == attr.name);
        if is_key {
            continue;
        }
        for row in dor.rows().iter().chain(dpr.rows()) {
            let ok = match &row[attr.col] {
                Value::Text(s) => s == "0" || s == "1",
                Value::Number(x) => *x == 0.0 || *x == 1.0,
                _ => false,
            };
            if !ok {
                return Err(BaselineError::NotBinary(attr.name.clone()));
            }
        }
    }
    let or_blocks = assign_blocks(dor, scheme)?;
    let pr_blocks = assign_blocks(dpr, scheme)?;
    let index = BlockIndex::build(&pr_blocks);
    let net: Vec<f64> = model.attrs.iter().map(FsAttr::net_weight).collect();
    let constant = model.constant();
    let mut max_gap: f64 = 0.0;
    for (i, block) in or_blocks.iter().enumerate() {
        for &j in index.candidates(block) {
            let gamma = model.agreement_vector(dor.row(i), dpr.row(j));
            // Route A: weighted dot product over the agreement indicators
            // (identity projection, binary encoding).
            let dot: f64 = gamma
                .iter()
                .zip(&net)
                .map(|(&g, &w)| if g { w } else { 0.0 })
                .sum();
            // Route B: two-term likelihood composite minus the constant.
            let composite = model.score(dor.row(i), dpr.row(j));
            max_gap = max_gap.max((dot - (composite - constant)).abs());
        }
    }
    Ok(max_gap)
}
