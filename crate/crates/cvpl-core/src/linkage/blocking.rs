//! Blocking: generalized quasi-identifier keys, block assignment, candidate
//! sets, structural recall, and the relaxation preorder.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{AttrKind, AttrRole, Dataset, GroundTruth, Value};

use super::LinkageError;

/// Generalization applied to one blocking key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "param")]
pub enum Generalization {
    /// Raw value equality.
    Identity,
    /// Numeric binning: floor(x / width) * width.
    AgeBin(u32),
    /// Hierarchical label level: 1 keeps the prefix before `/`, 2 keeps the
    /// full value.
    RegionLevel(u8),
    /// Timestamp rounding: floor(t / granularity) * granularity seconds.
    TimeRound(i64),
}

impl Generalization {
    fn compatible_with(&self, kind: AttrKind) -> bool {
        match self {
            Generalization::Identity => true,
            Generalization::AgeBin(_) => kind == AttrKind::Numeric,
            Generalization::RegionLevel(_) => kind == AttrKind::Categorical,
            Generalization::TimeRound(_) => kind == AttrKind::Timestamp,
        }
    }

    pub(crate) fn apply(&self, value: &Value) -> String {
        match (self, value) {
            (Generalization::Identity, v) => v.to_field(),
            (Generalization::AgeBin(w), Value::Number(x)) => {
                let w = f64::from(*w);
                (((x / w).floor() * w) as i64).to_string()
            }
            (Generalization::RegionLevel(1), Value::Text(s)) => {
                s.split('/').next().unwrap_or(s).to_string()
            }
            (Generalization::RegionLevel(_), Value::Text(s)) => s.clone(),
            (Generalization::TimeRound(g), Value::Time(t)) => (t.div_euclid(*g) * g).to_string(),
            (_, v) => v.to_field(),
        }
    }

    /// Whether blocks under `self` are always contained in blocks under
    /// `other` (i.e. `other` is at least as coarse, with aligned boundaries).
    fn refines(&self, other: &Generalization) -> bool {
        use Generalization::*;
        match (self, other) {
            (a, b) if a == b => true,
            (Identity, _) => true,
            (AgeBin(w1), AgeBin(w2)) => w2 % w1 == 0,
            (RegionLevel(l1), RegionLevel(l2)) => l2 <= l1,
            (RegionLevel(2), Identity) => true,
            (TimeRound(g1), TimeRound(g2)) => g1 > &0 && g2 % g1 == 0,
            _ => false,
        }
    }
}

/// One blocking key: a quasi-identifier plus its generalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockKey {
    pub attr: String,
    pub generalization: Generalization,
}

impl BlockKey {
    pub fn new(attr: &str, generalization: Generalization) -> Self {
        Self { attr: attr.to_string(), generalization }
    }
}

/// Ordered conjunction of generalized quasi-identifier keys.
///
/// The block identifier of a record is the tuple of generalized key values;
/// two records are candidates if and only if their identifiers are equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockingScheme {
    pub keys: Vec<BlockKey>,
    pub label: String,
}

impl BlockingScheme {
    pub fn new(keys: Vec<BlockKey>, label: &str) -> Self {
        Self { keys, label: label.to_string() }
    }

    fn validate(&self, dataset: &Dataset) -> Result<Vec<usize>, LinkageError> {
        let mut cols = Vec::with_capacity(self.keys.len());
        for key in &self.keys {
            let pos = dataset
                .schema()
                .position(&key.attr)
                .ok_or_else(|| LinkageError::UnknownAttribute(key.attr.clone()))?;
            let def = &dataset.schema().attrs()[pos];
            if def.role != AttrRole::QuasiIdentifier {
                return Err(LinkageError::KeyNotQuasiIdentifier(key.attr.clone()));
            }
            if !key.generalization.compatible_with(def.kind) {
                return Err(LinkageError::KindMismatch {
                    attr: key.attr.clone(),
                    expected: def.kind.as_str(),
                });
            }
            if let Generalization::RegionLevel(l) = key.generalization {
                if !(1..=2).contains(&l) {
                    return Err(LinkageError::InvalidParam(format!(
                        "region level must be 1 or 2, got {l}"
                    )));
                }
            }
            if let Generalization::AgeBin(w) = key.generalization {
                if w == 0 {
                    return Err(LinkageError::InvalidParam("age bin width must be positive".into()));
                }
            }
            if let Generalization::TimeRound(g) = key.generalization {
                if g <= 0 {
                    return Err(LinkageError::InvalidParam("time granularity must be positive".into()));
                }
            }
            cols.push(pos);
        }
        Ok(cols)
    }
}

/// Assign every row its block identifier under the scheme.
///
/// An empty key list maps all rows to a single block.
pub fn assign_blocks(dataset: &Dataset, scheme: &BlockingScheme) -> Result<Vec<String>, LinkageError> {
    let cols = scheme.validate(dataset)?;
    let mut out = Vec::with_capacity(dataset.n_rows());
    for (r, row) in dataset.rows().iter().enumerate() {
        let mut parts = Vec::with_capacity(scheme.keys.len());
        for (key, &c) in scheme.keys.iter().zip(&cols) {
            if row[c].is_null() {
                return Err(LinkageError::NullValue { row: r, attr: key.attr.clone() });
            }
            parts.push(key.generalization.apply(&row[c]));
        }
        out.push(parts.join("|"));
    }
    Ok(out)
}

/// Row indices grouped by block identifier, for constant-time candidate lookup.
#[derive(Debug, Clone)]
pub struct BlockIndex {
    map: HashMap<String, Vec<usize>>,
}

impl BlockIndex {
    pub fn build(block_ids: &[String]) -> Self {
        let mut map: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, id) in block_ids.iter().enumerate() {
            map.entry(id.clone()).or_default().push(i);
        }
        Self { map }
    }

    /// Candidate indices for a block identifier (empty when absent).
    pub fn candidates(&self, block_id: &str) -> &[usize] {
        self.map.get(block_id).map_or(&[], Vec::as_slice)
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.map.values().map(Vec::len).collect()
    }

    pub fn n_blocks(&self) -> usize {
        self.map.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<usize>)> {
        self.map.iter()
    }
}

/// Candidate set of an original record: protected rows sharing its block.
pub fn candidate_set<'a>(block_id: &str, protected_index: &'a BlockIndex) -> &'a [usize] {
    protected_index.candidates(block_id)
}

/// Fraction of true pairs that share a block: the structural ceiling on any
/// similarity method's recall under this scheme.
pub fn blocking_recall(
    scheme: &BlockingScheme,
    dor: &Dataset,
    dpr: &Dataset,
    gt: &GroundTruth,
) -> Result<f64, LinkageError> {
    if gt.is_empty() {
        return Err(LinkageError::EmptyGroundTruth);
    }
    let or_blocks = assign_blocks(dor, scheme)?;
    let pr_blocks = assign_blocks(dpr, scheme)?;
    let co = gt.pairs().iter().filter(|&&(i, j)| or_blocks[i] == pr_blocks[j]).count();
    Ok(co as f64 / gt.len() as f64)
}

/// Whether `relaxed` is a relaxation of `base`: every record pair co-blocked
/// under `base` stays co-blocked under `relaxed`, on the supplied datasets.
///
/// A structural check (key subset with equal-or-coarser, boundary-aligned
/// generalizations) short-circuits; otherwise the implication is verified
/// empirically over the pooled block partitions.
pub fn is_relaxation(
    base: &BlockingScheme,
    relaxed: &BlockingScheme,
    datasets: &[&Dataset],
) -> Result<bool, LinkageError> {
    if structurally_relaxes(base, relaxed) {
        return Ok(true);
    }
    // Partition refinement check: each base-block must map into one relaxed-block.
    let mut base_to_relaxed: HashMap<String, String> = HashMap::new();
    for ds in datasets {
        let b1 = assign_blocks(ds, base)?;
        let b2 = assign_blocks(ds, relaxed)?;
        for (id1, id2) in b1.into_iter().zip(b2) {
            match base_to_relaxed.get(&id1) {
                Some(existing) if existing != &id2 => return Ok(false),
                Some(_) => {}
                None => {
                    base_to_relaxed.insert(id1, id2);
                }
            }
        }
    }
    Ok(true)
}

fn structurally_relaxes(base: &BlockingScheme, relaxed: &BlockingScheme) -> bool {
    relaxed.keys.iter().all(|k2| {
        base.keys
            .iter()
            .any(|k1| k1.attr == k2.attr && k1.generalization.refines(&k2.generalization))
    })
}
