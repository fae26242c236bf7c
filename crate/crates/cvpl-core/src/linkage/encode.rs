//! Vectorization: consistent numeric encoding of both datasets.
//!
//! Numeric attributes are z-scored with pooled statistics, categorical
//! attributes one-hot encoded over the union dictionary of both datasets, and
//! timestamps expanded into hour-of-day and day-of-week features (UTC) before
//! z-scoring. Sensitive and hidden-id attributes never enter the feature
//! space. The same fitted encoder is applied to both sides, so the feature
//! spaces are semantically aligned column by column.
//!
//! Hierarchical labels (values containing `/`) encode hierarchically: the
//! full value and its top-level prefix each get a column, so a generalized
//! release value like `North` still shares a dimension with the fine values
//! it covers (`North/Urban`, ...). Plain one-hot would make every
//! generalized label orthogonal to its own fine values and hide the
//! candidate-concentration effect that coarsening produces.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::{AttrKind, AttrRole, Dataset, Value};
use crate::matrix::Matrix;
use crate::sim::{day_of_week, hour_of_day};

use super::LinkageError;

/// Which encoded columns a raw attribute occupies.
#[derive(Debug, Clone, Serialize)]
pub struct ColumnSpan {
    pub attr: String,
    pub role: AttrRole,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Serialize)]
enum Feature {
    ZScore { attr: String, source: NumericSource, mean: f64, sd: f64 },
    OneHot { attr: String, categories: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
enum NumericSource {
    Raw,
    Hour,
    DayOfWeek,
}

/// Fitted vectorization operator.
#[derive(Debug, Clone, Serialize)]
pub struct Encoder {
    features: Vec<Feature>,
    spans: Vec<ColumnSpan>,
    dim: usize,
    #[serde(skip)]
    category_index: Vec<HashMap<String, usize>>,
}

/// Which attributes to encode; defaults to every quasi-identifier and
/// analytical attribute of the shared schema.
#[derive(Debug, Clone, Default)]
pub struct EncodingPlan {
    /// Attribute names to include; `None` means all observable attributes.
    pub include: Option<Vec<String>>,
}

fn pooled_numeric(
    datasets: &[&Dataset],
    col: usize,
    source: NumericSource,
) -> Result<(f64, f64), LinkageError> {
    let mut values = Vec::new();
    for ds in datasets {
        for (r, row) in ds.rows().iter().enumerate() {
            values.push(numeric_value(&row[col], source, r, &ds.schema().attrs()[col].name)?);
        }
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

fn numeric_value(value: &Value, source: NumericSource, row: usize, attr: &str) -> Result<f64, LinkageError> {
    match (source, value) {
        (NumericSource::Raw, Value::Number(x)) => Ok(*x),
        (NumericSource::Raw, Value::Time(t)) => Ok(*t as f64),
        (NumericSource::Hour, Value::Time(t)) => Ok(hour_of_day(*t) as f64),
        (NumericSource::DayOfWeek, Value::Time(t)) => Ok(day_of_week(*t) as f64),
        (_, Value::Null) => Err(LinkageError::NullValue { row, attr: attr.to_string() }),
        _ => Err(LinkageError::KindMismatch { attr: attr.to_string(), expected: "numeric" }),
    }
}

/// Fit the shared encoder on both datasets.
pub fn fit_encoder(dor: &Dataset, dpr: &Dataset, plan: &EncodingPlan) -> Result<Encoder, LinkageError> {
    let schema = dor.schema();
    if dpr.schema() != schema {
        return Err(LinkageError::InvalidParam("datasets must share a schema".into()));
    }
    let include: Vec<String> = match &plan.include {
        Some(names) => {
            for n in names {
                let def = schema.attr(n).ok_or_else(|| LinkageError::UnknownAttribute(n.clone()))?;
                if !matches!(def.role, AttrRole::QuasiIdentifier | AttrRole::Analytical) {
                    return Err(LinkageError::InvalidParam(format!(
                        "attribute {n:?} is not observable (role {})",
                        def.role.as_str()
                    )));
                }
            }
            names.clone()
        }
        None => schema.observable(),
    };

    let datasets = [dor, dpr];
    let mut features = Vec::new();
    let mut spans = Vec::new();
    let mut category_index = Vec::new();
    let mut dim = 0usize;

    for name in &include {
        let col = schema.position(name).expect("validated above");
        let def = &schema.attrs()[col];
        let start = dim;
        match def.kind {
            AttrKind::Numeric => {
                let (mean, sd) = pooled_numeric(&datasets, col, NumericSource::Raw)?;
                features.push(Feature::ZScore { attr: name.clone(), source: NumericSource::Raw, mean, sd });
                category_index.push(HashMap::new());
                dim += 1;
            }
            AttrKind::Timestamp => {
                for source in [NumericSource::Hour, NumericSource::DayOfWeek] {
                    let (mean, sd) = pooled_numeric(&datasets, col, source)?;
                    features.push(Feature::ZScore { attr: name.clone(), source, mean, sd });
                    category_index.push(HashMap::new());
                    dim += 1;
                }
            }
            AttrKind::Categorical => {
                let mut union = BTreeSet::new();
                for ds in &datasets {
                    for (r, row) in ds.rows().iter().enumerate() {
                        match &row[col] {
                            Value::Text(s) => {
                                union.insert(s.clone());
                                if let Some(prefix) = hierarchy_prefix(s) {
                                    union.insert(prefix.to_string());
                                }
                            }
                            Value::Null => {
                                return Err(LinkageError::NullValue { row: r, attr: name.clone() })
                            }
                            _ => {
                                return Err(LinkageError::KindMismatch {
                                    attr: name.clone(),
                                    expected: "categorical",
                                })
                            }
                        }
                    }
                }
                let categories: Vec<String> = union.into_iter().collect();
                let index: HashMap<String, usize> =
                    categories.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
                dim += categories.len();
                features.push(Feature::OneHot { attr: name.clone(), categories });
                category_index.push(index);
            }
        }
        spans.push(ColumnSpan { attr: name.clone(), role: def.role, start, len: dim - start });
    }

    Ok(Encoder { features, spans, dim, category_index })
}

impl Encoder {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Raw-attribute to encoded-column map.
    pub fn spans(&self) -> &[ColumnSpan] {
        &self.spans
    }

    /// Stable fingerprint of the fitted state.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("encoder serializes");
        let digest = Sha256::digest(&json);
        hex_prefix(&digest, 16)
    }

    /// Encode a dataset into the fitted feature space (rows x dim).
    pub fn encode(&self, dataset: &Dataset) -> Result<Matrix, LinkageError> {
        let schema = dataset.schema();
        let mut cols = Vec::with_capacity(self.features.len());
        for f in &self.features {
            let attr = match f {
                Feature::ZScore { attr, .. } | Feature::OneHot { attr, .. } => attr,
            };
            cols.push(
                schema
                    .position(attr)
                    .ok_or_else(|| LinkageError::UnknownAttribute(attr.clone()))?,
            );
        }
        let mut out = Matrix::zeros(dataset.n_rows(), self.dim);
        for (r, row) in dataset.rows().iter().enumerate() {
            let dest = out.row_mut(r);
            let mut j = 0usize;
            for (f, &c) in self.features.iter().zip(&cols) {
                match f {
                    Feature::ZScore { attr, source, mean, sd } => {
                        let v = numeric_value(&row[c], *source, r, attr)?;
                        // Constant columns (sd = 0) encode as all-zero.
                        dest[j] = if *sd > 0.0 { (v - mean) / sd } else { 0.0 };
                        j += 1;
                    }
                    Feature::OneHot { attr, categories } => {
                        match &row[c] {
                            Value::Text(s) => {
                                let index = &self.category_index[feature_pos(&self.features, attr)];
                                if let Some(&k) = index.get(s) {
                                    dest[j + k] = 1.0;
                                }
                                if let Some(prefix) = hierarchy_prefix(s) {
                                    if let Some(&k) = index.get(prefix) {
                                        dest[j + k] = 1.0;
                                    }
                                }
                            }
                            Value::Null => {
                                return Err(LinkageError::NullValue { row: r, attr: attr.clone() })
                            }
                            _ => {
                                return Err(LinkageError::KindMismatch {
                                    attr: attr.clone(),
                                    expected: "categorical",
                                })
                            }
                        }
                        j += categories.len();
                    }
                }
            }
        }
        Ok(out)
    }

    /// Categorical dictionary of an encoded attribute, if it is one-hot.
    pub fn categories(&self, attr: &str) -> Option<&[String]> {
        self.features.iter().find_map(|f| match f {
            Feature::OneHot { attr: a, categories } if a == attr => Some(categories.as_slice()),
            _ => None,
        })
    }

    /// Factored form of the encoded space: z-scored numeric columns plus the
    /// active one-hot column codes per categorical attribute (full value and,
    /// for hierarchical values, its prefix).
    ///
    /// Squared Euclidean distance in the full encoded space equals the
    /// numeric part plus the symmetric difference of the active column sets.
    pub fn encode_factored(&self, dataset: &Dataset) -> Result<FactoredRows, LinkageError> {
        let schema = dataset.schema();
        let n = dataset.n_rows();
        let n_num = self.features.iter().filter(|f| matches!(f, Feature::ZScore { .. })).count();
        let n_cat = self.features.len() - n_num;
        let mut numeric = Matrix::zeros(n, n_num);
        let mut categories: Vec<Vec<CatCode>> = vec![vec![CatCode::default(); n_cat]; n];
        for (r, row) in dataset.rows().iter().enumerate() {
            let mut jn = 0usize;
            let mut jc = 0usize;
            for f in &self.features {
                match f {
                    Feature::ZScore { attr, source, mean, sd } => {
                        let c = schema
                            .position(attr)
                            .ok_or_else(|| LinkageError::UnknownAttribute(attr.clone()))?;
                        let v = numeric_value(&row[c], *source, r, attr)?;
                        numeric.set(r, jn, if *sd > 0.0 { (v - mean) / sd } else { 0.0 });
                        jn += 1;
                    }
                    Feature::OneHot { attr, categories: dict } => {
                        let c = schema
                            .position(attr)
                            .ok_or_else(|| LinkageError::UnknownAttribute(attr.clone()))?;
                        let code = match &row[c] {
                            Value::Text(s) => {
                                let index = &self.category_index[feature_pos(&self.features, attr)];
                                // Unknown values take sentinels past the dictionary.
                                let full =
                                    index.get(s).map(|&k| k as u32).unwrap_or(dict.len() as u32);
                                let prefix = hierarchy_prefix(s)
                                    .map(|p| {
                                        index.get(p).map(|&k| k as u32).unwrap_or(dict.len() as u32 + 1)
                                    })
                                    .unwrap_or(full);
                                CatCode { full, prefix }
                            }
                            Value::Null => {
                                return Err(LinkageError::NullValue { row: r, attr: attr.clone() })
                            }
                            _ => {
                                return Err(LinkageError::KindMismatch {
                                    attr: attr.clone(),
                                    expected: "categorical",
                                })
                            }
                        };
                        categories[r][jc] = code;
                        jc += 1;
                    }
                }
            }
        }
        Ok(FactoredRows { numeric, categories })
    }
}

/// Active one-hot columns of one categorical cell: the full value plus, for
/// hierarchical values, its prefix (`prefix == full` for flat values).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CatCode {
    pub full: u32,
    pub prefix: u32,
}

impl CatCode {
    fn set_size(&self) -> usize {
        if self.prefix == self.full {
            1
        } else {
            2
        }
    }

    fn intersection(&self, other: &CatCode) -> usize {
        let mut n = 0;
        if self.full == other.full || (other.prefix != other.full && self.full == other.prefix) {
            n += 1;
        }
        if self.prefix != self.full
            && (self.prefix == other.full || (other.prefix != other.full && self.prefix == other.prefix))
        {
            n += 1;
        }
        n
    }
}

/// Compact per-row representation produced by [`Encoder::encode_factored`].
#[derive(Debug, Clone)]
pub struct FactoredRows {
    pub numeric: Matrix,
    pub categories: Vec<Vec<CatCode>>,
}

impl FactoredRows {
    /// Squared Euclidean distance between two rows in the full encoded space.
    #[inline]
    pub fn sq_dist(&self, i: usize, other: &FactoredRows, j: usize) -> f64 {
        let mut acc = 0.0;
        for (a, b) in self.numeric.row(i).iter().zip(other.numeric.row(j)) {
            let d = a - b;
            acc += d * d;
        }
        for (a, b) in self.categories[i].iter().zip(&other.categories[j]) {
            acc += (a.set_size() + b.set_size() - 2 * a.intersection(b)) as f64;
        }
        acc
    }
}

/// Top-level prefix of a hierarchical label, when the value is hierarchical.
fn hierarchy_prefix(value: &str) -> Option<&str> {
    value.split_once('/').map(|(prefix, _)| prefix)
}

fn feature_pos(features: &[Feature], attr: &str) -> usize {
    features
        .iter()
        .position(|f| match f {
            Feature::OneHot { attr: a, .. } => a == attr,
            _ => false,
        })
        .expect("one-hot feature exists")
}

fn hex_prefix(bytes: &[u8], n: usize) -> String {
    bytes.iter().take(n / 2).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttrDef, AttributeSchema};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn toy_pair() -> (Dataset, Dataset) {
        let schema = Arc::new(
            AttributeSchema::new(vec![
                AttrDef::new("x", AttrKind::Numeric, AttrRole::Analytical),
                AttrDef::new("c", AttrKind::Categorical, AttrRole::Analytical),
            ])
            .unwrap(),
        );
        let dor = Dataset::new(
            schema.clone(),
            vec![
                vec![Value::Number(1.0), Value::Text("a".into())],
                vec![Value::Number(2.0), Value::Text("b".into())],
            ],
            "or",
        )
        .unwrap();
        let dpr = Dataset::new(
            schema,
            vec![
                vec![Value::Number(3.0), Value::Text("c".into())],
                vec![Value::Number(6.0), Value::Text("a".into())],
            ],
            "pr",
        )
        .unwrap();
        (dor, dpr)
    }

    #[test]
    fn four_row_toy_z_scores_match_hand_arithmetic() {
        // Pooled values 1,2,3,6: mean 3, population sd sqrt(14/4 - 0) =
        // sqrt((4+1+0+9)/4) = sqrt(3.5).
        let (dor, dpr) = toy_pair();
        let enc = fit_encoder(&dor, &dpr, &EncodingPlan::default()).unwrap();
        assert_eq!(enc.dim(), 4); // 1 numeric + 3 categories
        let sd = 3.5f64.sqrt();
        let m_or = enc.encode(&dor).unwrap();
        let m_pr = enc.encode(&dpr).unwrap();
        assert_abs_diff_eq!(m_or.get(0, 0), (1.0 - 3.0) / sd, epsilon = 1e-12);
        assert_abs_diff_eq!(m_or.get(1, 0), (2.0 - 3.0) / sd, epsilon = 1e-12);
        assert_abs_diff_eq!(m_pr.get(1, 0), (6.0 - 3.0) / sd, epsilon = 1e-12);
        // Categories sorted: a, b, c.
        assert_eq!(m_or.row(0)[1..], [1.0, 0.0, 0.0]);
        assert_eq!(m_or.row(1)[1..], [0.0, 1.0, 0.0]);
        assert_eq!(m_pr.row(0)[1..], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_numeric_column_encodes_as_zero() {
        let schema = Arc::new(
            AttributeSchema::new(vec![AttrDef::new("x", AttrKind::Numeric, AttrRole::Analytical)]).unwrap(),
        );
        let ds = Dataset::new(
            schema,
            vec![vec![Value::Number(5.0)], vec![Value::Number(5.0)]],
            "t",
        )
        .unwrap();
        let enc = fit_encoder(&ds, &ds, &EncodingPlan::default()).unwrap();
        let m = enc.encode(&ds).unwrap();
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.get(1, 0), 0.0);
    }

    #[test]
    fn union_dictionary_covers_release_only_categories() {
        let (dor, dpr) = toy_pair();
        let enc = fit_encoder(&dor, &dpr, &EncodingPlan::default()).unwrap();
        // "c" appears only in the release; original rows encode 0 there.
        let m_or = enc.encode(&dor).unwrap();
        assert_eq!(m_or.get(0, 3), 0.0);
        assert_eq!(m_or.get(1, 3), 0.0);
        assert_eq!(enc.categories("c").unwrap(), ["a", "b", "c"]);
    }

    #[test]
    fn null_cell_is_reported_with_location() {
        let schema = Arc::new(
            AttributeSchema::new(vec![AttrDef::new("x", AttrKind::Numeric, AttrRole::Analytical)]).unwrap(),
        );
        let ds = Dataset::new(schema, vec![vec![Value::Number(1.0)], vec![Value::Null]], "t").unwrap();
        let err = fit_encoder(&ds, &ds, &EncodingPlan::default()).unwrap_err();
        match err {
            LinkageError::NullValue { row, attr } => {
                assert_eq!(row, 1);
                assert_eq!(attr, "x");
            }
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn sensitive_attributes_are_excluded() {
        let schema = Arc::new(
            AttributeSchema::new(vec![
                AttrDef::new("x", AttrKind::Numeric, AttrRole::Analytical),
                AttrDef::new("diagnosis", AttrKind::Categorical, AttrRole::Sensitive),
            ])
            .unwrap(),
        );
        let ds = Dataset::new(
            schema,
            vec![
                vec![Value::Number(1.0), Value::Text("a".into())],
                vec![Value::Number(2.0), Value::Text("b".into())],
            ],
            "t",
        )
        .unwrap();
        let enc = fit_encoder(&ds, &ds, &EncodingPlan::default()).unwrap();
        assert_eq!(enc.dim(), 1);
        assert!(enc.spans().iter().all(|s| s.attr != "diagnosis"));
    }

    #[test]
    fn encoder_hash_is_stable_and_input_sensitive() {
        let (dor, dpr) = toy_pair();
        let a = fit_encoder(&dor, &dpr, &EncodingPlan::default()).unwrap().hash();
        let b = fit_encoder(&dor, &dpr, &EncodingPlan::default()).unwrap().hash();
        assert_eq!(a, b);
        let c = fit_encoder(&dor, &dor, &EncodingPlan::default()).unwrap().hash();
        assert_ne!(a, c);
    }
}
