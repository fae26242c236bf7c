//! Schema-typed dataset representation, attribute roles, ground truth, and CSV IO.
//!
//! A [`Dataset`] is an immutable table of typed values described by an
//! [`AttributeSchema`]. Attribute roles partition the observable columns into
//! quasi-identifiers, analytical attributes, and sensitive attributes; at most
//! one column may carry the hidden identifier used exclusively for evaluation.
//!
//! On-disk formats: datasets are CSV with a header row (RFC 4180, UTF-8);
//! the schema travels in a sidecar text file with one `name kind role` line
//! per attribute. Numeric values serialize with fixed 6-decimal formatting so
//! that reports and round trips are byte-reproducible.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("header does not match schema: {0}")]
    HeaderMismatch(String),
    #[error("parse error at row {row}, column {column}: {detail}")]
    Parse { row: usize, column: String, detail: String },
    #[error("row {row} has {got} fields, expected {expected}")]
    RowWidth { row: usize, got: usize, expected: usize },
    #[error("dataset must contain at least one row")]
    Empty,
    #[error("dataset has no hidden-id attribute")]
    MissingHiddenId,
    #[error("unknown attribute: {0}")]
    UnknownAttribute(String),
    #[error("ground-truth index out of range: ({0}, {1})")]
    IndexOutOfRange(usize, usize),
}

/// Value type of an attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrKind {
    Numeric,
    Categorical,
    Timestamp,
}

impl AttrKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttrKind::Numeric => "numeric",
            AttrKind::Categorical => "categorical",
            AttrKind::Timestamp => "timestamp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "numeric" => Some(AttrKind::Numeric),
            "categorical" => Some(AttrKind::Categorical),
            "timestamp" => Some(AttrKind::Timestamp),
            _ => None,
        }
    }
}

/// Disclosure role of an attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttrRole {
    QuasiIdentifier,
    Analytical,
    Sensitive,
    HiddenId,
}

impl AttrRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttrRole::QuasiIdentifier => "quasi-identifier",
            AttrRole::Analytical => "analytical",
            AttrRole::Sensitive => "sensitive",
            AttrRole::HiddenId => "hidden-id",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "quasi-identifier" => Some(AttrRole::QuasiIdentifier),
            "analytical" => Some(AttrRole::Analytical),
            "sensitive" => Some(AttrRole::Sensitive),
            "hidden-id" => Some(AttrRole::HiddenId),
            _ => None,
        }
    }
}

/// One attribute definition: name, value kind, disclosure role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttrDef {
    pub name: String,
    pub kind: AttrKind,
    pub role: AttrRole,
}

impl AttrDef {
    pub fn new(name: &str, kind: AttrKind, role: AttrRole) -> Self {
        Self { name: name.to_string(), kind, role }
    }
}

/// Ordered attribute list with unique names and at most one hidden id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    attrs: Vec<AttrDef>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl AttributeSchema {
    pub fn new(attrs: Vec<AttrDef>) -> Result<Self, DataError> {
        let mut index = HashMap::new();
        let mut hidden = 0usize;
        for (i, a) in attrs.iter().enumerate() {
            if index.insert(a.name.clone(), i).is_some() {
                return Err(DataError::InvalidSchema(format!("duplicate attribute name: {}", a.name)));
            }
            if a.role == AttrRole::HiddenId {
                hidden += 1;
            }
        }
        if hidden > 1 {
            return Err(DataError::InvalidSchema("more than one hidden-id attribute".into()));
        }
        Ok(Self { attrs, index })
    }

    pub fn attrs(&self) -> &[AttrDef] {
        &self.attrs
    }

    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn attr(&self, name: &str) -> Option<&AttrDef> {
        self.position(name).map(|i| &self.attrs[i])
    }

    /// Index of the hidden-id column, if present.
    pub fn hidden_id(&self) -> Option<usize> {
        self.attrs.iter().position(|a| a.role == AttrRole::HiddenId)
    }

    /// Attribute names that are observable to the linkage pipeline
    /// (quasi-identifiers and analytical attributes).
    pub fn observable(&self) -> Vec<String> {
        self.attrs
            .iter()
            .filter(|a| matches!(a.role, AttrRole::QuasiIdentifier | AttrRole::Analytical))
            .map(|a| a.name.clone())
            .collect()
    }

    /// Restore the name index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self.attrs.iter().enumerate().map(|(i, a)| (a.name.clone(), i)).collect();
    }
}

/// Partition the schema into (quasi-identifier, analytical, sensitive) name lists.
///
/// The hidden-id attribute, when present, belongs to none of the three sets.
pub fn partition_attributes(schema: &AttributeSchema) -> (Vec<String>, Vec<String>, Vec<String>) {
    let mut q = Vec::new();
    let mut a = Vec::new();
    let mut s = Vec::new();
    for attr in schema.attrs() {
        match attr.role {
            AttrRole::QuasiIdentifier => q.push(attr.name.clone()),
            AttrRole::Analytical => a.push(attr.name.clone()),
            AttrRole::Sensitive => s.push(attr.name.clone()),
            AttrRole::HiddenId => {}
        }
    }
    (q, a, s)
}

/// A single cell value. Missing values are explicit nulls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Text(String),
    Time(i64),
    Null,
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_time(&self) -> Option<i64> {
        match self {
            Value::Time(t) => Some(*t),
            _ => None,
        }
    }

    /// Canonical CSV field form: fixed 6-decimal numerics, integer epoch
    /// seconds for timestamps, raw text, empty string for null.
    pub fn to_field(&self) -> String {
        match self {
            Value::Number(x) => format!("{x:.6}"),
            Value::Text(s) => s.clone(),
            Value::Time(t) => t.to_string(),
            Value::Null => String::new(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_field())
    }
}

/// Immutable typed record table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Arc<AttributeSchema>,
    rows: Vec<Vec<Value>>,
    provenance: String,
}

impl Dataset {
    pub fn new(
        schema: Arc<AttributeSchema>,
        rows: Vec<Vec<Value>>,
        provenance: &str,
    ) -> Result<Self, DataError> {
        if rows.is_empty() {
            return Err(DataError::Empty);
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(DataError::RowWidth { row: i + 1, got: row.len(), expected: schema.len() });
            }
        }
        Ok(Self { schema, rows, provenance: provenance.to_string() })
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> Arc<AttributeSchema> {
        Arc::clone(&self.schema)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[Value] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn value(&self, row: usize, col: usize) -> &Value {
        &self.rows[row][col]
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Column values by attribute name.
    pub fn column(&self, name: &str) -> Result<Vec<&Value>, DataError> {
        let idx = self
            .schema
            .position(name)
            .ok_or_else(|| DataError::UnknownAttribute(name.to_string()))?;
        Ok(self.rows.iter().map(|r| &r[idx]).collect())
    }

    /// Build a derived dataset with the same schema and new rows.
    pub fn with_rows(&self, rows: Vec<Vec<Value>>, provenance: &str) -> Result<Self, DataError> {
        Dataset::new(self.schema_arc(), rows, provenance)
    }
}

/// Match multiplicity of a ground-truth relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Multiplicity {
    OneToOne,
    OneToMany,
}

/// True linkage relation between an original and a protected dataset.
///
/// Used exclusively by evaluation operations; linkage operations never see it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pairs: Vec<(usize, usize)>,
    multiplicity: Multiplicity,
}

impl GroundTruth {
    pub fn new(mut pairs: Vec<(usize, usize)>, n_original: usize, n_protected: usize) -> Result<Self, DataError> {
        pairs.sort_unstable();
        pairs.dedup();
        for &(i, j) in &pairs {
            if i >= n_original || j >= n_protected {
                return Err(DataError::IndexOutOfRange(i, j));
            }
        }
        let mut orig_seen = HashSet::new();
        let mut prot_seen = HashSet::new();
        let mut one_to_one = true;
        for &(i, j) in &pairs {
            if !orig_seen.insert(i) || !prot_seen.insert(j) {
                one_to_one = false;
            }
        }
        let multiplicity = if one_to_one { Multiplicity::OneToOne } else { Multiplicity::OneToMany };
        Ok(Self { pairs, multiplicity })
    }

    /// Identity pairing over `n` rows (row i of the original corresponds to
    /// row i of the release).
    pub fn identity(n: usize) -> Self {
        Self { pairs: (0..n).map(|i| (i, i)).collect(), multiplicity: Multiplicity::OneToOne }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn multiplicity(&self) -> Multiplicity {
        self.multiplicity
    }

    /// Protected counterparts of original row `i`.
    pub fn matches_of(&self, i: usize) -> Vec<usize> {
        self.pairs.iter().filter(|&&(a, _)| a == i).map(|&(_, b)| b).collect()
    }

    /// Map from original row index to its protected counterparts.
    pub fn by_original(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(i, j) in &self.pairs {
            map.entry(i).or_default().push(j);
        }
        map
    }
}

/// Derive the true linkage relation by joining on equal hidden-id values.
pub fn ground_truth_from_hidden_id(dor: &Dataset, dpr: &Dataset) -> Result<GroundTruth, DataError> {
    let or_id = dor.schema().hidden_id().ok_or(DataError::MissingHiddenId)?;
    let pr_id = dpr.schema().hidden_id().ok_or(DataError::MissingHiddenId)?;
    let mut by_id: HashMap<String, Vec<usize>> = HashMap::new();
    for (j, row) in dpr.rows().iter().enumerate() {
        by_id.entry(row[pr_id].to_field()).or_default().push(j);
    }
    let mut pairs = Vec::new();
    for (i, row) in dor.rows().iter().enumerate() {
        if let Some(js) = by_id.get(&row[or_id].to_field()) {
            for &j in js {
                pairs.push((i, j));
            }
        }
    }
    GroundTruth::new(pairs, dor.n_rows(), dpr.n_rows())
}

fn parse_field(field: &str, kind: AttrKind, row: usize, column: &str) -> Result<Value, DataError> {
    if field.is_empty() {
        return Ok(Value::Null);
    }
    match kind {
        AttrKind::Numeric => field.parse::<f64>().map(Value::Number).map_err(|_| DataError::Parse {
            row,
            column: column.to_string(),
            detail: format!("expected a number, got {field:?}"),
        }),
        AttrKind::Categorical => Ok(Value::Text(field.to_string())),
        AttrKind::Timestamp => field.parse::<i64>().map(Value::Time).map_err(|_| DataError::Parse {
            row,
            column: column.to_string(),
            detail: format!("expected integer epoch seconds, got {field:?}"),
        }),
    }
}

/// Load a dataset from a headered CSV file, mapping columns by name.
pub fn load_dataset(path: &Path, schema: &AttributeSchema) -> Result<Dataset, DataError> {
    let path_str = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|source| DataError::Csv { path: path_str.clone(), source })?;
    let headers = reader
        .headers()
        .map_err(|source| DataError::Csv { path: path_str.clone(), source })?
        .clone();
    let header_names: Vec<String> = headers.iter().map(str::to_string).collect();
    let header_set: HashSet<&str> = header_names.iter().map(String::as_str).collect();
    for attr in schema.attrs() {
        if !header_set.contains(attr.name.as_str()) {
            return Err(DataError::HeaderMismatch(format!("missing column {:?}", attr.name)));
        }
    }
    for name in &header_names {
        if schema.position(name).is_none() {
            return Err(DataError::HeaderMismatch(format!("unexpected column {name:?}")));
        }
    }
    // Column positions in file order, keyed by schema order.
    let file_pos: Vec<usize> = schema
        .attrs()
        .iter()
        .map(|a| header_names.iter().position(|h| h == &a.name).unwrap())
        .collect();

    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|source| DataError::Csv { path: path_str.clone(), source })?;
        if record.len() != schema.len() {
            return Err(DataError::RowWidth { row: r + 1, got: record.len(), expected: schema.len() });
        }
        let mut row = Vec::with_capacity(schema.len());
        for (attr, &pos) in schema.attrs().iter().zip(&file_pos) {
            row.push(parse_field(&record[pos], attr.kind, r + 1, &attr.name)?);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    Dataset::new(Arc::new(schema.clone()), rows, &path_str)
}

/// Write a dataset as headered CSV with canonical field formatting.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    let path_str = path.display().to_string();
    let mut writer = csv::Writer::from_path(path)
        .map_err(|source| DataError::Csv { path: path_str.clone(), source })?;
    let header: Vec<&str> = dataset.schema().attrs().iter().map(|a| a.name.as_str()).collect();
    writer
        .write_record(&header)
        .map_err(|source| DataError::Csv { path: path_str.clone(), source })?;
    for row in dataset.rows() {
        let fields: Vec<String> = row.iter().map(Value::to_field).collect();
        writer
            .write_record(&fields)
            .map_err(|source| DataError::Csv { path: path_str.clone(), source })?;
    }
    writer.flush().map_err(|source| DataError::Io { path: path_str, source })
}

/// Parse a schema sidecar file: one `name kind role` line per attribute.
pub fn load_schema(path: &Path) -> Result<AttributeSchema, DataError> {
    let path_str = path.display().to_string();
    let text = std::fs::read_to_string(path)
        .map_err(|source| DataError::Io { path: path_str, source })?;
    let mut attrs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(DataError::InvalidSchema(format!(
                "line {}: expected `name kind role`, got {line:?}",
                lineno + 1
            )));
        }
        let kind = AttrKind::parse(parts[1]).ok_or_else(|| {
            DataError::InvalidSchema(format!("line {}: unknown kind {:?}", lineno + 1, parts[1]))
        })?;
        let role = AttrRole::parse(parts[2]).ok_or_else(|| {
            DataError::InvalidSchema(format!("line {}: unknown role {:?}", lineno + 1, parts[2]))
        })?;
        attrs.push(AttrDef::new(parts[0], kind, role));
    }
    AttributeSchema::new(attrs)
}

/// Write a schema sidecar file.
pub fn save_schema(schema: &AttributeSchema, path: &Path) -> Result<(), DataError> {
    let path_str = path.display().to_string();
    let mut out = String::new();
    for a in schema.attrs() {
        out.push_str(&format!("{} {} {}\n", a.name, a.kind.as_str(), a.role.as_str()));
    }
    std::fs::write(path, out).map_err(|source| DataError::Io { path: path_str, source })
}

/// Export ground truth as a two-column CSV of (original_index, protected_index).
pub fn save_ground_truth(gt: &GroundTruth, path: &Path) -> Result<(), DataError> {
    let path_str = path.display().to_string();
    let mut writer = csv::Writer::from_path(path)
        .map_err(|source| DataError::Csv { path: path_str.clone(), source })?;
    writer
        .write_record(["original_index", "protected_index"])
        .map_err(|source| DataError::Csv { path: path_str.clone(), source })?;
    for &(i, j) in gt.pairs() {
        writer
            .write_record([i.to_string(), j.to_string()])
            .map_err(|source| DataError::Csv { path: path_str.clone(), source })?;
    }
    writer.flush().map_err(|source| DataError::Io { path: path_str, source })
}

/// Load ground truth from a two-column index CSV.
pub fn load_ground_truth(path: &Path, n_original: usize, n_protected: usize) -> Result<GroundTruth, DataError> {
    let path_str = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|source| DataError::Csv { path: path_str.clone(), source })?;
    let mut pairs = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|source| DataError::Csv { path: path_str.clone(), source })?;
        let parse = |idx: usize, col: &str| -> Result<usize, DataError> {
            record
                .get(idx)
                .and_then(|f| f.parse::<usize>().ok())
                .ok_or_else(|| DataError::Parse {
                    row: r + 1,
                    column: col.to_string(),
                    detail: "expected a non-negative integer index".into(),
                })
        };
        pairs.push((parse(0, "original_index")?, parse(1, "protected_index")?));
    }
    GroundTruth::new(pairs, n_original, n_protected)
}
